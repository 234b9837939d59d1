"""Shared-memory exchange channel between a master and a follower process."""

from .channel import (DEFAULT_POLL_INTERVAL, DEFAULT_TIMEOUT_MS, LEGAL_TRANSITIONS, Channel,
                      ExchangeRecord, Flag, Role, close, create_master, follower_serve, is_legal,
                      master_exchange, open_follower)
from .segment import HEADER_SIZE, MAGIC, MAX_INPUTS, MAX_OUTPUTS, VERSION, Segment, segment_size

__all__ = [
    "DEFAULT_POLL_INTERVAL", "DEFAULT_TIMEOUT_MS", "LEGAL_TRANSITIONS", "Channel",
    "ExchangeRecord", "Flag", "Role", "close", "create_master", "follower_serve", "is_legal",
    "master_exchange", "open_follower", "HEADER_SIZE", "MAGIC", "MAX_INPUTS", "MAX_OUTPUTS",
    "VERSION", "Segment", "segment_size",
]
