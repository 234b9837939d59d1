"""Lockstep master/follower exchange over a shared-memory segment.

Per step the master writes its inputs, step counter and time, then raises
the flag to INPUTS_READY. The follower notices, computes, writes its outputs
and sets OUTPUTS_READY, which the master is waiting for. SHUTDOWN (master)
and ABORT (either side) end the session.

Each side waits by polling the flag: it yields the CPU for a short window
(cheap hand-off when the peer answers quickly), then falls back to sleeping
``poll_interval`` between checks until the deadline.

Ordering: every payload byte is stored before the flag word. On x86/x86-64
(TSO) stores become visible to other cores in program order, so the reader
never sees a flag ahead of its payload. Weakly ordered CPUs would need
fences, which Python cannot emit.
"""

from __future__ import annotations

import enum
import logging
import os
import struct
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

from ..errors import (AbortReceived, BridgeError, HandlerFailure, ProtocolViolation, Timeout)
from .segment import (F64, OFF_DATA, OFF_FLAG, OFF_STEP, OFF_TIME, Segment, check_capacity,
                      check_name)

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT_MS = 5000
DEFAULT_POLL_INTERVAL = 50e-6
SPIN_WINDOW = 2e-3
FLAG_WORD = OFF_FLAG // 4


class Flag(enum.IntEnum):
    IDLE = 0
    INPUTS_READY = 1
    OUTPUTS_READY = 2
    SHUTDOWN = 3
    ABORT = 4


LEGAL_TRANSITIONS = frozenset({
    (Flag.IDLE, Flag.INPUTS_READY),
    (Flag.INPUTS_READY, Flag.OUTPUTS_READY),
    (Flag.OUTPUTS_READY, Flag.INPUTS_READY),
    *((f, Flag.SHUTDOWN) for f in Flag),
    *((f, Flag.ABORT) for f in Flag),
})


def is_legal(old: int, new: int) -> bool:
    return (old, new) in LEGAL_TRANSITIONS


class Role(enum.Enum):
    MASTER = "master"
    FOLLOWER = "follower"


@dataclass
class ExchangeRecord:
    step: int
    sim_time: float
    inputs: list[float]
    outputs: list[float] = field(default_factory=list)


class Channel:
    """One side of an exchange channel. Not safe for concurrent use."""

    def __init__(self, segment: Segment, role: Role, timeout_ms: float,
                 poll_interval: float = DEFAULT_POLL_INTERVAL):
        if not timeout_ms > 0:
            raise ValueError("timeout must be > 0")
        self.segment = segment
        self.role = role
        self.timeout_ms = timeout_ms
        self.poll_interval = poll_interval
        self.n_inputs, self.n_outputs = segment.counts
        self._in = struct.Struct(f"<{self.n_inputs}d")
        self._out = struct.Struct(f"<{self.n_outputs}d")
        self._off_out = OFF_DATA + 8 * self.n_inputs
        self._last_step: int | None = None
        self.exchanges = 0
        # every flag value this side wrote or observed, in order; None disables logging
        self.transitions: list[tuple[int, int]] | None = None
        self._seen = self._flag()

    @property
    def name(self) -> str:
        return self.segment.name

    @property
    def closed(self) -> bool:
        return self.segment.closed

    @property
    def timeout(self) -> float:
        return self.timeout_ms / 1000.0

    # -- flag helpers ----------------------------------------------------

    def _flag(self) -> int:
        return self.segment.words[FLAG_WORD]

    def flag(self) -> Flag:
        return Flag(self._flag())

    def _note(self, value: int) -> None:
        if value != self._seen:
            if self.transitions is not None:
                self.transitions.append((self._seen, value))
            self._seen = value

    def _set_flag(self, value: Flag) -> None:
        self._note(self._flag())
        self.segment.words[FLAG_WORD] = int(value)
        self._note(int(value))

    def _wait(self, wanted: frozenset[int], tolerated: frozenset[int], what: str,
              step: int | None) -> int:
        words = self.segment.words
        start = time.monotonic()
        deadline = start + self.timeout
        spin_until = start + SPIN_WINDOW
        while True:
            f = words[FLAG_WORD]
            if f in wanted:
                self._note(f)
                return f
            if f not in tolerated:
                self._note(f)
                if f == Flag.ABORT:
                    raise AbortReceived(f"peer aborted while waiting for {what}", step)
                raise ProtocolViolation(
                    f"{self.role.value} observed flag {_fmt(f)} while waiting for {what}")
            now = time.monotonic()
            if now >= deadline:
                raise Timeout(f"{self.role.value} timed out after {self.timeout_ms:g} ms "
                              f"waiting for {what}", step)
            if now < spin_until:
                os.sched_yield()
            else:
                time.sleep(self.poll_interval)

    def abort(self) -> None:
        if not self.closed and self._flag() != Flag.ABORT:
            self._set_flag(Flag.ABORT)

    # -- payload ---------------------------------------------------------

    def read_inputs(self) -> list[float]:
        return list(self._in.unpack_from(self.segment.buf, OFF_DATA))

    def read_outputs(self) -> list[float]:
        return list(self._out.unpack_from(self.segment.buf, self._off_out))

    # -- master ----------------------------------------------------------

    def master_exchange(self, step: int, sim_time: float, inputs: Sequence[float]) -> list[float]:
        if self.role is not Role.MASTER:
            raise ProtocolViolation("master_exchange called on a follower channel")
        if len(inputs) != self.n_inputs:
            raise ValueError(f"expected {self.n_inputs} inputs, got {len(inputs)}")
        if self._last_step is not None and step != self._last_step + 1:
            raise ProtocolViolation(f"step {step} does not follow {self._last_step}")

        f = self._flag()
        self._note(f)
        expected = Flag.IDLE if self._last_step is None else Flag.OUTPUTS_READY
        if f != expected:
            if f == Flag.ABORT:
                raise AbortReceived("peer aborted", step)
            raise ProtocolViolation(f"master found flag {_fmt(f)}, expected {expected.name}")

        buf = self.segment.buf
        self._in.pack_into(buf, OFF_DATA, *inputs)
        self.segment.write_u32(OFF_STEP, step & 0xFFFFFFFF)
        F64.pack_into(buf, OFF_TIME, sim_time)
        self._set_flag(Flag.INPUTS_READY)
        self._last_step = step

        self._wait(frozenset({Flag.OUTPUTS_READY}), frozenset({Flag.INPUTS_READY}),
                   f"outputs of step {step}", step)
        self.exchanges += 1
        return self.read_outputs()

    def shutdown(self) -> None:
        if not self.closed and self._flag() != Flag.ABORT:
            self._set_flag(Flag.SHUTDOWN)

    # -- follower --------------------------------------------------------

    def follower_serve(self, handler: Callable[[int, float, list[float]], Sequence[float]]) -> int:
        """Serve steps until SHUTDOWN; returns the number of steps served."""
        if self.role is not Role.FOLLOWER:
            raise ProtocolViolation("follower_serve called on a master channel")
        wanted = frozenset({Flag.INPUTS_READY, Flag.SHUTDOWN})
        idle = frozenset({Flag.IDLE, Flag.OUTPUTS_READY})
        buf = self.segment.buf
        served = 0
        while True:
            f = self._wait(wanted, idle, "inputs", self._last_step)
            if f == Flag.SHUTDOWN:
                return served
            step = self.segment.read_u32(OFF_STEP)
            sim_time = F64.unpack_from(buf, OFF_TIME)[0]
            if self._last_step is not None and step != (self._last_step + 1) & 0xFFFFFFFF:
                self.abort()
                raise ProtocolViolation(f"follower got step {step} after {self._last_step}")
            inputs = self.read_inputs()
            try:
                outputs = handler(step, sim_time, inputs)
                if len(outputs) != self.n_outputs:
                    raise ValueError(f"handler returned {len(outputs)} outputs, "
                                     f"channel carries {self.n_outputs}")
                self._out.pack_into(buf, self._off_out, *outputs)
            except Exception as exc:
                self.abort()
                raise HandlerFailure(f"handler failed at step {step}: {exc}", step) from exc
            self._last_step = step
            self._set_flag(Flag.OUTPUTS_READY)
            self.exchanges += 1
            served += 1

    # -- teardown --------------------------------------------------------

    def close(self) -> None:
        if self.closed:
            return
        if self.role is Role.MASTER:
            try:
                self.shutdown()
            except (BridgeError, ValueError):  # pragma: no cover - defensive
                pass
        self.segment.close()

    def __enter__(self) -> "Channel":
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        if exc_type is not None and not self.closed:
            self.abort()
        self.close()


def _fmt(f: int) -> str:
    try:
        return Flag(f).name
    except ValueError:
        return str(f)


def create_master(name: str, n_inputs: int, n_outputs: int,
                  timeout: float = DEFAULT_TIMEOUT_MS,
                  poll_interval: float = DEFAULT_POLL_INTERVAL) -> Channel:
    """Create the named segment and return the master side. ``timeout`` is in ms."""
    check_name(name)
    check_capacity(n_inputs, n_outputs)
    if not timeout > 0:
        raise ValueError("timeout must be > 0")
    seg = Segment.create(name, n_inputs, n_outputs)
    return Channel(seg, Role.MASTER, timeout, poll_interval)


def open_follower(name: str, timeout: float = DEFAULT_TIMEOUT_MS,
                  poll_interval: float = DEFAULT_POLL_INTERVAL) -> Channel:
    """Attach to a master's segment, retrying until ``timeout`` ms elapse."""
    check_name(name)
    if not timeout > 0:
        raise ValueError("timeout must be > 0")
    deadline = time.monotonic() + timeout / 1000.0
    while True:
        seg = Segment.open(name)
        if seg is not None:
            return Channel(seg, Role.FOLLOWER, timeout, poll_interval)
        if time.monotonic() >= deadline:
            raise Timeout(f"no segment named {name!r} appeared within {timeout:g} ms")
        time.sleep(min(1e-3, timeout / 1000.0))


def master_exchange(channel: Channel, step: int, sim_time: float,
                    inputs: Sequence[float]) -> list[float]:
    return channel.master_exchange(step, sim_time, inputs)


def follower_serve(channel: Channel,
                   handler: Callable[[int, float, list[float]], Sequence[float]]) -> int:
    return channel.follower_serve(handler)


def close(channel: Channel) -> None:
    channel.close()
