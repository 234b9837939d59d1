"""Lockstep two-process co-simulation over named shared memory."""

__version__ = "0.1.0"
