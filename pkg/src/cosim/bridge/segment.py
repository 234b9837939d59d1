"""Named shared-memory segments and the exchange wire layout.

Layout (little-endian)::

    offset  size  field
         0     4  magic "CSIM"
         4     4  version (u32)
         8     4  flag (u32)
        12     4  step (u32)
        16     8  sim_time (f64)
        24     4  n_inputs (u32)
        28     4  n_outputs (u32)
        32   8*n  inputs (f64[n_inputs])
         .   8*m  outputs (f64[n_outputs])

Segments are POSIX shared-memory objects. The user-facing name is mapped to
an OS name by :func:`os_name`: on Linux it becomes ``/<name>``; on macOS,
whose object names are limited to 31 bytes, long names are replaced by a
hash. The creator holds an exclusive ``flock`` on the object for its whole
lifetime, which lets a later creator tell a live segment from one left
behind by a crashed process.

Header words are read and written through a native ``uint32`` view, so each
access is one aligned 4-byte load or store. ``struct.pack_into`` is not
usable for the flag: it clears the target bytes before filling them, and a
peer polling at that moment reads a transient 0.
"""

from __future__ import annotations

import errno
import fcntl
import hashlib
import mmap
import os
import re
import struct
import sys

from ..errors import BadMagic, CapacityExceeded, NameInUse, OsFailure, VersionMismatch

try:
    import _posixshmem
except ImportError:  # pragma: no cover - non-POSIX platforms
    _posixshmem = None

MAGIC = b"CSIM"
VERSION = 1
HEADER = struct.Struct("<4sIIIdII")
HEADER_SIZE = HEADER.size  # 32

OFF_MAGIC = 0
OFF_VERSION = 4
OFF_FLAG = 8
OFF_STEP = 12
OFF_TIME = 16
OFF_N_INPUTS = 24
OFF_N_OUTPUTS = 28
OFF_DATA = 32

MAX_INPUTS = 1800
MAX_OUTPUTS = 600

U32 = struct.Struct("<I")
F64 = struct.Struct("<d")

_NAME_RE = re.compile(r"[A-Za-z0-9._-]{1,128}")

assert HEADER_SIZE == 32


def check_name(name: str) -> None:
    if not isinstance(name, str) or not _NAME_RE.fullmatch(name) or len(name.encode()) > 128:
        raise ValueError(f"invalid channel name {name!r}: need 1-128 characters from [A-Za-z0-9._-]")


def check_capacity(n_inputs: int, n_outputs: int) -> None:
    if n_inputs < 0 or n_outputs < 0:
        raise ValueError("signal counts must be non-negative")
    if n_inputs > MAX_INPUTS or n_outputs > MAX_OUTPUTS:
        raise CapacityExceeded(
            f"{n_inputs} inputs / {n_outputs} outputs exceeds the {MAX_INPUTS}/{MAX_OUTPUTS} limit")


def segment_size(n_inputs: int, n_outputs: int) -> int:
    return HEADER_SIZE + 8 * (n_inputs + n_outputs)


def os_name(name: str) -> str:
    if sys.platform == "darwin" and len(name) > 30:
        return "/cs" + hashlib.sha1(name.encode()).hexdigest()[:24]
    return "/" + name


def _require_posix() -> None:
    if _posixshmem is None:
        raise OsFailure("named shared memory needs a POSIX platform (_posixshmem unavailable)")
    if sys.byteorder != "little":
        raise OsFailure("the segment layout is little-endian; big-endian hosts are not supported")


class Segment:
    """A mapped shared-memory object; thin wrapper over fd + mmap."""

    def __init__(self, name: str, fd: int, buf: mmap.mmap, owner: bool):
        self.name = name
        self.fd = fd
        self.buf = buf
        self.owner = owner
        self.closed = False
        self._view = memoryview(buf)
        self.words = self._view.cast("I")   # segment sizes are multiples of 4

    @property
    def size(self) -> int:
        return len(self.buf)

    # -- lifecycle -------------------------------------------------------

    @classmethod
    def create(cls, name: str, n_inputs: int, n_outputs: int) -> "Segment":
        check_name(name)
        check_capacity(n_inputs, n_outputs)
        _require_posix()
        path = os_name(name)
        flags = os.O_CREAT | os.O_EXCL | os.O_RDWR
        try:
            fd = _posixshmem.shm_open(path, flags, 0o600)
        except FileExistsError:
            _reclaim_if_stale(path, name)
            try:
                fd = _posixshmem.shm_open(path, flags, 0o600)
            except FileExistsError:
                raise NameInUse(f"shared-memory segment {name!r} is in use") from None
            except OSError as exc:
                raise OsFailure(f"cannot create segment {name!r}: {exc}") from exc
        except OSError as exc:
            raise OsFailure(f"cannot create segment {name!r}: {exc}") from exc

        try:
            fcntl.flock(fd, fcntl.LOCK_EX | fcntl.LOCK_NB)
            size = segment_size(n_inputs, n_outputs)
            os.ftruncate(fd, size)  # fresh pages read as zero
            buf = mmap.mmap(fd, size)
        except OSError as exc:
            os.close(fd)
            _unlink(path)
            raise OsFailure(f"cannot map segment {name!r}: {exc}") from exc

        HEADER.pack_into(buf, 0, b"\0\0\0\0", VERSION, 0, 0, 0.0, n_inputs, n_outputs)
        # magic last: an opener treats an all-zero magic as "not ready yet"
        buf[OFF_MAGIC:OFF_MAGIC + 4] = MAGIC
        return cls(name, fd, buf, owner=True)

    @classmethod
    def open(cls, name: str) -> "Segment | None":
        """Attach to an existing, initialized segment; None if not there yet."""
        check_name(name)
        _require_posix()
        try:
            fd = _posixshmem.shm_open(os_name(name), os.O_RDWR, 0o600)
        except FileNotFoundError:
            return None
        except OSError as exc:
            raise OsFailure(f"cannot open segment {name!r}: {exc}") from exc
        try:
            size = os.fstat(fd).st_size
            if size < HEADER_SIZE:
                os.close(fd)
                return None
            buf = mmap.mmap(fd, size)
        except OSError as exc:
            os.close(fd)
            raise OsFailure(f"cannot map segment {name!r}: {exc}") from exc

        magic = bytes(buf[OFF_MAGIC:OFF_MAGIC + 4])
        if magic == b"\0\0\0\0":
            buf.close()
            os.close(fd)
            return None
        seg = cls(name, fd, buf, owner=False)
        if magic != MAGIC:
            seg.close()
            raise BadMagic(f"segment {name!r} has magic {magic!r}, expected {MAGIC!r}")
        version = seg.read_u32(OFF_VERSION)
        if version != VERSION:
            seg.close()
            raise VersionMismatch(f"segment {name!r} has layout version {version}, expected {VERSION}")
        n_in, n_out = seg.counts
        if size < segment_size(n_in, n_out):
            seg.close()
            return None
        return seg

    def close(self) -> None:
        if self.closed:
            return
        self.closed = True
        self.words.release()
        self._view.release()
        self.buf.close()
        os.close(self.fd)  # also drops the creator's flock
        if self.owner:
            _unlink(os_name(self.name))

    # -- field access ----------------------------------------------------

    def read_u32(self, off: int) -> int:
        return self.words[off >> 2]

    def write_u32(self, off: int, value: int) -> None:
        self.words[off >> 2] = value

    @property
    def counts(self) -> tuple[int, int]:
        return self.read_u32(OFF_N_INPUTS), self.read_u32(OFF_N_OUTPUTS)

    def header(self) -> tuple:
        """(magic, version, flag, step, sim_time, n_inputs, n_outputs)"""
        return HEADER.unpack_from(self.buf, 0)


def _unlink(path: str) -> None:
    try:
        _posixshmem.shm_unlink(path)
    except FileNotFoundError:
        pass


def _reclaim_if_stale(path: str, name: str) -> None:
    try:
        fd = _posixshmem.shm_open(path, os.O_RDWR, 0o600)
    except FileNotFoundError:
        return
    except OSError as exc:
        raise NameInUse(f"segment {name!r} exists and cannot be inspected: {exc}") from exc
    try:
        fcntl.flock(fd, fcntl.LOCK_EX | fcntl.LOCK_NB)
    except OSError as exc:
        os.close(fd)
        if exc.errno in (errno.EWOULDBLOCK, errno.EAGAIN):
            raise NameInUse(f"shared-memory segment {name!r} is in use") from None
        raise NameInUse(f"segment {name!r} exists and its owner cannot be determined: {exc}") from exc
    # nobody holds the creator lock: the owner died without cleaning up
    _unlink(path)
    os.close(fd)
