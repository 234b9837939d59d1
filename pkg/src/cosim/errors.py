"""Exception hierarchy shared by every layer of the package."""


class CosimError(Exception):
    """Base class for all errors raised by this package."""


# -- model construction and simulation ---------------------------------------

class ModelError(CosimError):
    """A model is malformed or produced an invalid signal."""


class InvalidBlock(ModelError):
    pass


class BadPort(ModelError):
    pass


class DanglingPort(ModelError):
    def __init__(self, block: int, port: int):
        super().__init__(f"input port {port} of block {block} has no incoming wire")
        self.block = block
        self.port = port


class DuplicateDrive(ModelError):
    def __init__(self, block: int, port: int):
        super().__init__(f"input port {port} of block {block} is driven more than once")
        self.block = block
        self.port = port


class AlgebraicLoop(ModelError):
    def __init__(self, cycle: list[int]):
        path = " -> ".join(str(b) for b in [*cycle, cycle[0]])
        super().__init__(f"algebraic loop through blocks {path}")
        self.cycle = list(cycle)


class NonFiniteSignal(ModelError):
    def __init__(self, block: int, t: float, step: int | None = None):
        where = f" at step {step}" if step is not None else ""
        super().__init__(f"block {block} produced a non-finite value at t={t!r}{where}")
        self.block = block
        self.t = t
        self.step = step


class ShapeMismatch(CosimError, ValueError):
    pass


# -- shared-memory channel ---------------------------------------------------

class BridgeError(CosimError):
    """Failure of the shared-memory exchange channel."""


class NameInUse(BridgeError):
    pass


class CapacityExceeded(BridgeError, ValueError):
    pass


class OsFailure(BridgeError, OSError):
    pass


class Timeout(BridgeError, TimeoutError):
    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class VersionMismatch(BridgeError):
    pass


class BadMagic(BridgeError):
    pass


class ProtocolViolation(BridgeError):
    pass


class AbortReceived(BridgeError):
    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class HandlerFailure(BridgeError):
    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


# -- co-simulation orchestration --------------------------------------------

class NotABipartition(CosimError):
    pass


class BoundaryShapeMismatch(CosimError):
    pass


class SpawnFailure(CosimError):
    pass


class CosimFailed(CosimError):
    def __init__(self, message: str, returncode: int | None = None, stderr: str = ""):
        super().__init__(message)
        self.returncode = returncode
        self.stderr = stderr


class BadScenario(CosimError, ValueError):
    pass
