"""Block palette.

Every block has a single output. Stateless blocks map their current inputs
(and the current time, for sources) to an output. Memory blocks emit their
pre-update state and advance that state from the current input, so their
output never depends on the input of the same step; this is what lets them
break feedback cycles.

New kinds are added by subclassing :class:`BlockKind` (or
:class:`MemoryKind`) and registering the class in ``KINDS`` under the name
used in model files.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import ClassVar, Sequence

from ..errors import InvalidBlock


@dataclass(frozen=True)
class BlockKind:
    name: ClassVar[str] = ""
    is_memory: ClassVar[bool] = False

    @property
    def n_in(self) -> int:
        return 1

    def output(self, u: Sequence[float], t: float) -> float:
        raise NotImplementedError

    def params(self) -> dict:
        return {}


@dataclass(frozen=True)
class MemoryKind(BlockKind):
    is_memory: ClassVar[bool] = True

    def initial_state(self) -> float:
        raise NotImplementedError

    def update(self, state: float, u: float, dt: float) -> float:
        raise NotImplementedError


@dataclass(frozen=True)
class Constant(BlockKind):
    name: ClassVar[str] = "constant"
    value: float = 0.0

    @property
    def n_in(self) -> int:
        return 0

    def output(self, u, t):
        return self.value

    def params(self):
        return {"value": self.value}


@dataclass(frozen=True)
class Step(BlockKind):
    name: ClassVar[str] = "step"
    t0: float = 0.0
    before: float = 0.0
    after: float = 1.0

    @property
    def n_in(self) -> int:
        return 0

    def output(self, u, t):
        # strict comparison: the new value is already in effect at t == t0
        return self.before if t < self.t0 else self.after

    def params(self):
        return {"t0": self.t0, "before": self.before, "after": self.after}


@dataclass(frozen=True)
class Gain(BlockKind):
    name: ClassVar[str] = "gain"
    k: float = 1.0

    def output(self, u, t):
        return self.k * u[0]

    def params(self):
        return {"k": self.k}


@dataclass(frozen=True)
class Sum(BlockKind):
    name: ClassVar[str] = "sum"
    signs: tuple[int, ...] = (1, 1)

    def __post_init__(self):
        object.__setattr__(self, "signs", tuple(int(s) for s in self.signs))
        if not self.signs:
            raise InvalidBlock("sum block needs at least one input sign")
        if any(s not in (1, -1) for s in self.signs):
            raise InvalidBlock(f"sum signs must be +1 or -1, got {self.signs}")

    @property
    def n_in(self) -> int:
        return len(self.signs)

    def output(self, u, t):
        acc = 0.0
        for s, x in zip(self.signs, u):
            if s > 0:
                acc += x
            else:
                acc -= x
        return acc

    def params(self):
        return {"signs": list(self.signs)}


@dataclass(frozen=True)
class Product(BlockKind):
    name: ClassVar[str] = "product"
    inputs: int = 2

    def __post_init__(self):
        if self.inputs < 1:
            raise InvalidBlock("product block needs at least one input")

    @property
    def n_in(self) -> int:
        return self.inputs

    def output(self, u, t):
        acc = u[0]
        for x in u[1:]:
            acc *= x
        return acc

    def params(self):
        return {"inputs": self.inputs}


@dataclass(frozen=True)
class Limiter(BlockKind):
    name: ClassVar[str] = "limiter"
    lo: float = -1.0
    hi: float = 1.0

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise InvalidBlock(f"limiter needs lo <= hi, got lo={self.lo}, hi={self.hi}")

    def output(self, u, t):
        x = u[0]
        if x < self.lo:
            return self.lo
        if x > self.hi:
            return self.hi
        return x

    def params(self):
        return {"lo": self.lo, "hi": self.hi}


FUNCTIONS = {
    "sin": math.sin,
    "cos": math.cos,
    "sqrt": math.sqrt,
    "square": lambda x: x * x,
    "abs": abs,
}


@dataclass(frozen=True)
class Function(BlockKind):
    """Stateless unary function from a fixed library (``FUNCTIONS``)."""

    name: ClassVar[str] = "function"
    fn: str = "sin"

    def __post_init__(self):
        if self.fn not in FUNCTIONS:
            raise InvalidBlock(f"unknown function {self.fn!r}; known: {sorted(FUNCTIONS)}")

    def output(self, u, t):
        try:
            return FUNCTIONS[self.fn](u[0])
        except ValueError:
            # math domain errors surface as a non-finite signal
            return math.nan

    def params(self):
        return {"fn": self.fn}


def Sine() -> Function:
    return Function("sin")


@dataclass(frozen=True)
class External(BlockKind):
    """Pass-through whose input port is fed from outside the model.

    ``slot`` is the position of the value in the exchange array of a split
    model; the engine itself treats the block as identity.
    """

    name: ClassVar[str] = "external"
    slot: int = 0

    def output(self, u, t):
        return u[0]

    def params(self):
        return {"slot": self.slot}


@dataclass(frozen=True)
class Integrator(MemoryKind):
    """Forward-Euler integrator."""

    name: ClassVar[str] = "integrator"
    initial: float = 0.0

    def initial_state(self):
        return self.initial

    def update(self, state, u, dt):
        return state + dt * u

    def params(self):
        return {"initial": self.initial}


@dataclass(frozen=True)
class FirstOrderLag(MemoryKind):
    """K / (1 + sT), discretized exactly under a zero-order hold."""

    name: ClassVar[str] = "lag"
    gain: float = 1.0
    time_constant: float = 1.0
    initial: float = 0.0
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if not self.time_constant > 0:
            raise InvalidBlock(f"lag time constant must be > 0, got {self.time_constant}")

    def decay(self, dt: float) -> float:
        a = self._cache.get(dt)
        if a is None:
            a = self._cache[dt] = math.exp(-dt / self.time_constant)
        return a

    def initial_state(self):
        return self.initial

    def update(self, state, u, dt):
        a = self.decay(dt)
        return a * state + (1.0 - a) * self.gain * u

    def params(self):
        return {"gain": self.gain, "time_constant": self.time_constant, "initial": self.initial}


@dataclass(frozen=True)
class UnitDelay(MemoryKind):
    name: ClassVar[str] = "unit_delay"
    initial: float = 0.0

    def initial_state(self):
        return self.initial

    def update(self, state, u, dt):
        return u

    def params(self):
        return {"initial": self.initial}


KINDS: dict[str, type[BlockKind]] = {
    cls.name: cls
    for cls in (Constant, Step, Gain, Sum, Product, Limiter, Function, External,
                Integrator, FirstOrderLag, UnitDelay)
}


def make_kind(name: str, params: dict | None = None) -> BlockKind:
    try:
        cls = KINDS[name]
    except KeyError:
        raise InvalidBlock(f"unknown block kind {name!r}; known: {sorted(KINDS)}") from None
    try:
        return cls(**(params or {}))
    except TypeError as exc:
        raise InvalidBlock(f"bad parameters for {name!r}: {exc}") from None


@dataclass(frozen=True)
class Block:
    id: int
    kind: BlockKind
    label: str = ""

    @property
    def n_in(self) -> int:
        return self.kind.n_in

    @property
    def n_out(self) -> int:
        return 1

    @property
    def is_memory(self) -> bool:
        return self.kind.is_memory
