"""Fixed-step evaluation of a validated model."""

from __future__ import annotations

import math
from typing import Callable, Sequence

from ..errors import NonFiniteSignal, ShapeMismatch
from .model import Model
from .trace import SimConfig, Trace


class Stepper:
    """Evaluates one model step by step.

    Holds nothing but precomputed lookups, so a single model can be driven by
    several steppers. All mutable state is passed in and returned.
    """

    def __init__(self, model: Model):
        self.model = model
        self._kinds = [b.kind for b in model.blocks]
        self._order = model.eval_order
        self._drivers = model.drivers
        self._memory = model.memory_blocks
        self._stateless = [b for b in self._order if not self._kinds[b].is_memory]
        self._slot = {b: i for i, b in enumerate(self._memory)}
        self._out = [p.block for p in model.outputs]
        self._n_inputs = len(model.inputs)

    def step(self, state: Sequence[float], ext: Sequence[float], t: float, dt: float
             ) -> tuple[list[float], list[float]]:
        if len(ext) != self._n_inputs:
            raise ShapeMismatch(f"expected {self._n_inputs} external inputs, got {len(ext)}")
        kinds = self._kinds
        sig = [0.0] * len(kinds)
        slot = self._slot
        # memory outputs are known before anything is evaluated
        for b in self._memory:
            sig[b] = state[slot[b]]
        for b in self._stateless:
            u = [sig[d] if d >= 0 else ext[-d - 1] for d in self._drivers[b]]
            y = kinds[b].output(u, t)
            if not math.isfinite(y):
                raise NonFiniteSignal(b, t)
            sig[b] = y

        nxt = []
        for b in self._memory:
            d = self._drivers[b][0]
            u = sig[d] if d >= 0 else ext[-d - 1]
            s = kinds[b].update(state[slot[b]], u, dt)
            if not math.isfinite(s):
                raise NonFiniteSignal(b, t)
            nxt.append(s)
        return [sig[b] for b in self._out], nxt


def eval_step(model: Model, state: Sequence[float], external_inputs: Sequence[float],
              t: float, dt: float) -> tuple[list[float], list[float]]:
    """Outputs of ``model`` at time ``t`` and the state for ``t + dt``."""
    return Stepper(model).step(state, external_inputs, t, dt)


def n_steps(dt: float, t_end: float) -> int:
    return int(round(t_end / dt))


def simulate(model: Model, config: SimConfig,
             input_fn: Callable[[float], Sequence[float]] | None = None) -> Trace:
    stepper = Stepper(model)
    names = model.column_names()
    recorded = config.recorded if config.recorded is not None else range(len(model.outputs))
    recorded = list(recorded)
    state = model.initial_state()
    no_inputs: list[float] = []
    rows = []
    dt = config.dt
    for k in range(config.steps + 1):
        t = k * dt
        ext = input_fn(t) if input_fn is not None else no_inputs
        try:
            out, state = stepper.step(state, ext, t, dt)
        except NonFiniteSignal as exc:
            raise NonFiniteSignal(exc.block, t, k) from None
        rows.append((t, [out[i] for i in recorded]))
    return Trace(dt, [names[i] for i in recorded], rows)
