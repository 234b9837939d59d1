"""Single-machine power system used as the co-simulation workload.

Classical generator (constant voltage behind transient reactance) tied to an
infinite bus through a line reactance, with a first-order AVR acting on the
internal voltage and a droop governor/turbine acting on mechanical power.
All quantities are per-unit on ``base_mva``; angles in radians; frequency
deviation in per-unit of nominal speed.

    d(delta)/dt = w_s * dw
    d(dw)/dt    = (Pm - Pe - D*dw) / (2H)
    Pe          = E' V / (x'd + x_line) * sin(delta)   (+ switched load)
    Vt          = |(E' x_line e^{j delta} + V x'd)| / (x'd + x_line)
    E'          = E'0 + lag(K_A, T_A)(V_ref - Vt)
    Pm          = P0 + lag(1, T_G)(-dw / R)
"""

from __future__ import annotations

import cmath
import json
import math
from dataclasses import asdict, dataclass, replace
from enum import Enum
from pathlib import Path

from .engine import (Block, Constant, FirstOrderLag, Function, Gain, Integrator, Model, Port,
                     Product, Step, Sum, Wire, rebuild, validate_and_order)
from .errors import BadScenario
from .orchestrator import CutSet

OUTPUT_NAMES = ("frequency", "bus_voltage", "turbine_power")


@dataclass(frozen=True)
class GeneratorParams:
    v_nom: float = 13.8            # kV
    inertia: float = 2.4922        # H, s
    gen_mw: float = 20.0
    gen_mvar: float = 20.82
    xd_transient: float = 0.5897   # pu
    damping: float = 10.0          # pu torque / pu speed
    base_mva: float = 25.0
    x_line: float = 0.3            # pu, generator terminal to infinite bus
    f_nom: float = 50.0            # Hz
    droop: float = 0.05
    governor_tc: float = 2.0       # s
    avr_gain: float = 5.0
    avr_tc: float = 0.5            # s
    governor: bool = True
    avr: bool = True

    def __post_init__(self):
        if not self.inertia > 0:
            raise ValueError("inertia constant H must be > 0")
        if not self.base_mva > 0:
            raise ValueError("base_mva must be > 0")
        if not self.xd_transient > 0:
            raise ValueError("transient reactance must be > 0")
        if not self.x_line > 0:
            raise ValueError("line reactance must be > 0")
        if not self.droop > 0:
            raise ValueError("droop must be > 0")

    @property
    def w_s(self) -> float:
        return 2.0 * math.pi * self.f_nom

    @property
    def x_total(self) -> float:
        return self.xd_transient + self.x_line


@dataclass(frozen=True)
class OperatingPoint:
    p0: float       # electrical = mechanical power, pu
    q0: float
    e0: float       # internal voltage magnitude
    v_inf: float    # infinite-bus voltage magnitude
    delta0: float   # internal angle relative to the infinite bus
    vt0: float      # terminal voltage magnitude


def operating_point(params: GeneratorParams) -> OperatingPoint:
    """Steady state with the terminal at 1.0 pu delivering gen_mw / gen_mvar."""
    p = params.gen_mw / params.base_mva
    q = params.gen_mvar / params.base_mva
    vt = 1.0 + 0.0j
    i = (p - 1j * q) / vt.conjugate()
    e = vt + 1j * params.xd_transient * i
    v = vt - 1j * params.x_line * i
    delta = cmath.phase(e) - cmath.phase(v)
    return OperatingPoint(p, q, abs(e), abs(v), delta, abs(vt))


# block labels used by scenarios and the standard cuts
L_DELTA = "swing.delta"
L_OMEGA = "swing.dw"
L_PE_SUM = "pe.total"
L_PE_TIE = "pe.tie"
L_VT = "vt"
L_AVR_ERR = "avr.error"
L_AVR_LAG = "avr.lag"
L_GOV_DROOP = "gov.droop"
L_GOV_LAG = "gov.lag"
L_PM = "pm"
L_GATE = "fault.gate"


class _Builder:
    def __init__(self):
        self.blocks: list[Block] = []
        self.wires: list[Wire] = []

    def add(self, kind, label: str = "", *drivers: int) -> int:
        bid = len(self.blocks)
        self.blocks.append(Block(bid, kind, label))
        for port, src in enumerate(drivers):
            self.wire(src, bid, port)
        return bid

    def wire(self, src: int, dst: int, port: int = 0) -> None:
        self.wires.append(Wire(Port(src, 0), Port(dst, port)))


def build_smib_model(params: GeneratorParams = GeneratorParams()) -> Model:
    op = operating_point(params)
    b = _Builder()
    two_h = 2.0 * params.inertia

    # forward references are wired after all blocks exist
    omega = b.add(Integrator(0.0), L_OMEGA)
    delta = b.add(Integrator(op.delta0), L_DELTA)
    b.wire(b.add(Gain(params.w_s), "swing.ws", omega), delta)

    sin_d = b.add(Function("sin"), "sin_delta", delta)
    cos_d = b.add(Function("cos"), "cos_delta", delta)

    if params.avr:
        vref = b.add(Constant(op.vt0), "avr.ref")
        avr_err = b.add(Sum((1, -1)), L_AVR_ERR)
        b.wire(vref, avr_err, 0)
        avr_lag = b.add(FirstOrderLag(params.avr_gain, params.avr_tc, 0.0), L_AVR_LAG, avr_err)
        e_prime = b.add(Sum((1, 1)), "e_prime", b.add(Constant(op.e0), "e_prime.0"), avr_lag)
    else:
        avr_err = None
        e_prime = b.add(Constant(op.e0), "e_prime")

    e_sin = b.add(Product(2), "e_sin", e_prime, sin_d)
    e_cos = b.add(Product(2), "e_cos", e_prime, cos_d)
    pe_tie = b.add(Gain(op.v_inf / params.x_total), L_PE_TIE, e_sin)

    # terminal voltage: |E' x_l e^{j delta} + V x'd| / x_total
    kx = params.x_line / params.x_total
    re = b.add(Sum((1, 1)), "vt.re",
               b.add(Gain(kx), "vt.re.e", e_cos),
               b.add(Constant(op.v_inf * params.xd_transient / params.x_total), "vt.re.v"))
    im = b.add(Gain(kx), "vt.im", e_sin)
    mag2 = b.add(Sum((1, 1)), "vt.mag2",
                 b.add(Function("square"), "vt.re2", re),
                 b.add(Function("square"), "vt.im2", im))
    vt = b.add(Function("sqrt"), L_VT, mag2)
    if avr_err is not None:
        b.wire(vt, avr_err, 1)

    pe = b.add(Sum((1,)), L_PE_SUM, pe_tie)

    p0 = b.add(Constant(op.p0), "pm.0")
    if params.governor:
        droop = b.add(Gain(-1.0 / params.droop), L_GOV_DROOP, omega)
        gov = b.add(FirstOrderLag(1.0, params.governor_tc, 0.0), L_GOV_LAG, droop)
        pm = b.add(Sum((1, 1)), L_PM, p0, gov)
    else:
        pm = b.add(Sum((1,)), L_PM, p0)

    accel = b.add(Sum((1, -1, -1)), "swing.accel", pm, pe,
                  b.add(Gain(params.damping), "swing.damping", omega))
    b.wire(b.add(Gain(1.0 / two_h), "swing.inv2h", accel), omega)

    return validate_and_order(b.blocks, b.wires, (),
                              [(omega, 0), (vt, 0), (pm, 0)], OUTPUT_NAMES)


# -- scenarios ----------------------------------------------------------------

class ScenarioKind(str, Enum):
    LOAD_STEP = "load_step"
    FAULT = "fault"


@dataclass(frozen=True)
class Scenario:
    kind: ScenarioKind
    event_time: float
    clear_time: float | None = None
    magnitude_mw: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", ScenarioKind(self.kind))

    def check(self, t_end: float | None = None) -> None:
        if not self.event_time > 0:
            raise BadScenario(f"event_time must be > 0, got {self.event_time}")
        if t_end is not None and not self.event_time < t_end:
            raise BadScenario(f"event_time {self.event_time} is outside the horizon (t_end={t_end})")
        if self.kind is ScenarioKind.FAULT:
            if self.clear_time is None or not self.clear_time > self.event_time:
                raise BadScenario("a fault needs clear_time > event_time")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.value
        return d

    @classmethod
    def from_dict(cls, doc: dict) -> "Scenario":
        try:
            return cls(doc["kind"], float(doc["event_time"]),
                       None if doc.get("clear_time") is None else float(doc["clear_time"]),
                       float(doc.get("magnitude_mw", 0.0)))
        except (KeyError, ValueError) as exc:
            raise BadScenario(f"malformed scenario: {exc}") from None

    @classmethod
    def load(cls, path: str | Path) -> "Scenario":
        return cls.from_dict(json.loads(Path(path).read_text()))


LOAD_STEP = Scenario(ScenarioKind.LOAD_STEP, 0.2, None, 5.0)
FAULT = Scenario(ScenarioKind.FAULT, 0.1, 0.2)
SCENARIOS = {"load_step": LOAD_STEP, "fault": FAULT}


def apply_scenario(model: Model, scenario: Scenario, params: GeneratorParams = GeneratorParams(),
                   t_end: float | None = None) -> Model:
    scenario.check(t_end)
    blocks = list(model.blocks)
    wires = list(model.wires)

    def add(kind, label):
        blk = Block(len(blocks), kind, label)
        blocks.append(blk)
        return blk.id

    if scenario.kind is ScenarioKind.LOAD_STEP:
        pe = model.block_by_label(L_PE_SUM)
        signs = pe.kind.signs
        blocks[pe.id] = Block(pe.id, Sum((*signs, 1)), pe.label)
        step = add(Step(scenario.event_time, 0.0, scenario.magnitude_mw / params.base_mva), "load.step")
        wires.append(Wire(Port(step, 0), Port(pe.id, len(signs))))
    else:
        # gate = 1 outside [event_time, clear_time), 0 inside
        on = add(Step(scenario.event_time, 1.0, 0.0), "fault.on")
        off = add(Step(scenario.clear_time, 0.0, 1.0), "fault.off")
        gate = add(Sum((1, 1)), L_GATE)
        wires += [Wire(Port(on, 0), Port(gate, 0)), Wire(Port(off, 0), Port(gate, 1))]
        # the fault collapses the terminal voltage and the power carried across the tie
        outputs = list(model.outputs)
        for label in (L_VT, L_PE_TIE):
            src = model.block_by_label(label).id
            mul = add(Product(2), f"fault.{label}")
            for i, w in enumerate(wires):
                if w.src.block == src:
                    wires[i] = Wire(Port(mul, 0), w.dst)
            wires += [Wire(Port(src, 0), Port(mul, 0)), Wire(Port(gate, 0), Port(mul, 1))]
            outputs = [Port(mul, 0) if p.block == src else p for p in outputs]
        return rebuild(model, blocks=blocks, wires=wires, outputs=outputs)
    return rebuild(model, blocks=blocks, wires=wires)


# -- standard cuts ------------------------------------------------------------

def standard_cuts(model: Model) -> dict[str, CutSet]:
    """Named cuts that move controller blocks to the follower.

    "avr": the AVR lag; "governor": droop gain and turbine lag; "both": both.
    Every wire entering or leaving those blocks is cut. Models lacking the
    labels (e.g. the AVR or governor disabled) simply omit that cut.
    """
    groups = {}
    if model.has_label(L_AVR_LAG):
        groups["avr"] = {model.block_by_label(L_AVR_LAG).id}
    if model.has_label(L_GOV_LAG):
        groups["governor"] = {model.block_by_label(L_GOV_DROOP).id, model.block_by_label(L_GOV_LAG).id}
    if len(groups) == 2:
        groups["both"] = groups["avr"] | groups["governor"]
    return {name: CutSet.around(model, members, name) for name, members in groups.items()}


def testbed_model(scenario: Scenario | str | None = None,
                  params: GeneratorParams = GeneratorParams()) -> Model:
    model = build_smib_model(params)
    if scenario is None:
        return model
    if isinstance(scenario, str):
        scenario = SCENARIOS[scenario]
    return apply_scenario(model, scenario, params)


def with_params(**changes) -> GeneratorParams:
    return replace(GeneratorParams(), **changes)
