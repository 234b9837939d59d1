import json

import numpy as np
import pytest
import sympy as sp

from cosim.engine import Port, SimConfig, Stepper, compare_traces, rebuild, simulate
from cosim.errors import BadScenario
from cosim.orchestrator import split
from cosim import testbed as tb

P = tb.GeneratorParams()
OP = tb.operating_point(P)


def probe(model, *labels):
    """Same model with the labelled blocks exposed as outputs."""
    outs = [Port(model.block_by_label(l).id, 0) for l in labels]
    return rebuild(model, outputs=outs, output_names=list(labels))


def test_generator_data_reaches_the_model():
    m = tb.build_smib_model()
    inv2h = m.block_by_label("swing.inv2h").kind
    assert inv2h.k == pytest.approx(1 / (2 * 2.4922))
    assert OP.p0 == pytest.approx(20 / 25) and OP.q0 == pytest.approx(20.82 / 25)
    tie = m.block_by_label(tb.L_PE_TIE).kind
    assert tie.k == pytest.approx(OP.v_inf / (0.5897 + 0.3))
    assert m.column_names() == ["frequency", "bus_voltage", "turbine_power"]


def test_operating_point_is_consistent():
    # power and terminal voltage recomputed from E', V and delta
    e = OP.e0 * np.exp(1j * OP.delta0)
    i = (e - OP.v_inf) / (1j * P.x_total)
    vt = e - 1j * P.xd_transient * i
    assert abs(vt) == pytest.approx(1.0, abs=1e-12)
    s = vt * np.conj(i)
    assert s.real == pytest.approx(OP.p0, abs=1e-12) and s.imag == pytest.approx(OP.q0, abs=1e-12)


def test_equilibrium_power_matches_rating():
    m = probe(tb.build_smib_model(), tb.L_PE_SUM, tb.L_VT, tb.L_PM)
    out, nxt = Stepper(m).step(m.initial_state(), [], 0.0, 1e-3)
    assert abs(out[0] - P.gen_mw / P.base_mva) < 1e-9
    assert abs(out[1] - 1.0) < 1e-9
    # every state derivative vanishes at t=0
    assert max(abs(a - b) for a, b in zip(nxt, m.initial_state())) / 1e-3 < 1e-9


def test_equilibrium_drift_over_10s():
    v = simulate(tb.build_smib_model(), SimConfig(1e-3, 10.0)).values()
    assert np.abs(v - v[0]).max() < 1e-9


def test_zero_load_step_is_undisturbed():
    cfg = SimConfig(1e-3, 2.0)
    base = simulate(tb.build_smib_model(), cfg)
    zero = simulate(tb.apply_scenario(tb.build_smib_model(), tb.Scenario("load_step", 0.2, None, 0.0)), cfg)
    r = compare_traces(base, zero, 0.0)
    assert r.passed


def test_load_step_dips_frequency_then_recovers():
    tr = simulate(tb.testbed_model("load_step"), SimConfig(1e-3, 10.0))
    f = tr.column("frequency")
    t = tr.times
    assert np.abs(f[t <= 0.2 + 1e-12]).max() < 1e-9
    assert np.all(f[(t > 0.2 + 1e-9) & (t < 0.4)] < 0)
    assert f.min() < -1e-4
    assert abs(f[-1]) < 0.05 * abs(f.min())
    pm = tr.column("turbine_power")
    assert pm.max() > OP.p0 + 1e-4       # governor picks up load during the dip


def test_load_step_steady_state_matches_algebraic_solution():
    # steady state of the implemented diagram: dw = 0, governor lag at rest, Pm = P0,
    # tie power carries P0 minus the switched load, AVR holds E' = E0 + K_A (Vref - Vt)
    d, e = sp.symbols("d e")
    kx = P.x_line / P.x_total
    vt = sp.sqrt((kx * e * sp.cos(d) + OP.v_inf * P.xd_transient / P.x_total) ** 2
                 + (kx * e * sp.sin(d)) ** 2)
    load = 5.0 / P.base_mva
    sol = sp.nsolve([e * OP.v_inf / P.x_total * sp.sin(d) + load - OP.p0,
                     e - OP.e0 - P.avr_gain * (OP.vt0 - vt)],
                    [d, e], [OP.delta0, OP.e0], prec=30)
    vt_ss = float(vt.subs({d: sol[0], e: sol[1]}))

    tr = simulate(tb.testbed_model("load_step"), SimConfig(1e-3, 60.0))
    f, v, pm = tr.rows[-1][1]
    assert abs(f) < 1e-6
    assert abs(v - vt_ss) < 1e-6
    assert abs(pm - OP.p0) < 1e-6


def test_fault_collapses_voltage_then_recovers():
    tr = simulate(tb.testbed_model("fault"), SimConfig(1e-3, 5.0))
    t, v = tr.times, tr.column("bus_voltage")
    during = (t >= 0.1 - 1e-9) & (t < 0.2 - 1e-9)
    assert np.abs(v[during]).max() < 1e-12
    assert np.all(v[t < 0.1 - 1e-9] == pytest.approx(1.0, abs=1e-9))
    assert np.all(v[t > 0.2 + 1e-9] > 0.8)
    assert abs(v[-1] - 1.0) < 0.02
    # the machine accelerates while no power leaves it
    assert tr.column("frequency")[np.searchsorted(t, 0.2)] > 0


def test_undamped_swing_is_sustained():
    # lossless swing: no damping, no controllers; forward Euler adds a slow O(dt) growth
    p = tb.with_params(damping=0.0, governor=False, avr=False)
    m = tb.testbed_model("load_step", p)

    def troughs(dt):
        f = simulate(m, SimConfig(dt, 5.0)).values()[:, 0]
        i = np.arange(1, len(f) - 1)
        k = i[(f[i] < f[i - 1]) & (f[i] <= f[i + 1]) & (f[i] < 0)]
        return f[k], f.max()

    lows, high = troughs(5e-5)
    assert len(lows) >= 6
    growth = lows[-1] / lows[0]
    assert 1.0 <= growth < 1.02
    assert high == pytest.approx(-lows.min(), rel=0.02)

    lows2, _ = troughs(1e-4)
    assert lows2[-1] / lows2[0] - 1 > growth - 1       # growth shrinks with dt

    damped = simulate(tb.testbed_model("load_step"), SimConfig(1e-3, 5.0)).column("frequency")
    assert abs(damped[-1]) < 0.1 * abs(damped.min())


def test_time_step_refinement_is_first_order():
    m = tb.testbed_model("load_step")

    def sample(dt):
        return simulate(m, SimConfig(dt, 1.0)).values()[:: round(0.02 / dt)]

    ref = sample(1e-5)
    errs = [np.abs(sample(dt) - ref).max() for dt in (2e-3, 1e-3, 5e-4)]
    for a, b in zip(errs, errs[1:]):
        assert 1.5 <= a / b <= 2.5


def test_standard_cuts():
    m = tb.build_smib_model()
    cuts = tb.standard_cuts(m)
    assert sorted(cuts) == ["avr", "both", "governor"]
    for cut in cuts.values():
        split(m, cut)
    plan = split(m, cuts["governor"])
    inner = sorted(b.label for b in plan.follower_model.blocks if b.kind.__class__.__name__ != "External")
    assert inner == [tb.L_GOV_DROOP, tb.L_GOV_LAG]
    assert len(cuts["both"].wires) == len(cuts["avr"].wires) + len(cuts["governor"].wires)


def test_boundary_signals_are_zero_at_equilibrium():
    m = tb.build_smib_model()
    for cut in tb.standard_cuts(m).values():
        srcs = sorted({m.wires[i].src.block for i in cut.wires})
        pm = probe(m, *[m.blocks[b].label for b in srcs])
        out, _ = Stepper(pm).step(pm.initial_state(), [], 0.0, 1e-3)
        assert max(abs(x) for x in out) < 1e-9


def test_cuts_omitted_when_controller_disabled():
    m = tb.build_smib_model(tb.with_params(avr=False))
    assert sorted(tb.standard_cuts(m)) == ["governor"]


@pytest.mark.parametrize("sc", [
    tb.Scenario("load_step", 0.0, None, 5.0),
    tb.Scenario("load_step", 12.0, None, 5.0),
    tb.Scenario("fault", 0.1, None),
    tb.Scenario("fault", 0.2, 0.1),
])
def test_bad_scenarios(sc):
    with pytest.raises(BadScenario):
        tb.apply_scenario(tb.build_smib_model(), sc, t_end=10.0)


def test_scenario_json(tmp_path):
    for sc in tb.SCENARIOS.values():
        path = tmp_path / "s.json"
        path.write_text(json.dumps(sc.to_dict()))
        assert tb.Scenario.load(path) == sc
    with pytest.raises(BadScenario):
        tb.Scenario.from_dict({"kind": "load_step"})
    with pytest.raises(ValueError):
        tb.Scenario.from_dict({"kind": "earthquake", "event_time": 1.0})


def test_bad_params():
    with pytest.raises(ValueError):
        tb.with_params(inertia=0.0)
