"""Command-line front end.

    cosim run MODEL --dt S --t-end S --out trace.csv
    cosim cosim MODEL --cut NAME|FILE --dt S --t-end S --out trace.csv
    cosim compare A.csv B.csv --tol X
    cosim bench MODEL [--cut NAME|FILE] --dt S --t-end S --repeats N
    cosim testbed --out-dir DIR
    cosim --role follower --channel NAME --model PATH --dt S --t-end S

Exit codes: 0 success, 1 usage or validation error, 2 protocol or
co-simulation failure, 3 follower model error.
"""

from __future__ import annotations

import argparse
import json
import logging
import statistics
import sys
import time
from pathlib import Path

from . import testbed
from .bridge.channel import DEFAULT_TIMEOUT_MS
from .engine import Model, SimConfig, Trace, compare_traces, load_model, save_model, simulate
from .errors import (BridgeError, CosimError, CosimFailed, HandlerFailure, ModelError,
                     ShapeMismatch, SpawnFailure)
from .orchestrator import (EXIT_MODEL, EXIT_OK, EXIT_PROTOCOL, EXIT_USAGE, CutSet, FollowerSpec,
                           RunStats, follower_command, run_cosim_detailed, run_follower)

log = logging.getLogger("cosim")


class UsageError(Exception):
    pass


def _load(path: str, scenario: str | None) -> Model:
    model = load_model(path)
    if scenario:
        model = testbed.apply_scenario(model, testbed.Scenario.load(scenario))
    return model


def _resolve_cut(model: Model, spec: str) -> CutSet:
    path = Path(spec)
    if path.suffix == ".json" or path.exists():
        if not path.exists():
            raise UsageError(f"cut file {spec} not found")
        doc = json.loads(path.read_text())
        if "follower_blocks" in doc:
            return CutSet.around(model, doc["follower_blocks"], doc.get("name", path.stem))
        return CutSet.from_dict(doc)
    cuts = testbed.standard_cuts(model)
    if spec not in cuts:
        available = ", ".join(sorted(cuts)) or "none (model has no standard cuts)"
        raise UsageError(f"unknown cut {spec!r}; available cuts: {available}")
    return cuts[spec]


def _print_stats(stats: RunStats | None, label: str = "") -> None:
    if stats is not None:
        print(f"{label}{stats.to_json()}")


# -- commands -----------------------------------------------------------------

def cmd_run(args) -> int:
    model = _load(args.model, args.scenario)
    t0 = time.perf_counter()
    trace = simulate(model, SimConfig(args.dt, args.t_end))
    stats = RunStats(time.perf_counter() - t0, len(trace), 0, "mono")
    trace.to_csv(args.out)
    _print_stats(stats)
    return EXIT_OK


def cmd_cosim(args) -> int:
    model = _load(args.model, args.scenario)
    cut = _resolve_cut(model, args.cut)
    res = run_cosim_detailed(model, cut, SimConfig(args.dt, args.t_end), timeout=args.timeout)
    res.trace.to_csv(args.out)
    _print_stats(res.stats, "master ")
    _print_stats(res.follower_stats, "follower ")
    return EXIT_OK


def cmd_compare(args) -> int:
    a, b = Trace.from_csv(args.a), Trace.from_csv(args.b)
    report = compare_traces(a, b, args.tol)
    print(report.summary())
    return EXIT_OK if report.passed else EXIT_USAGE


def cmd_bench(args) -> int:
    if args.repeats < 3:
        raise UsageError("bench needs --repeats >= 3")
    model = _load(args.model, args.scenario)
    config = SimConfig(args.dt, args.t_end)
    cut = _resolve_cut(model, args.cut) if args.cut else None

    mono, co = [], []
    for _ in range(args.repeats):
        t0 = time.perf_counter()
        simulate(model, config)
        mono.append(time.perf_counter() - t0)
        if cut is not None:
            co.append(run_cosim_detailed(model, cut, config, timeout=args.timeout).stats.wall_time)

    m = statistics.median(mono)
    print(f"{'':<14}{'monolithic (s)':>16}{'co-simulated (s)':>18}{'ratio':>8}")
    if co:
        c = statistics.median(co)
        ratio = c / m if m > 0 else float("inf")
        print(f"{Path(args.model).stem:<14}{m:>16.4f}{c:>18.4f}{ratio:>8.2f}")
    else:
        print(f"{Path(args.model).stem:<14}{m:>16.4f}{'-':>18}{'-':>8}")
    return EXIT_OK


def cmd_testbed(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    base = testbed.build_smib_model()
    save_model(base, out / "smib.json")
    for name, sc in testbed.SCENARIOS.items():
        (out / f"scenario_{name}.json").write_text(json.dumps(sc.to_dict(), indent=1))
        model = testbed.apply_scenario(base, sc)
        save_model(model, out / f"smib_{name}.json")
    for name, cut in testbed.standard_cuts(base).items():
        (out / f"cut_{name}.json").write_text(json.dumps(cut.to_dict(), indent=1))
    print(f"wrote testbed files to {out}")
    return EXIT_OK


def follower_main(args) -> int:
    spec = FollowerSpec(follower_command(), args.model, args.channel, args.dt, args.t_end,
                        args.timeout)
    try:
        stats = run_follower(spec)
    except HandlerFailure as exc:
        print(f"follower: {exc}", file=sys.stderr)
        return EXIT_MODEL if isinstance(exc.__cause__, ModelError) else EXIT_PROTOCOL
    except ModelError as exc:
        print(f"follower: model error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except (BridgeError, CosimError) as exc:
        print(f"follower: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    print(stats.to_json(), flush=True)
    return EXIT_OK


# -- argument parsing -----------------------------------------------------------

def _follower_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cosim --role follower")
    p.add_argument("--role", choices=["follower"], required=True)
    p.add_argument("--channel", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--dt", type=float, required=True)
    p.add_argument("--t-end", type=float, required=True)
    p.add_argument("--timeout", type=float, default=DEFAULT_TIMEOUT_MS, help="milliseconds")
    return p


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cosim", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def horizon(sp):
        sp.add_argument("--dt", type=float, default=1e-3)
        sp.add_argument("--t-end", type=float, default=10.0)
        sp.add_argument("--scenario", help="scenario JSON applied to a testbed model")

    sp = sub.add_parser("run", help="simulate a model in one process")
    sp.add_argument("model")
    horizon(sp)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("cosim", help="simulate a model split across two processes")
    sp.add_argument("model")
    sp.add_argument("--cut", required=True, help="standard cut name or cut JSON file")
    horizon(sp)
    sp.add_argument("--out", required=True)
    sp.add_argument("--timeout", type=float, default=DEFAULT_TIMEOUT_MS, help="milliseconds")
    sp.set_defaults(func=cmd_cosim)

    sp = sub.add_parser("compare", help="compare two trace CSV files")
    sp.add_argument("a")
    sp.add_argument("b")
    sp.add_argument("--tol", type=float, default=1e-12)
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("bench", help="time monolithic against co-simulated runs")
    sp.add_argument("model")
    sp.add_argument("--cut")
    horizon(sp)
    sp.add_argument("--repeats", type=int, default=5)
    sp.add_argument("--timeout", type=float, default=DEFAULT_TIMEOUT_MS, help="milliseconds")
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("testbed", help="write the built-in power-system model, scenarios and cuts")
    sp.add_argument("--out-dir", default=".")
    sp.set_defaults(func=cmd_testbed)
    return p


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    logging.basicConfig(level=logging.WARNING, format="%(name)s: %(message)s")

    if "--role" in argv:
        try:
            args = _follower_parser().parse_args(argv)
        except SystemExit as exc:
            return EXIT_USAGE if exc.code else EXIT_OK
        return follower_main(args)

    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if args.verbose:
        logging.getLogger().setLevel(logging.INFO)

    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CosimFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MODEL if exc.returncode == EXIT_MODEL else EXIT_PROTOCOL
    except (SpawnFailure, BridgeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    except (ModelError, ShapeMismatch, CosimError, ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
