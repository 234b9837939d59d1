"""Splitting a model across two processes and running the lockstep loop.

Every cut wire becomes a one-step delay: the follower's outputs of step k are
used by the master at step k+1, and the master's boundary values of step k
reach the follower's step k+1. Boundary values at step 0 are zero. A
single-process model with a zero-initialized unit delay on every cut wire
(:func:`reference_with_delays`) therefore reproduces a co-simulated run
exactly.
"""

from __future__ import annotations

import enum
import json
import logging
import os
import shlex
import subprocess
import sys
import tempfile
import time
import uuid
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .bridge import Channel, create_master, open_follower
from .bridge.channel import DEFAULT_TIMEOUT_MS
from .bridge.segment import MAX_INPUTS, MAX_OUTPUTS
from .engine import (Block, External, Model, Port, SimConfig, Stepper, Trace, UnitDelay, Wire,
                     load_model, save_model, validate_and_order)
from .errors import (BoundaryShapeMismatch, BridgeError, CapacityExceeded, CosimFailed,
                     ModelError, NonFiniteSignal, NotABipartition, ProtocolViolation, SpawnFailure)

log = logging.getLogger(__name__)

FOLLOWER_BIN_ENV = "COSIM_FOLLOWER_BIN"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PROTOCOL = 2
EXIT_MODEL = 3


class Direction(enum.Enum):
    TO_FOLLOWER = "m2f"
    TO_MASTER = "f2m"


@dataclass(frozen=True)
class CutSet:
    wires: tuple[int, ...]
    directions: tuple[Direction, ...]
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "wires", tuple(int(w) for w in self.wires))
        object.__setattr__(self, "directions", tuple(Direction(d) for d in self.directions))
        if len(self.wires) != len(self.directions):
            raise ValueError("one direction per cut wire is required")
        if len(set(self.wires)) != len(self.wires):
            raise ValueError("cut wires must be distinct")

    @classmethod
    def around(cls, model: Model, follower_blocks: Iterable[int], name: str = "") -> "CutSet":
        """Cut every wire crossing the boundary of ``follower_blocks``."""
        fb = set(follower_blocks)
        wires, dirs = [], []
        for i, w in enumerate(model.wires):
            src_f, dst_f = w.src.block in fb, w.dst.block in fb
            if src_f != dst_f:
                wires.append(i)
                dirs.append(Direction.TO_MASTER if src_f else Direction.TO_FOLLOWER)
        return cls(tuple(wires), tuple(dirs), name)

    def to_dict(self) -> dict:
        return {"name": self.name, "wires": list(self.wires),
                "directions": [d.value for d in self.directions]}

    @classmethod
    def from_dict(cls, doc: dict) -> "CutSet":
        return cls(tuple(doc["wires"]), tuple(doc["directions"]), doc.get("name", ""))


@dataclass
class SplitPlan:
    master_model: Model
    follower_model: Model
    to_follower: list[int]         # cut-wire indices, in exchange-slot order
    to_master: list[int]
    master_columns: list[int]      # original output indices computed by the master
    follower_columns: list[int]    # original output indices computed by the follower
    columns: list[str]
    channel_name: str
    n_model_inputs: int = 0

    @property
    def n_inputs(self) -> int:
        """Values per exchange, master to follower."""
        return len(self.to_follower)

    @property
    def n_outputs(self) -> int:
        """Values per exchange, follower to master."""
        return len(self.to_master) + len(self.follower_columns)


@dataclass
class RunStats:
    wall_time: float
    steps: int
    exchanges: int
    role: str

    def to_json(self) -> str:
        return json.dumps(asdict(self))


def new_channel_name() -> str:
    return f"cosim.{os.getpid()}.{uuid.uuid4().hex[:12]}"


# -- partitioning -------------------------------------------------------------

def _as_cut(model: Model, cut: CutSet | Sequence[int]) -> CutSet:
    if isinstance(cut, CutSet):
        return cut
    # bare wire list (direction irrelevant, e.g. for the delay oracle)
    return CutSet(tuple(cut), tuple(Direction.TO_FOLLOWER for _ in cut))


def _check_wires(model: Model, cut: CutSet) -> None:
    for i in cut.wires:
        if not 0 <= i < len(model.wires):
            raise NotABipartition(f"cut references wire {i}, model has {len(model.wires)}")


def partition(model: Model, cut: CutSet) -> list[bool]:
    """Follower membership per block implied by ``cut``.

    Blocks that stay connected through uncut wires share a side. Pieces the
    cut does not touch at all remain with the master.
    """
    _check_wires(model, cut)
    n = len(model.blocks)
    parent = list(range(n))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    cut_set = set(cut.wires)
    for i, w in enumerate(model.wires):
        if i not in cut_set:
            a, b = find(w.src.block), find(w.dst.block)
            if a != b:
                parent[a] = b

    side: dict[int, bool] = {}
    for i, d in zip(cut.wires, cut.directions):
        w = model.wires[i]
        src_f = d is Direction.TO_MASTER
        for block, is_f in ((w.src.block, src_f), (w.dst.block, not src_f)):
            root = find(block)
            if side.setdefault(root, is_f) != is_f:
                raise NotABipartition(
                    f"block {block} is reachable from both sides without crossing the cut "
                    f"(wire {i} leaves a path between master and follower)")
    follower = [side.get(find(b), False) for b in range(n)]
    if not any(follower):
        raise NotABipartition("cut leaves the follower side empty")
    if all(follower):
        raise NotABipartition("cut leaves the master side empty")
    return follower


def _half(model: Model, members: list[int], incoming: list[int], outgoing: list[int],
          own_outputs: list[int], keep_inputs: bool, prefix: str) -> Model:
    remap = {old: new for new, old in enumerate(members)}
    blocks = [Block(remap[b], model.blocks[b].kind, model.blocks[b].label) for b in members]
    wires: list[Wire] = []
    cut = set(incoming) | set(outgoing)
    for i, w in enumerate(model.wires):
        if i in cut:
            continue
        if w.src.block in remap and w.dst.block in remap:
            wires.append(Wire(Port(remap[w.src.block], w.src.port), Port(remap[w.dst.block], w.dst.port)))
    inputs: list[Port] = []
    if keep_inputs:
        inputs = [Port(remap[p.block], p.port) for p in model.inputs]
    for slot, i in enumerate(incoming):
        ext = Block(len(blocks), External(slot), f"{prefix}.in[{slot}]")
        blocks.append(ext)
        w = model.wires[i]
        wires.append(Wire(Port(ext.id, 0), Port(remap[w.dst.block], w.dst.port)))
        inputs.append(Port(ext.id, 0))
    outputs = [Port(remap[model.wires[i].src.block], model.wires[i].src.port) for i in outgoing]
    names = [f"{prefix}.out[{j}]" for j in range(len(outgoing))]
    all_names = model.column_names()
    for j in own_outputs:
        p = model.outputs[j]
        outputs.append(Port(remap[p.block], p.port))
        names.append(all_names[j])
    return validate_and_order(blocks, wires, inputs, outputs, names)


def split(model: Model, cut: CutSet, channel_name: str | None = None) -> SplitPlan:
    follower = partition(model, cut)
    for p in model.inputs:
        if follower[p.block]:
            raise NotABipartition(f"model input on block {p.block} falls on the follower side")

    to_f = sorted(i for i, d in zip(cut.wires, cut.directions) if d is Direction.TO_FOLLOWER)
    to_m = sorted(i for i, d in zip(cut.wires, cut.directions) if d is Direction.TO_MASTER)
    for i in to_f:
        w = model.wires[i]
        if follower[w.src.block] or not follower[w.dst.block]:
            raise NotABipartition(f"wire {i} is marked master->follower but does not cross that way")
    for i in to_m:
        w = model.wires[i]
        if not follower[w.src.block] or follower[w.dst.block]:
            raise NotABipartition(f"wire {i} is marked follower->master but does not cross that way")

    m_cols = [j for j, p in enumerate(model.outputs) if not follower[p.block]]
    f_cols = [j for j, p in enumerate(model.outputs) if follower[p.block]]
    if len(to_f) > MAX_INPUTS or len(to_m) + len(f_cols) > MAX_OUTPUTS:
        raise CapacityExceeded(
            f"split needs {len(to_f)} master->follower and {len(to_m) + len(f_cols)} "
            f"follower->master signals; limits are {MAX_INPUTS}/{MAX_OUTPUTS}")

    m_members = [b for b in range(len(model.blocks)) if not follower[b]]
    f_members = [b for b in range(len(model.blocks)) if follower[b]]
    master = _half(model, m_members, to_m, to_f, m_cols, True, "master")
    fol = _half(model, f_members, to_f, to_m, f_cols, False, "follower")
    return SplitPlan(master, fol, to_f, to_m, m_cols, f_cols, model.column_names(),
                     channel_name or new_channel_name(), len(model.inputs))


def reference_with_delays(model: Model, cut: CutSet | Sequence[int]) -> Model:
    """Single-process equivalent of a co-simulated split: a zero-initialized
    unit delay replaces every cut wire."""
    cut = _as_cut(model, cut)
    _check_wires(model, cut)
    if not cut.wires:
        return model
    blocks = list(model.blocks)
    wires = list(model.wires)
    for i in sorted(cut.wires):
        w = model.wires[i]
        d = Block(len(blocks), UnitDelay(0.0), f"delay[{i}]")
        blocks.append(d)
        wires[i] = Wire(w.src, Port(d.id, 0))
        wires.append(Wire(Port(d.id, 0), w.dst))
    return validate_and_order(blocks, wires, model.inputs, model.outputs, model.output_names)


# -- running ------------------------------------------------------------------

def run_master(plan: SplitPlan, config: SimConfig, channel: Channel | None = None, *,
               timeout: float = DEFAULT_TIMEOUT_MS,
               input_fn: Callable[[float], Sequence[float]] | None = None,
               progress: Callable[[int], None] | None = None,
               stats: list | None = None) -> Trace:
    """Drive the master half for the whole horizon and shut the channel down.

    Creates the channel when none is passed. ``progress(k)`` is called before
    step k. If ``stats`` is a list, a :class:`RunStats` is appended to it.
    """
    own = channel is None
    if own:
        channel = create_master(plan.channel_name, plan.n_inputs, plan.n_outputs, timeout)
    if (channel.n_inputs, channel.n_outputs) != (plan.n_inputs, plan.n_outputs):
        raise BoundaryShapeMismatch(
            f"channel carries {channel.n_inputs}/{channel.n_outputs} values, "
            f"plan needs {plan.n_inputs}/{plan.n_outputs}")

    stepper = Stepper(plan.master_model)
    state = plan.master_model.initial_state()
    n_to_f = len(plan.to_follower)
    n_to_m = len(plan.to_master)
    to_f = [0.0] * n_to_f
    from_f = [0.0] * n_to_m
    n_cols = len(plan.columns)
    dt = config.dt
    rows = []
    t0 = time.perf_counter()
    try:
        for k in range(config.steps + 1):
            t = k * dt
            if progress is not None:
                progress(k)
            ext = list(input_fn(t)) + from_f if input_fn is not None else from_f
            try:
                out, state = stepper.step(state, ext, t, dt)
            except NonFiniteSignal as exc:
                raise NonFiniteSignal(exc.block, t, k) from None
            reply = channel.master_exchange(k, t, to_f)
            to_f = out[:n_to_f]
            from_f = reply[:n_to_m]
            row = [0.0] * n_cols
            for j, v in zip(plan.master_columns, out[n_to_f:]):
                row[j] = v
            for j, v in zip(plan.follower_columns, reply[n_to_m:]):
                row[j] = v
            rows.append((t, row))
    except BaseException:
        channel.abort()
        if own:
            channel.close()
        raise
    channel.shutdown()
    if own:
        channel.close()
    if stats is not None:
        stats.append(RunStats(time.perf_counter() - t0, config.steps + 1, channel.exchanges, "master"))
    return Trace(dt, list(plan.columns), rows)


@dataclass
class FollowerSpec:
    command: list[str]
    model_path: str
    channel_name: str
    dt: float
    t_end: float
    timeout: float = DEFAULT_TIMEOUT_MS

    def argv(self) -> list[str]:
        return [*self.command, "--role", "follower", "--channel", self.channel_name,
                "--model", str(self.model_path), "--dt", repr(self.dt), "--t-end", repr(self.t_end),
                "--timeout", repr(self.timeout)]


def run_follower(spec: FollowerSpec) -> RunStats:
    """Serve the follower half until the master shuts the channel down."""
    model = load_model(spec.model_path)
    config = SimConfig(spec.dt, spec.t_end)
    stepper = Stepper(model)
    dt = spec.dt
    state = model.initial_state()
    t0 = time.perf_counter()
    channel = open_follower(spec.channel_name, spec.timeout)
    try:
        if (channel.n_inputs, channel.n_outputs) != (len(model.inputs), len(model.outputs)):
            channel.abort()
            raise BoundaryShapeMismatch(
                f"channel carries {channel.n_inputs}/{channel.n_outputs} values, follower model "
                f"has {len(model.inputs)} inputs / {len(model.outputs)} outputs")

        def handler(step: int, sim_time: float, inputs: list[float]) -> list[float]:
            nonlocal state
            if sim_time != step * dt:
                raise ProtocolViolation(f"step {step} arrived with t={sim_time!r}; "
                                        f"follower dt={dt!r} expects {step * dt!r}")
            try:
                out, state = stepper.step(state, inputs, sim_time, dt)
            except NonFiniteSignal as exc:
                raise NonFiniteSignal(exc.block, sim_time, step) from None
            return out

        served = channel.follower_serve(handler)
    finally:
        channel.close()
    if served != config.steps + 1:
        log.warning("follower served %d steps, expected %d", served, config.steps + 1)
    return RunStats(time.perf_counter() - t0, served, channel.exchanges, "follower")


def follower_command() -> list[str]:
    override = os.environ.get(FOLLOWER_BIN_ENV)
    if override:
        return shlex.split(override)
    return [sys.executable, "-m", "cosim"]


@dataclass
class CosimResult:
    trace: Trace
    stats: RunStats
    follower_stats: RunStats | None = None
    follower_stderr: str = ""


def _parse_stats(text: str) -> RunStats | None:
    for line in reversed(text.splitlines()):
        try:
            doc = json.loads(line)
            return RunStats(**doc)
        except (ValueError, TypeError):
            continue
    return None


def run_cosim(model: Model, cut: CutSet, config: SimConfig, *,
              timeout: float = DEFAULT_TIMEOUT_MS,
              input_fn: Callable[[float], Sequence[float]] | None = None,
              command: list[str] | None = None,
              progress: Callable[[int], None] | None = None,
              on_spawn: Callable[[subprocess.Popen], None] | None = None,
              ) -> tuple[Trace, RunStats]:
    res = run_cosim_detailed(model, cut, config, timeout=timeout, input_fn=input_fn,
                             command=command, progress=progress, on_spawn=on_spawn)
    return res.trace, res.stats


def run_cosim_detailed(model: Model, cut: CutSet, config: SimConfig, *,
                       timeout: float = DEFAULT_TIMEOUT_MS,
                       input_fn: Callable[[float], Sequence[float]] | None = None,
                       command: list[str] | None = None,
                       progress: Callable[[int], None] | None = None,
                       on_spawn: Callable[[subprocess.Popen], None] | None = None,
                       ) -> CosimResult:
    t_start = time.perf_counter()
    plan = split(model, cut)
    with tempfile.TemporaryDirectory(prefix="cosim-") as tmp:
        model_path = Path(tmp) / "follower.json"
        save_model(plan.follower_model, model_path)
        spec = FollowerSpec(command or follower_command(), str(model_path), plan.channel_name,
                            config.dt, config.t_end, timeout)
        out_path, err_path = Path(tmp) / "stdout", Path(tmp) / "stderr"
        channel = create_master(plan.channel_name, plan.n_inputs, plan.n_outputs, timeout)
        try:
            with open(out_path, "wb") as out_fh, open(err_path, "wb") as err_fh:
                try:
                    child = subprocess.Popen(spec.argv(), stdout=out_fh, stderr=err_fh,
                                             stdin=subprocess.DEVNULL)
                except OSError as exc:
                    raise SpawnFailure(f"cannot start follower {spec.command!r}: {exc}") from exc
            if on_spawn is not None:
                on_spawn(child)
            stats: list[RunStats] = []
            try:
                trace = run_master(plan, config, channel, input_fn=input_fn,
                                   progress=progress, stats=stats)
            except (BridgeError, ModelError) as exc:
                rc = _reap(child, timeout)
                err = err_path.read_text(errors="replace")
                raise CosimFailed(f"co-simulation failed: {exc}" + (f"\n{err.strip()}" if err.strip() else ""),
                                  rc, err) from exc
            except BaseException:
                _reap(child, 0)
                raise
            channel.close()
            rc = _reap(child, timeout)
            err = err_path.read_text(errors="replace")
            if rc != 0:
                raise CosimFailed(f"follower exited with code {rc}: {err.strip()}", rc, err)
            fstats = _parse_stats(out_path.read_text(errors="replace"))
        finally:
            channel.close()
    wall = time.perf_counter() - t_start
    st = RunStats(wall, config.steps + 1, stats[0].exchanges, "master")
    return CosimResult(trace, st, fstats, err)


def _reap(child: subprocess.Popen, timeout_ms: float) -> int:
    try:
        return child.wait(timeout=max(timeout_ms / 1000.0, 0.0) + 1.0)
    except subprocess.TimeoutExpired:
        child.kill()
        return child.wait()
