"""Block-diagram topology: wires, validation and evaluation order."""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

from ..errors import AlgebraicLoop, BadPort, DanglingPort, DuplicateDrive, InvalidBlock
from .blocks import Block


class Port(NamedTuple):
    block: int
    port: int


class Wire(NamedTuple):
    src: Port
    dst: Port

    @classmethod
    def of(cls, src: Sequence[int], dst: Sequence[int]) -> "Wire":
        return cls(Port(*src), Port(*dst))


@dataclass(frozen=True, eq=False)
class Model:
    """A validated block diagram. Build it with :func:`validate_and_order`."""

    blocks: tuple[Block, ...]
    wires: tuple[Wire, ...]
    inputs: tuple[Port, ...]
    outputs: tuple[Port, ...]
    eval_order: tuple[int, ...]
    output_names: tuple[str, ...] = ()
    # drivers[b][p] is the block feeding input p of block b, or -(i+1) for model input i
    drivers: tuple[tuple[int, ...], ...] = field(default=(), repr=False)

    @property
    def memory_blocks(self) -> tuple[int, ...]:
        return tuple(b.id for b in self.blocks if b.is_memory)

    def initial_state(self) -> list[float]:
        return [self.blocks[i].kind.initial_state() for i in self.memory_blocks]

    def column_names(self) -> list[str]:
        if self.output_names:
            return list(self.output_names)
        return [f"y{i}" for i in range(len(self.outputs))]

    def block_by_label(self, label: str) -> Block:
        for b in self.blocks:
            if b.label == label:
                return b
        raise KeyError(label)

    def has_label(self, label: str) -> bool:
        return any(b.label == label for b in self.blocks)


def _check_port(blocks: Sequence[Block], p: Port, side: str) -> None:
    if not 0 <= p.block < len(blocks):
        raise BadPort(f"{side} references unknown block {p.block}")
    limit = blocks[p.block].n_in if side == "input" else blocks[p.block].n_out
    if not 0 <= p.port < limit:
        raise BadPort(f"{side} port {p.port} out of range for block {p.block} "
                      f"({blocks[p.block].kind.name}, {limit} ports)")


def _find_cycle(remaining: set[int], preds: dict[int, list[int]]) -> list[int]:
    # every remaining node has a remaining predecessor, so walking backwards must revisit
    start = min(remaining)
    seen: dict[int, int] = {}
    path: list[int] = []
    node = start
    while node not in seen:
        seen[node] = len(path)
        path.append(node)
        node = min(p for p in preds[node] if p in remaining)
    cycle = path[seen[node]:]
    cycle.reverse()
    # rotate so the smallest id leads, for stable messages
    i = cycle.index(min(cycle))
    return cycle[i:] + cycle[:i]


def validate_and_order(
    blocks: Iterable[Block],
    wires: Iterable[Wire],
    inputs: Iterable[Sequence[int]] = (),
    outputs: Iterable[Sequence[int]] = (),
    output_names: Iterable[str] = (),
) -> Model:
    blocks = tuple(blocks)
    wires = tuple(Wire.of(*w) for w in wires)
    inputs = tuple(Port(*p) for p in inputs)
    outputs = tuple(Port(*p) for p in outputs)
    output_names = tuple(output_names)

    for i, b in enumerate(blocks):
        if b.id != i:
            raise InvalidBlock(f"block ids must be dense 0..N-1; position {i} holds id {b.id}")
    if output_names and len(output_names) != len(outputs):
        raise InvalidBlock("output_names must match outputs in length")

    drivers: list[list[int | None]] = [[None] * b.n_in for b in blocks]
    for w in wires:
        _check_port(blocks, w.src, "output")
        _check_port(blocks, w.dst, "input")
        if drivers[w.dst.block][w.dst.port] is not None:
            raise DuplicateDrive(*w.dst)
        drivers[w.dst.block][w.dst.port] = w.src.block
    for i, p in enumerate(inputs):
        _check_port(blocks, p, "input")
        if drivers[p.block][p.port] is not None:
            raise DuplicateDrive(*p)
        drivers[p.block][p.port] = -(i + 1)
    for p in outputs:
        _check_port(blocks, p, "output")
    for b, row in enumerate(drivers):
        for port, d in enumerate(row):
            if d is None:
                raise DanglingPort(b, port)

    # dependency graph: memory-block outputs carry no same-step dependency
    n = len(blocks)
    succs: list[list[int]] = [[] for _ in range(n)]
    preds: dict[int, list[int]] = {i: [] for i in range(n)}
    indegree = [0] * n
    for w in wires:
        s, d = w.src.block, w.dst.block
        if blocks[s].is_memory:
            continue
        succs[s].append(d)
        preds[d].append(s)
        indegree[d] += 1

    ready = [i for i in range(n) if indegree[i] == 0]
    heapq.heapify(ready)
    order: list[int] = []
    while ready:
        b = heapq.heappop(ready)
        order.append(b)
        for d in succs[b]:
            indegree[d] -= 1
            if indegree[d] == 0:
                heapq.heappush(ready, d)
    if len(order) < n:
        raise AlgebraicLoop(_find_cycle(set(range(n)) - set(order), preds))

    return Model(
        blocks=blocks,
        wires=wires,
        inputs=inputs,
        outputs=outputs,
        eval_order=tuple(order),
        output_names=output_names,
        drivers=tuple(tuple(row) for row in drivers),  # type: ignore[arg-type]
    )


def rebuild(model: Model, **changes) -> Model:
    """Re-validate ``model`` with some of its constituents replaced."""
    parts = dict(blocks=model.blocks, wires=model.wires, inputs=model.inputs,
                 outputs=model.outputs, output_names=model.output_names)
    parts.update(changes)
    return validate_and_order(**parts)
