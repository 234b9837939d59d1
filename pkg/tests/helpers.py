"""Model builders shared by the tests."""

import random

from cosim.engine import (Block, Constant, FirstOrderLag, Gain, Integrator, Step, Sum,
                          validate_and_order)


def chain(*kinds, outputs=None):
    blocks = [Block(i, k) for i, k in enumerate(kinds)]
    wires = [((i, 0), (i + 1, 0)) for i in range(len(kinds) - 1)]
    outs = [(len(kinds) - 1, 0)] if outputs is None else outputs
    return validate_and_order(blocks, wires, [], outs)


MEMORY_KINDS = ("integrator", "lag")
ALL_KINDS = ("constant", "step", "gain", "sum2", "sum3", "integrator", "lag")


def make_kind(tag, rng):
    if tag == "constant":
        return Constant(rng.uniform(-2, 2))
    if tag == "step":
        return Step(rng.choice([0.0, 0.05, 0.1]), rng.uniform(-1, 1), rng.uniform(-1, 1))
    if tag == "gain":
        return Gain(rng.uniform(-0.9, 0.9))
    if tag == "sum2":
        return Sum(tuple(rng.choice([1, -1]) for _ in range(2)))
    if tag == "sum3":
        return Sum(tuple(rng.choice([1, -1]) for _ in range(3)))
    if tag == "integrator":
        return Integrator(rng.uniform(-1, 1))
    if tag == "lag":
        return FirstOrderLag(rng.uniform(0.2, 2), rng.uniform(0.05, 1), rng.uniform(-1, 1))
    raise ValueError(tag)


def random_graph(rng: random.Random, n_max=10, tags=ALL_KINDS, p_memory=None):
    """Random block diagram; every input port gets a random driver (cycles allowed)."""
    n = rng.randint(1, n_max)
    kinds = []
    for _ in range(n):
        if p_memory is not None and rng.random() < p_memory:
            tag = rng.choice(MEMORY_KINDS)
        else:
            tag = rng.choice(tags)
        kinds.append(make_kind(tag, rng))
    blocks = [Block(i, k) for i, k in enumerate(kinds)]
    wires = [((rng.randrange(n), 0), (b.id, p)) for b in blocks for p in range(b.n_in)]
    return blocks, wires


def random_dag(rng: random.Random, n_max=12):
    """Random block diagram whose only cycles pass through memory blocks."""
    n = rng.randint(2, n_max)
    blocks, wires = [], []
    for i in range(n):
        if i == 0:
            tag = rng.choice(("constant", "step"))
        else:
            tag = rng.choice(ALL_KINDS)
        k = make_kind(tag, rng)
        blocks.append(Block(i, k))
    memory = [b.id for b in blocks if b.is_memory]
    for b in blocks:
        for p in range(b.n_in):
            # earlier blocks, or any memory block (feedback through state)
            candidates = list(range(b.id)) + [m for m in memory if m >= b.id]
            wires.append(((rng.choice(candidates), 0), (b.id, p)))
    outputs = [(i, 0) for i in range(n)]
    return validate_and_order(blocks, wires, [], outputs)
