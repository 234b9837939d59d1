"""Standalone peers for multi-process tests.

    python procs.py echo-follower NAME TIMEOUT_MS
    python procs.py random-master NAME N_IN N_OUT STEPS SEED TIMEOUT_MS
    python procs.py hold NAME N_IN N_OUT     (create a segment and block forever)
    python procs.py audit-follower NAME TIMEOUT_MS   (echo reversed; report flag log checks)
    python procs.py flip NAME SECONDS        (toggle the flag between two nonzero values)
"""

import json
import random
import sys
import time

from cosim.bridge import Flag, create_master, is_legal, open_follower


def echo_follower(name, timeout):
    ch = open_follower(name, timeout)
    n_out = ch.n_outputs
    try:
        served = ch.follower_serve(lambda step, t, u: (u + [0.0] * n_out)[:n_out])
    finally:
        ch.close()
    print(json.dumps({"served": served}), flush=True)


def audit_follower(name, timeout):
    ch = open_follower(name, timeout)
    ch.transitions = []
    steps = []

    def handler(step, t, u):
        steps.append(step)
        return u[::-1]

    try:
        served = ch.follower_serve(handler)
    finally:
        ch.close()
    print(json.dumps({
        "served": served,
        "consecutive": steps == list(range(len(steps))),
        "legal": all(is_legal(a, b) for a, b in ch.transitions),
        "last": ch.transitions[-1][1] if ch.transitions else None,
    }), flush=True)


def flip(name, seconds):
    ch = open_follower(name, 2000)
    end = time.monotonic() + seconds
    while time.monotonic() < end:
        for _ in range(500):
            ch._set_flag(Flag.OUTPUTS_READY)
            ch._set_flag(Flag.INPUTS_READY)
    ch.close()


def random_master(name, n_in, n_out, steps, seed, timeout):
    rng = random.Random(seed)
    ch = create_master(name, n_in, n_out, timeout)
    print("ready", flush=True)
    for k in range(steps):
        ch.master_exchange(k, k * 1e-3, [rng.uniform(-1, 1) for _ in range(n_in)])
    ch.close()


def hold(name, n_in, n_out):
    create_master(name, n_in, n_out)
    print("ready", flush=True)
    time.sleep(3600)


if __name__ == "__main__":
    cmd, args = sys.argv[1], sys.argv[2:]
    if cmd == "echo-follower":
        echo_follower(args[0], float(args[1]))
    elif cmd == "audit-follower":
        audit_follower(args[0], float(args[1]))
    elif cmd == "random-master":
        random_master(args[0], *map(int, args[1:5]), float(args[5]))
    elif cmd == "flip":
        flip(args[0], float(args[1]))
    elif cmd == "hold":
        hold(args[0], int(args[1]), int(args[2]))
    else:
        sys.exit(f"unknown command {cmd}")
