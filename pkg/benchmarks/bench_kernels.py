"""Compiled vs pure-Python kernels.

    python benchmarks/bench_kernels.py [--repeat N] [--json out.json]

Each kernel runs on identical inputs in both backends; the table reports the
best wall time of N repeats and the speed-up.  Results are also checked for
agreement so a fast-but-wrong build cannot hide here.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from tacnog.kernels import available_backends

T, N = 1.5, 1500
Q = (1.0, 5.0, -2.5)


def _inputs(k):
    raw = k.propagate(*Q, T, N)
    X, Y, th = (np.ascontiguousarray(raw[:, i]) for i in range(3))
    U = Q[0] * Y - Q[1] * X + Q[2]
    delta = np.linalg.det(raw[:, 3:].reshape(-1, 3, 3))
    return X, Y, th, U, np.ascontiguousarray(delta)


CASES = {
    "propagate (1500 RK4 steps, 12 states)": lambda k, d: k.propagate(*Q, T, N),
    "disconjugacy scan": lambda k, d: k.disconjugacy_violation(d[4], 10, 1e-9),
    "colinearity scan (pair-free extremal)": lambda k, d: k.colinear_pair(
        d[0], d[1], d[2], d[3], T / N, 5, T / N
    ),
    "plant hold (1000 steps)": lambda k, d: k.plant_hold(0.0, 0.0, 0.3, 250.0, 9.8, 1e-3, 1000),
}


def best_time(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def _same(a, b):
    if a is None or b is None or isinstance(a, (int, tuple)):
        return a == b if not isinstance(a, tuple) else np.allclose(a, b, atol=1e-12)
    return np.allclose(a, b, atol=1e-12, equal_nan=True)


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--json")
    a = p.parse_args(argv)
    backends = available_backends()
    if "cython" not in backends:
        print("compiled extension not built; only the Python backend is available", file=sys.stderr)
    data = {name: _inputs(k) for name, k in backends.items()}
    rows = []
    for label, case in CASES.items():
        row = {"kernel": label}
        outs = {}
        for name, k in backends.items():
            row[name], outs[name] = best_time(lambda: case(k, data[name]), a.repeat)
        if "cython" in outs:
            row["speedup"] = row["python"] / row["cython"]
            row["agree"] = bool(_same(outs["python"], outs["cython"]))
        rows.append(row)
    w = max(len(r["kernel"]) for r in rows)
    print(f"{'kernel':<{w}}  {'python [ms]':>12}  {'cython [ms]':>12}  {'speed-up':>9}  agree")
    for r in rows:
        cy = f"{r['cython'] * 1e3:12.3f}" if "cython" in r else f"{'-':>12}"
        sp = f"{r['speedup']:9.1f}" if "speedup" in r else f"{'-':>9}"
        print(f"{r['kernel']:<{w}}  {r['python'] * 1e3:12.3f}  {cy}  {sp}  {r.get('agree', '-')}")
    if a.json:
        with open(a.json, "w") as f:
            json.dump(rows, f, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
