"""Compiled vs pure-Python kernels.

Times three workloads under each backend: jet products (Lie derivative
expansion of the control-point barrier to third order), the dual active-set
QP on random problems, and a full controller step per mode.

    python benchmarks/bench_backends.py [--repeat 5]
"""
from __future__ import annotations

import argparse
import json
import time

import numpy as np

from mcbf import backend
from mcbf.autodiff import expand_fields, lie_power
from mcbf.dynamics import UnicycleParams, make_unicycle
from mcbf.qp import QPProblem, solve
from mcbf.sim import Controller, ScenarioConfig, run
from mcbf.transform import control_point_barrier


def _best(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def workloads():
    sys_ = make_unicycle(UnicycleParams())
    b = control_point_barrier(35.0, 15.0, 6.5)
    fields = [lie_power(b, sys_, k) for k in range(4)]
    states = sys_.sample_states(np.random.default_rng(0), 50)

    rng = np.random.default_rng(1)
    qps = []
    for _ in range(200):
        n, m = 4, 8
        R = rng.normal(size=(n, n))
        z0 = rng.normal(size=n)
        A = rng.normal(size=(m, n))
        qps.append(QPProblem(R @ R.T + np.eye(n), rng.normal(size=n) * 3, A,
                             -A @ z0 + rng.uniform(0.0, 1.0, m)))

    logs = {m: (Controller(ScenarioConfig(mode=m)), run(ScenarioConfig(mode=m, t_f=5.0)))
            for m in ("standard", "integral", "transform")}

    def steps(mode):
        ctl, log = logs[mode]

        def go():
            for r in log.records:
                problem, _, _ = ctl.qp(r.state, r.aux)
                solve(problem)
        return go, len(log.records)

    out = {
        "lie_expansion (50 states, k<=3)": (lambda: [expand_fields(fields, x, 3) for x in states], 50),
        "qp_solve (200 problems, 4 vars, 8 rows)": (lambda: [solve(p) for p in qps], 200),
    }
    for mode in logs:
        out[f"controller_step ({mode})"] = steps(mode)
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", action="store_true", help="print machine-readable results")
    args = ap.parse_args(argv)
    names = ["python"] + (["compiled"] if backend.compiled_available() else [])
    results = {}
    for name, (fn, count) in workloads().items():
        row = {}
        for be in names:
            prev = backend.set_backend(be)
            try:
                row[be] = _best(fn, args.repeat) / count
            finally:
                backend.set_backend(prev)
        results[name] = row
    if args.json:
        print(json.dumps(results, indent=2))
        return
    print(f"{'workload':44s} " + " ".join(f"{b + ' [us/op]':>18s}" for b in names) + "   speedup")
    for name, row in results.items():
        cells = " ".join(f"{row[b] * 1e6:18.1f}" for b in names)
        speed = f"{row['python'] / row['compiled']:8.2f}x" if "compiled" in row else ""
        print(f"{name:44s} {cells}   {speed}")


if __name__ == "__main__":
    main()
