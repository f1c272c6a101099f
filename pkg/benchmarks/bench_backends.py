#!/usr/bin/env python3
"""Compiled (numba) versus pure-numpy kernels.

Times the two hot paths, the implicit-midpoint wave step and the Yosida
RK4 integrator, on both backends and checks that they agree.

Usage::

    python benchmarks/bench_backends.py --repeats 3 --steps 2000
    python benchmarks/bench_backends.py --csv bench.csv
"""

from __future__ import annotations

import argparse
import csv
import statistics
import sys
import time

import numpy as np

from decaylab._accel import HAVE_NUMBA
from decaylab.feedback import FeedbackLaw
from decaylab.kato import integrate_approx, random_system
from decaylab.modulation import ModulationProfile
from decaylab.waves import build_system, initial_state, simulate

LAWS = {
    "linear": FeedbackLaw.linear(1.0),
    "sublinear": FeedbackLaw.power(0.5, 0.5),
    "superlinear": FeedbackLaw.power(1.0, 3.0),
}


def _time(fn, repeats):
    out, times = None, []
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return out, statistics.median(times)


def bench_waves(steps: int, repeats: int, n_nodes: int):
    rows = []
    for model, extra in (("wave_interior", {"sigma_mask": 1.0}),
                         ("wave_boundary", {"a": 1.0, "k": 1.0}),
                         ("string_pointwise", {"xi": np.pi / 2})):
        for name, law in LAWS.items():
            system = build_system(dict(model=model, n=n_nodes, **extra), law, ModulationProfile.power_decay(0.5))
            u0, v0 = initial_state(system, {"kind": "modes", "n_modes": 8}, seed=0)
            t_end = steps * 5e-3
            run = {b: (lambda b=b: simulate(system, u0, v0, t_end, 5e-3, 20, backend=b)) for b in ("numba", "numpy")}
            run["numba"]()  # compile outside the timed region
            tr_nb, t_nb = _time(run["numba"], repeats)
            tr_np, t_np = _time(run["numpy"], repeats)
            diff = float(np.max(np.abs(tr_nb.E - tr_np.E)) / tr_nb.E[0])
            rows.append(dict(kernel="wave_step", case=f"{model}/{name}", size=n_nodes, steps=steps,
                             numba_s=t_nb, numpy_s=t_np, speedup=t_np / t_nb, max_rel_diff=diff))
    return rows


def bench_kato(n: float, T: float, repeats: int):
    rows = []
    for name, law in (("linear", LAWS["linear"]), ("sublinear", LAWS["sublinear"])):
        system = random_system(4, law, damped=[True, False, True, False], seed=0, scale=0.5)
        a = np.random.default_rng(1).standard_normal(4)
        integrate_approx(system, n, a, 0.1, backend="numba")
        tr_nb, t_nb = _time(lambda: integrate_approx(system, n, a, T, backend="numba"), repeats)
        tr_np, t_np = _time(lambda: integrate_approx(system, n, a, T, backend="numpy"), repeats)
        diff = float(np.max(np.abs(tr_nb.u - tr_np.u)))
        rows.append(dict(kernel="yosida_rk4", case=name, size=4, steps=len(tr_nb.t) - 1,
                         numba_s=t_nb, numpy_s=t_np, speedup=t_np / t_nb, max_rel_diff=diff))
    return rows


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=2000, help="wave time steps per run")
    ap.add_argument("--nodes", type=int, default=200)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--kato-n", type=float, default=64.0)
    ap.add_argument("--kato-T", type=float, default=1.0)
    ap.add_argument("--csv", default=None, help="also write the table to this CSV file")
    args = ap.parse_args(argv)

    if not HAVE_NUMBA:
        print("numba is not installed; both columns would time the numpy path", file=sys.stderr)
        return 1
    rows = bench_waves(args.steps, args.repeats, args.nodes) + bench_kato(args.kato_n, args.kato_T, args.repeats)

    header = f"{'kernel':<11} {'case':<30} {'numba [s]':>10} {'numpy [s]':>10} {'speedup':>8} {'max diff':>10}"
    print(header)
    print("-" * len(header))
    for r in rows:
        print(f"{r['kernel']:<11} {r['case']:<30} {r['numba_s']:>10.4f} {r['numpy_s']:>10.4f} "
              f"{r['speedup']:>8.1f} {r['max_rel_diff']:>10.2e}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            wr = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
            wr.writeheader()
            wr.writerows(rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
