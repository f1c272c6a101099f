"""Command-line entry point ``decaylab``.

Exit codes: 0 success, 2 configuration/usage error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, DecayLabError, NumericalError, UsageError
from .feedback import FeedbackLaw, validate_feedback
from .harness import (FIT_MODELS, ExperimentConfig, _jsonable, _write_envelope_csv,
                      envelope_dominance, envelope_spec_for, fit_decay, load_configs,
                      run_experiment, sweep)
from .envelope import envelope_clock, psi_inverse
from .kato import convergence_study, random_system
from .waves import EnergyTrace, build_system, initial_state, simulate


def _print_json(obj):
    print(json.dumps(_jsonable(obj), indent=2, sort_keys=True))


def cmd_simulate(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    report = run_experiment(cfg, args.out, backend=args.backend)
    _print_json(report)
    return int(report["exit_code"])


def cmd_envelope(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    law, profile = cfg.law(), cfg.profile()
    system = build_system(cfg.system, law, profile)
    run = cfg.run_params()
    if args.trace:
        trace = EnergyTrace.from_csv(args.trace)
    else:
        u0, v0 = initial_state(system, run.get("initial"), seed=int(run["seed"]))
        trace = simulate(system, u0, v0, float(run["t_end"]), float(run["dt"]), int(run["sample_every"]),
                         backend=args.backend)
    spec = envelope_spec_for(cfg, system, trace.E0)
    env = cfg.envelope_params()
    fixed = None if env["c"] == "calibrate" else float(env["c"])
    dom = envelope_dominance(spec, profile, trace, env.get("calibration", "recursion"), fixed)
    spec = spec.with_c(dom.c) if np.isfinite(dom.c) else spec
    t = trace.t[trace.t >= spec.T]
    clk = envelope_clock(spec, profile, t)
    vals = np.atleast_1d(psi_inverse(spec, clk))
    out = Path(args.output) if args.output else Path(f"{cfg.id}_envelope.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_envelope_csv(out, t, vals, clk)
    _print_json({"envelope_csv": str(out), "c": dom.c, "dominance": dom.ok, "regime": spec.regime})
    return 0


def cmd_fit(args) -> int:
    trace = EnergyTrace.from_csv(args.trace)
    clock = None
    if args.clock == "t":
        clock = lambda s: np.asarray(s, dtype=float)
    elif args.clock == "1+t":
        clock = lambda s: 1.0 + np.asarray(s, dtype=float)
    window = tuple(args.window) if args.window else None
    res = fit_decay(trace, args.model, clock=clock, window=window, sigma=args.sigma)
    _print_json(res.to_dict())
    return 0


def cmd_sweep(args) -> int:
    configs = load_configs(args.directory)
    out = args.out or str(Path(args.directory) / "results")
    rows = sweep(configs, out, workers=args.workers, backend=args.backend)
    failed = sum(r["status"] != "ok" for r in rows)
    _print_json({"summary": str(Path(out) / "summary.csv"), "runs": len(rows), "failed": failed})
    return 0


def cmd_validate_feedback(args) -> int:
    data = json.loads(Path(args.config).read_text())
    block = data.get("feedback", data) if isinstance(data, dict) else None
    if not isinstance(block, dict):
        raise ConfigError("expected a JSON object with a 'feedback' block")
    report = validate_feedback(FeedbackLaw.from_dict(block))
    _print_json(report.to_dict())
    return 0 if report.ok else 2


def cmd_kato_study(args) -> int:
    law = FeedbackLaw.linear(1.0) if args.gamma is None else FeedbackLaw.power(args.gamma, args.p)
    mask = np.zeros(args.dim, dtype=bool)
    mask[:: max(1, args.damp_every)] = True
    system = random_system(args.dim, law, damped=mask, omega=args.omega, seed=args.seed, scale=args.scale)
    rng = np.random.default_rng(args.seed + 1)
    a = rng.standard_normal(args.dim)
    n_list = [float(x) for x in args.n_list.split(",")]
    study = convergence_study(system, a, args.T, n_list, backend=args.backend)
    out = Path(args.output) if args.output else None
    if out is not None:
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["n", "sup_error"])
            for n, e in study.to_rows():
                wr.writerow([n, repr(e)])
    _print_json({"rows": study.to_rows(), "slope_log_err2_vs_log_n": study.slope, "C": study.C,
                 "csv": str(out) if out else None})
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="decaylab", description="Energy-decay laboratory for damped hyperbolic systems.")
    ap.add_argument("--version", action="version", version=f"decaylab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def backend_opt(p):
        p.add_argument("--backend", choices=["numba", "numpy"], default=None,
                       help="kernel backend (default: $DECAYLAB_BACKEND or numba)")

    p = sub.add_parser("simulate", help="run one experiment config end to end")
    p.add_argument("config")
    p.add_argument("--out", default=None, help="directory for trace/envelope CSV and report JSON")
    backend_opt(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("envelope", help="emit the calibrated envelope CSV (t, envelope_value, clock_value)")
    p.add_argument("config")
    p.add_argument("--trace", default=None, help="existing t,E,D trace (default: simulate the config)")
    p.add_argument("-o", "--output", default=None)
    backend_opt(p)
    p.set_defaults(func=cmd_envelope)

    p = sub.add_parser("fit", help="fit a decay law to a t,E,D trace")
    p.add_argument("trace")
    p.add_argument("--model", choices=FIT_MODELS, required=True)
    p.add_argument("--sigma", type=float, default=None, help="stretched exponent (searched when omitted)")
    p.add_argument("--clock", choices=["t", "1+t"], default=None)
    p.add_argument("--window", type=float, nargs=2, metavar=("T_LO", "T_HI"), default=None)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("sweep", help="run every *.json config in a directory")
    p.add_argument("directory")
    p.add_argument("--out", default=None)
    p.add_argument("--workers", type=int, default=1)
    backend_opt(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate-feedback", help="check the structural assumptions of a feedback law")
    p.add_argument("config")
    p.set_defaults(func=cmd_validate_feedback)

    p = sub.add_parser("kato-study", help="Yosida-approximation convergence study")
    p.add_argument("--dim", type=int, default=4)
    p.add_argument("--gamma", type=float, default=None, help="power-law exponent (linear g when omitted)")
    p.add_argument("--p", type=float, default=None)
    p.add_argument("--omega", type=float, default=0.0)
    p.add_argument("--n-list", default="8,16,32,64,128")
    p.add_argument("--T", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scale", type=float, default=0.5, help="scale of the random skew part")
    p.add_argument("--damp-every", type=int, default=2, help="damp every k-th component")
    p.add_argument("-o", "--output", default=None, help="CSV with columns n,sup_error")
    backend_opt(p)
    p.set_defaults(func=cmd_kato_study)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return int(args.func(args))
    except (ConfigError, UsageError) as exc:
        print(f"decaylab: error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"decaylab: numerical failure: {exc}", file=sys.stderr)
        return 3
    except DecayLabError as exc:
        print(f"decaylab: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError) as exc:
        print(f"decaylab: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
