"""Acceptance criteria 1-10.

Each test prints one ``C<k> PASS|FAIL: ...`` line and records it for the
terminal summary. The module also runs as a script::

    python tests/test_acceptance.py
"""

import atexit
import functools
import math
import shutil
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

from decaylab.envelope import (EnvelopeSpec, PowerRate, check_discrete_recursion, psi_eval,
                               psi_inverse, solve_comparison_ode)
from decaylab.feedback import ConcaveMajorant, FeedbackLaw
from decaylab.harness import (ExperimentConfig, acceptance_config_dir, fit_decay, load_configs,
                              run_experiment, shipped_config_dir)
from decaylab.kato import convergence_study, integrate_limit, random_system
from decaylab.waves import EnergyTrace

try:
    from conftest import ACCEPTANCE_LINES
except ImportError:  # pragma: no cover - script mode outside the tests dir
    ACCEPTANCE_LINES = {}

_WORK = Path(tempfile.mkdtemp(prefix="decaylab-acceptance-"))
atexit.register(shutil.rmtree, _WORK, ignore_errors=True)


def record(k: int, ok: bool, detail: str) -> bool:
    line = f"C{k} {'PASS' if ok else 'FAIL'}: {detail}"
    ACCEPTANCE_LINES[k] = line
    print(line)
    return ok


@functools.lru_cache(maxsize=None)
def acceptance_run(name: str):
    """Run one shipped acceptance config once; return (report, trace)."""
    cfg = ExperimentConfig.load(acceptance_config_dir() / f"{name}.json")
    report = run_experiment(cfg, _WORK / name)
    trace = EnergyTrace.from_csv(report["artifacts"]["trace"]) if report["status"] == "ok" else None
    return report, trace


def damped_oscillator_energy_rate(sigma: float, omega: float) -> float:
    """Exponential rate of the energy envelope of ``y'' + sigma y' + omega^2 y = 0``."""
    disc = sigma * sigma - 4.0 * omega * omega
    return sigma if disc < 0 else sigma - math.sqrt(disc)


# ---------------------------------------------------------------------------

def criterion_1():
    configs = load_configs(shipped_config_dir())
    worst_ledger, worst_time, bad = 0.0, 0.0, []
    for cfg in configs:
        if not isinstance(cfg, ExperimentConfig):
            bad.append(f"{cfg[0]}: unreadable")
            continue
        rep = run_experiment(cfg)
        if rep["status"] != "ok":
            bad.append(f"{cfg.id}: {rep['error']}")
            continue
        E0 = rep["trace"]["E0"]
        worst_ledger = max(worst_ledger, rep["ledger_residual"] / E0)
        worst_time = max(worst_time, rep["runtime_s"])
        if not rep["monotone"] or rep["ledger_residual"] > 1e-6 * E0 or rep["runtime_s"] > 30.0:
            bad.append(cfg.id)
    ok = len(configs) == 27 and not bad
    return ok, (f"{len(configs)} configs, max ledger/E0={worst_ledger:.1e}, slowest run {worst_time:.1f}s"
                + (f", failing: {bad}" if bad else ""))


def criterion_2():
    rep, trace = acceptance_run("c2_exponential")
    fit = fit_decay(trace, "exponential")
    # the slowest mode of sigma = 1 interior damping is the first one (omega ~ 1)
    omega1 = 2.0 / (math.pi / 201) * math.sin(0.5 * math.pi / 201)
    ref = damped_oscillator_energy_rate(1.0, omega1)
    rel = abs(fit.L - ref) / ref
    ok = fit.goodness >= 0.999 and rel <= 0.05
    return ok, f"goodness={fit.goodness:.5f}, L={fit.L:.4f} vs one-mode rate {ref:.4f} (rel {rel:.2%})"


def criterion_3():
    rep, trace = acceptance_run("c3_underdamping")
    fit = fit_decay(trace, "stretched", sigma=0.5)
    free = fit_decay(trace, "stretched")
    ok = fit.goodness >= 0.99
    return ok, (f"log E vs (1+t)^0.5 goodness={fit.goodness:.5f}, clock exponent 0.5, "
                f"free-exponent fit {free.sigma:.3f}")


def criterion_4():
    rep, trace = acceptance_run("c4_superlinear")
    fit = fit_decay(trace, "power")
    ok = abs(fit.r - 1.0) <= 0.15
    return ok, f"r={fit.r:.4f} (predicted 1, +-15%), goodness={fit.goodness:.5f}, t_end={trace.t[-1]:.0f}"


def criterion_5():
    rep, trace = acceptance_run("c5_overdamping")
    pw = fit_decay(trace, "power")
    ex = fit_decay(trace, "exponential")
    ok = pw.r > 0 and ex.goodness < pw.goodness
    return ok, f"power r={pw.r:.3f} goodness={pw.goodness:.6f}; exponential goodness={ex.goodness:.6f}"


def criterion_6(n_draws: int = 100, seed: int = 2024):
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    failures, kappas = 0, []
    for _ in range(n_draws):
        b, s = rng.uniform(0.05, 0.5), rng.uniform(-0.5, 1.0)
        k, r, T = rng.uniform(0.2, 1.0), rng.uniform(1.0, 4.0), rng.uniform(0.5, 2.0)
        beta = lambda t, b=b, s=s: b * (1.0 + np.asarray(t, dtype=float)) ** (-s)
        p = PowerRate(k, r)
        # the ODE gives S_n - S_{n+1} = int beta p(S), which is the recursion
        # with p evaluated at the wrong end; a constant inflation of beta
        # restores it, and the bound being checked keeps the original beta
        kappa = 1.0
        for _ in range(40):
            traj = solve_comparison_ode(lambda t: kappa * beta(t), p, 1.0, 15 * T, t_eval=np.arange(16) * T)
            rc = check_discrete_recursion(traj.S, beta, p, T)
            if rc.ok:
                break
            kappa *= 1.5
        kappas.append(kappa)
        if not (rc.ok and np.all(traj.S[1:] <= rc.bounds + 1e-8)):
            failures += 1
    elapsed = time.perf_counter() - t0
    ok = failures == 0 and elapsed <= 10.0
    return ok, (f"{n_draws - failures}/{n_draws} recursion+dominance, {elapsed:.1f}s, "
                f"beta inflation needed in {sum(k > 1 for k in kappas)} draws (max x{max(kappas):.2f})")


def criterion_7(seed: int = 7):
    rng = np.random.default_rng(seed)
    worst_rt = 0.0
    specs = [EnvelopeSpec(T=1.0, mu=1.0, c=c, G=ConcaveMajorant(q=q), E0=E0)
             for c, q, E0 in ((1.0, 1.0, 1.0), (0.5, 3.0, 2.0), (2.0, 2.0, 0.3))]
    specs += [EnvelopeSpec(T=1.0, mu=1.0, c=1.0, G=ConcaveMajorant(), E0=1.5, rate=PowerRate(0.7, r))
              for r in (1.0, 1.5, 3.0)]
    for i in range(1000):
        spec = specs[i % len(specs)]
        x = spec.E0 * 10.0 ** rng.uniform(-6, 0)
        back = psi_inverse(spec, psi_eval(spec, x))
        worst_rt = max(worst_rt, abs(back - x) / x)

    # linear G: h = 2c x, so psi^{-1}(t) = E0 exp(-t / 2c)
    y = np.linspace(0.0, 30.0, 41)
    lin = EnvelopeSpec(T=1.0, mu=1.0, c=0.8, G=ConcaveMajorant(q=1.0), E0=2.0)
    exp_err = max(np.max(np.abs(psi_inverse(lin, y, method=m) / (2.0 * np.exp(-y / 1.6)) - 1))
                  for m in ("closed", "quadrature"))
    # power G = x^{2/(q+1)}: psi^{-1}(t) behaves like t^{2/(1-q)} for large t
    q = 3.0
    pw = EnvelopeSpec(T=1.0, mu=1.0, c=1.0, G=ConcaveMajorant(q=q), E0=1.0)
    y = np.geomspace(1e-2, 1e6, 33)
    pw_closed = psi_inverse(pw, y, method="closed")
    pw_err = np.max(np.abs(psi_inverse(pw, y, method="quadrature") / pw_closed - 1))
    tail = np.polyfit(np.log(y[-6:]), np.log(pw_closed[-6:]), 1)[0]
    ok = worst_rt <= 1e-8 and exp_err <= 1e-8 and pw_err <= 1e-8 and abs(tail + 2 / (q - 1)) < 0.05
    return ok, (f"round-trip max rel {worst_rt:.1e}; exponential case {exp_err:.1e}; "
                f"power case {pw_err:.1e} (tail exponent {tail:.3f}, expected {-2 / (q - 1):.3f})")


def criterion_8():
    system = random_system(4, FeedbackLaw.power(0.5, 0.5), damped=[True, False, True, False], seed=0, scale=0.5)
    a = np.random.default_rng(1).standard_normal(4)
    study = convergence_study(system, a, 2.0, [8, 16, 32, 64, 128])
    free = random_system(4, FeedbackLaw.linear(0.0), damped=[False] * 4, seed=0, scale=0.5)
    limit = integrate_limit(free, a, 2.0, 1e-2)
    drift = float(np.max(np.abs(limit.norms / np.linalg.norm(a) - 1)))
    ok = study.slope <= -0.8 and drift <= 1e-10
    return ok, f"slope of sup-err^2 vs n = {study.slope:.3f}; undamped |u| drift {drift:.1e}"


def criterion_9():
    rep, trace = acceptance_run("c9_pointwise_half")
    fit = fit_decay(trace, "exponential")
    _, trace23 = acceptance_run("c9_pointwise_two_thirds")
    fit23 = fit_decay(trace23, "exponential")
    ok = fit.goodness >= 0.99
    return ok, (f"xi=pi/2 goodness={fit.goodness:.4f} L={fit.L:.4g}; "
                f"xi=2pi/3 (report only) L={fit23.L:.4g} goodness={fit23.goodness:.4f}")


def criterion_10():
    parts, ok = [], True
    for name in ("c2_exponential", "c3_underdamping", "c4_superlinear", "c5_overdamping"):
        rep, _ = acceptance_run(name)
        dom = rep["dominance"]
        ok &= bool(dom["ok"])
        parts.append(f"{name.split('_')[0]} {'ok' if dom['ok'] else 'VIOLATED'} (min ratio {dom['min_ratio']:.3g})")
    return ok, "; ".join(parts)


CRITERIA = {k: globals()[f"criterion_{k}"] for k in range(1, 11)}


@pytest.mark.slow
@pytest.mark.parametrize("k", sorted(CRITERIA))
def test_criterion(k):
    ok, detail = CRITERIA[k]()
    assert record(k, ok, detail), detail


if __name__ == "__main__":
    results = []
    for k, fn in CRITERIA.items():
        results.append(record(k, *fn()))
    sys.exit(0 if all(results) else 1)
