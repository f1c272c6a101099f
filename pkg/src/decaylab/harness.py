"""Experiment orchestration: configs, rate fits, envelope comparison, sweeps."""

from __future__ import annotations

import copy
import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .envelope import (DecayLaw, EnvelopeSpec, admissible_regimes, calibrate_c,
                       closed_form_rate, envelope_clock, psi_inverse)
from .errors import (ConfigError, DecayLabError, InsufficientDataError,
                     NumericalError, UsageError)
from .feedback import FeedbackLaw, concave_majorant_for
from .modulation import (OSCILLATING, ModulationProfile, classify,
                         cumulative_integral, spatial_equivalence_constant)
from .waves import EnergyTrace, build_system, initial_state, simulate

FIT_MODELS = ("exponential", "power", "stretched")
MIN_SAMPLES = 50

DEFAULT_RUN = {"t_end": 200.0, "dt": 5e-3, "sample_every": 20, "seed": 0,
               "initial": {"kind": "modes", "n_modes": 8}}
DEFAULT_ENVELOPE = {"T": 5.0, "mu": "auto", "c": "calibrate", "regime": "auto",
                    "calibration": "recursion"}


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    id: str
    system: dict
    feedback: dict
    alpha: dict
    envelope: dict = field(default_factory=dict)
    run: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)

    KEYS = ("id", "system", "feedback", "alpha", "envelope", "run", "output")

    @classmethod
    def from_dict(cls, d: dict, default_id: str = "experiment") -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("experiment config must be a JSON object")
        unknown = set(d) - set(cls.KEYS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for key in ("system", "feedback", "alpha"):
            if key not in d:
                raise ConfigError(f"config is missing the {key!r} block")
        cfg = cls(id=str(d.get("id", default_id)), system=dict(d["system"]), feedback=dict(d["feedback"]),
                  alpha=dict(d["alpha"]), envelope=dict(d.get("envelope", {})), run=dict(d.get("run", {})),
                  output=dict(d.get("output", {})))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(data, default_id=path.stem)

    def to_dict(self) -> dict:
        return {k: copy.deepcopy(getattr(self, k)) for k in self.KEYS}

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def dump(self, path) -> None:
        Path(path).write_text(self.dumps())

    # resolved pieces
    def law(self) -> FeedbackLaw:
        return FeedbackLaw.from_dict(self.feedback)

    def profile(self) -> ModulationProfile:
        return ModulationProfile.from_dict(self.alpha)

    def run_params(self) -> dict:
        out = dict(DEFAULT_RUN)
        out.update(self.run)
        return out

    def envelope_params(self) -> dict:
        out = dict(DEFAULT_ENVELOPE)
        out.update(self.envelope)
        return out

    def regime(self) -> str:
        env = self.envelope_params()
        if env["regime"] != "auto":
            return env["regime"]
        return classify(self.profile(), float(self.run_params()["t_end"])).regime

    def validate(self) -> None:
        law = self.law()
        profile = self.profile()
        build_system(self.system, law, profile)
        run = self.run_params()
        for key in ("t_end", "dt"):
            if not float(run[key]) > 0:
                raise ConfigError(f"run.{key} must be positive")
        if int(run["sample_every"]) < 1:
            raise ConfigError("run.sample_every must be >= 1")
        env = self.envelope_params()
        if env["regime"] != "auto":
            if env["regime"] not in admissible_regimes(profile):
                raise ConfigError(f"envelope regime {env['regime']!r} inconsistent with alpha kind {profile.kind!r}")
        if not float(env["T"]) > 0:
            raise ConfigError("envelope.T must be positive")
        if env["c"] != "calibrate" and not float(env["c"]) > 0:
            raise ConfigError("envelope.c must be positive or 'calibrate'")
        if env["mu"] != "auto" and not float(env["mu"]) > 0:
            raise ConfigError("envelope.mu must be positive or 'auto'")
        if env.get("calibration", "recursion") not in ("recursion", "match2T"):
            raise ConfigError("envelope.calibration must be 'recursion' or 'match2T'")


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------

@dataclass
class FitResult:
    model: str
    L: float | None
    r: float | None
    sigma: float | None
    goodness: float
    window: tuple
    n_points: int
    intercept: float = 0.0

    @property
    def exponent(self) -> float | None:
        if self.model == "power":
            return self.r
        if self.model == "stretched":
            return self.sigma
        return self.L

    def to_dict(self) -> dict:
        return {"model": self.model, "L": self.L, "r": self.r, "sigma": self.sigma,
                "goodness": self.goodness, "window": list(self.window), "n_points": self.n_points}


def _linfit(x, y):
    A = np.vstack([x, np.ones_like(x)]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (slope * x + icpt)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum(resid ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res == 0 else 0.0)
    return float(slope), float(icpt), float(min(1.0, max(0.0, r2)))


def _usable(trace):
    t = np.asarray(trace.t, dtype=float)
    E = np.asarray(trace.E, dtype=float)
    if not (np.all(np.isfinite(E)) and np.all(np.isfinite(t))):
        raise NumericalError("trace contains non-finite samples")
    E0 = float(E[0])
    keep = (E > 1e-12 * E0) & (E > 0)
    if np.count_nonzero(keep) < MIN_SAMPLES:
        raise InsufficientDataError(f"only {np.count_nonzero(keep)} samples with E > 1e-12 E(0); need {MIN_SAMPLES}")
    return t[keep], E[keep]


def default_window(t, clock_values):
    """Time window covering the last half of the clock range."""
    c = np.asarray(clock_values, dtype=float)
    mid = c.min() + 0.5 * (c.max() - c.min())
    sel = c >= mid
    return float(t[sel].min()), float(t[sel].max())


def fit_decay(trace, model: str, clock=None, window=None, sigma: float | None = None) -> FitResult:
    """Least-squares decay fit on the tail of a trace.

    ``exponential``: ``log E = b - L clock(t)`` (clock defaults to ``t``);
    ``power``: ``log E = b - r log clock(t)`` (clock defaults to ``1 + t``);
    ``stretched``: ``log E = b - L (1+t)^sigma``; when ``sigma`` is not given
    it is chosen in ``(0, 1]`` to maximize the coefficient of determination.
    ``window = (t_lo, t_hi)`` defaults to the last half of the clock range.
    """
    if model not in FIT_MODELS:
        raise UsageError(f"model must be one of {FIT_MODELS}")
    t, E = _usable(trace)
    logE = np.log(E)

    if model == "stretched" and sigma is None and clock is None:
        best = None
        for s in np.linspace(0.02, 1.0, 50):
            res = fit_decay(trace, "stretched", window=window, sigma=float(s))
            if best is None or res.goodness > best.goodness:
                best = res
        lo, hi = max(0.005, best.sigma - 0.02), min(1.0, best.sigma + 0.02)
        for s in np.linspace(lo, hi, 41):
            res = fit_decay(trace, "stretched", window=window, sigma=float(s))
            if res.goodness > best.goodness:
                best = res
        return best

    if clock is None:
        if model == "exponential":
            clock = lambda s: s
        elif model == "power":
            clock = lambda s: 1.0 + s
        else:
            clock = lambda s: (1.0 + s) ** sigma
    c = np.asarray(clock(t), dtype=float)
    if np.any(np.diff(c) <= 0):
        raise UsageError("clock must be strictly increasing on the samples")
    if model == "power" and np.any(c <= 0):
        raise UsageError("power fits need a positive clock")
    xvar = np.log(c) if model == "power" else c
    if window is None:
        window = default_window(t, c)
    lo, hi = float(window[0]), float(window[1])
    sel = (t >= lo - 1e-12) & (t <= hi + 1e-12)
    if np.count_nonzero(sel) < 3:
        raise InsufficientDataError("fit window holds fewer than 3 usable samples")
    slope, icpt, r2 = _linfit(xvar[sel], logE[sel])
    if not np.isfinite(slope):
        raise NumericalError("non-finite fitted slope")
    win = (float(t[sel].min()), float(t[sel].max()))
    if model == "exponential":
        return FitResult("exponential", -slope, None, None, r2, win, int(sel.sum()), icpt)
    if model == "power":
        return FitResult("power", None, -slope, None, r2, win, int(sel.sum()), icpt)
    return FitResult("stretched", -slope, None, sigma, r2, win, int(sel.sum()), icpt)


# ---------------------------------------------------------------------------
# single experiment
# ---------------------------------------------------------------------------

def clock_function(name: str, profile: ModulationProfile, T: float = 0.0, delta: float = 2.0):
    """Vectorized clock ``t -> value`` named by :class:`DecayLaw`."""
    if name == "t":
        return lambda t: np.asarray(t, dtype=float)
    if name == "1+t":
        return lambda t: 1.0 + np.asarray(t, dtype=float)
    if name == "log(1+t)":
        return lambda t: 1.0 + np.log1p(np.asarray(t, dtype=float))
    if name == "int_alpha":
        return lambda t: 1.0 + cumulative_integral(lambda s: profile.reduced(s, "min"), np.asarray(t, float), 0.0)

    if name == "weighted":
        def weighted(t):
            t = np.asarray(t, dtype=float)
            f = lambda s: profile.reduced(np.maximum(s - T, 0.0), "max") * profile.reduced(s, "max") ** (-delta)
            return 1.0 + cumulative_integral(f, t, 0.0)
        return weighted
    raise UsageError(f"unknown clock {name!r}")


def _fit_predicted(trace, law: DecayLaw, profile, T, delta, window=None) -> FitResult:
    if law.model == "none":
        return fit_decay(trace, "power", window=window)
    clock = None if law.clock in ("t",) and law.model == "exponential" else clock_function(law.clock, profile, T, delta)
    if law.model == "stretched":
        return fit_decay(trace, "stretched", window=window, sigma=law.sigma)
    return fit_decay(trace, law.model, clock=clock, window=window)


def envelope_spec_for(cfg: ExperimentConfig, system, E0: float, c: float = 1.0) -> EnvelopeSpec:
    env = cfg.envelope_params()
    profile = system.profile
    law = system.law
    G = concave_majorant_for(law)
    regime = cfg.regime()
    horizon = float(cfg.run_params()["t_end"])
    mu = system.mu if env["mu"] == "auto" else float(env["mu"])
    alpha0 = classify(profile, horizon).alpha0 if regime == OSCILLATING else None
    c0 = spatial_equivalence_constant(profile, horizon)
    cval = c if env["c"] == "calibrate" else float(env["c"])
    return EnvelopeSpec(T=float(env["T"]), mu=mu, c=cval, G=G, E0=E0, regime=regime,
                        c0=c0, alpha0=alpha0, delta=G.delta)


@dataclass
class DominanceResult:
    c: float
    method: str
    ok: bool
    min_ratio: float
    match_2T_c: float | None
    match_2T_ok: bool | None
    message: str = ""

    def to_dict(self):
        return dict(self.__dict__)


def envelope_dominance(spec: EnvelopeSpec, profile, trace, method: str = "recursion",
                       fixed_c: float | None = None) -> DominanceResult:
    """Calibrate ``c`` (unless ``fixed_c``) and test ``E(t) <= envelope(t)`` for ``t >= 2T``."""
    t = np.asarray(trace.t, dtype=float)
    E = np.asarray(trace.E, dtype=float)
    cal = calibrate_c(spec, profile, t, E, method=method)
    c = fixed_c if fixed_c is not None else cal.c

    def check(cval):
        if cval is None or not np.isfinite(cval):
            return False, float("nan")
        sel = t >= 2 * spec.T - 1e-12
        if not np.any(sel):
            return True, float("inf")
        s = spec.with_c(cval)
        env = np.atleast_1d(psi_inverse(s, envelope_clock(s, profile, t[sel])))
        pos = E[sel] > 0
        ratio = float(np.min(env[pos] / E[sel][pos])) if np.any(pos) else float("inf")
        ok = bool(np.all(env * (1 + 1e-9) >= E[sel]))
        return ok, ratio

    ok, ratio = check(c)
    m_ok = check(cal.match_2T_c)[0] if cal.match_2T_c is not None else None
    return DominanceResult(float(c), method if fixed_c is None else "fixed", ok and (cal.ok or fixed_c is not None),
                           ratio, cal.match_2T_c, m_ok, cal.message)


def _exit_code(exc) -> int:
    if isinstance(exc, (ConfigError, UsageError, InsufficientDataError)):
        return 2
    if isinstance(exc, NumericalError):
        return 3
    return 1


def _write_envelope_csv(path, t, values, clock):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["t", "envelope_value", "clock_value"])
        for row in zip(t, values, clock):
            wr.writerow([repr(float(x)) for x in row])


def run_experiment(config, outdir=None, backend: str | None = None) -> dict:
    """Build, simulate, predict, fit, calibrate and (optionally) write artifacts.

    Returns a JSON-ready report. Failures are caught per stage and recorded
    with the stage name; ``report["exit_code"]`` is 0, 2 (configuration) or
    3 (numerical failure).
    """
    t_start = time.perf_counter()
    report = {"id": None, "status": "ok", "exit_code": 0, "stage": None, "artifacts": {}}
    stage = "config"
    try:
        cfg = config if isinstance(config, ExperimentConfig) else ExperimentConfig.from_dict(config)
        report["id"] = cfg.id
        stage = "build"
        law, profile = cfg.law(), cfg.profile()
        system = build_system(cfg.system, law, profile)
        run = cfg.run_params()
        stage = "simulate"
        u0, v0 = initial_state(system, run.get("initial"), seed=int(run["seed"]))
        trace = simulate(system, u0, v0, float(run["t_end"]), float(run["dt"]), int(run["sample_every"]),
                         backend=backend)
        report["trace"] = {"samples": int(trace.t.size), "steps": trace.steps, "E0": trace.E0,
                           "E_final": float(trace.E[-1]), "t_final": float(trace.t[-1]),
                           "stopped_early": trace.stopped_early, "halvings": trace.halvings,
                           "backend": trace.backend}
        report["ledger_residual"] = trace.ledger_residual
        report["monotone"] = trace.monotone
        report["max_step_rise"] = trace.max_step_rise

        stage = "predict"
        spec = envelope_spec_for(cfg, system, trace.E0)
        report["regime"] = spec.regime
        report["mu"] = spec.mu
        try:
            predicted = closed_form_rate(spec, profile)
        except DecayLabError as exc:
            predicted = DecayLaw("none", "t")
            report["predict_note"] = str(exc)
        report["predicted"] = predicted.to_dict()

        stage = "fit"
        win = run.get("window")
        try:
            fit = _fit_predicted(trace, predicted, profile, spec.T, spec.delta_value,
                                 window=tuple(win) if win else None)
            report["fitted"] = fit.to_dict()
        except InsufficientDataError as exc:
            fit = None
            report["fitted"] = None
            report["fit_note"] = str(exc)

        stage = "envelope"
        env = cfg.envelope_params()
        fixed = None if env["c"] == "calibrate" else float(env["c"])
        dom = envelope_dominance(spec, profile, trace, env.get("calibration", "recursion"), fixed)
        report["dominance"] = dom.to_dict()

        stage = "write"
        if outdir is not None:
            out = Path(outdir)
            out.mkdir(parents=True, exist_ok=True)
            names = {"trace": f"{cfg.id}_trace.csv", "envelope": f"{cfg.id}_envelope.csv",
                     "report": f"{cfg.id}_report.json"}
            names.update({k: v for k, v in cfg.output.items() if k in names})
            trace.to_csv(out / names["trace"])
            sel = trace.t >= spec.T
            s = spec.with_c(dom.c) if np.isfinite(dom.c) else spec
            clk = envelope_clock(s, profile, trace.t[sel])
            _write_envelope_csv(out / names["envelope"], trace.t[sel], np.atleast_1d(psi_inverse(s, clk)), clk)
            report["artifacts"] = {k: str(out / v) for k, v in names.items()}
        free_sigma = None
        if predicted.model == "stretched" and fit is not None:
            free_sigma = fit_decay(trace, "stretched", window=tuple(win) if win else None).sigma
            report["fitted_free_sigma"] = free_sigma
        report["exponent_check"] = _exponent_check(predicted, fit, free_sigma)
    except Exception as exc:  # noqa: BLE001 - every stage failure is reported
        report["status"] = "failed"
        report["stage"] = stage
        report["error"] = f"{type(exc).__name__}: {exc}"
        report["exit_code"] = _exit_code(exc)
    report["runtime_s"] = time.perf_counter() - t_start
    if outdir is not None and report.get("artifacts", {}).get("report"):
        Path(report["artifacts"]["report"]).write_text(json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n")
    return _jsonable(report)


def _exponent_check(predicted: DecayLaw, fit: FitResult | None, free_sigma: float | None = None):
    if fit is None or predicted.model == "none":
        return None
    if predicted.depends_on_c:
        # rates that carry the uncalibrated constant c are reported, not compared
        return {"compared": False, "predicted": predicted.exponent, "fitted": fit.exponent}
    pred = predicted.exponent
    got = free_sigma if predicted.model == "stretched" else fit.exponent
    rel = abs(got - pred) / abs(pred) if pred else float("nan")
    return {"compared": True, "predicted": pred, "fitted": got, "relative_error": rel}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating,)):
        obj = float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

SUMMARY_COLUMNS = ["config_id", "status", "predicted_model", "predicted_exponent", "fitted_model",
                   "fitted_exponent", "goodness", "dominance", "ledger_residual", "error"]


def _summary_row(cfg_id, report):
    pred = report.get("predicted") or {}
    fit = report.get("fitted") or {}
    dom = report.get("dominance") or {}
    law = DecayLaw(**pred) if pred else None
    fitted_exp = None
    if fit:
        # stretched laws report the free-sigma fit; the fixed-sigma fit would echo the prediction
        stretched = report.get("fitted_free_sigma", fit.get("sigma"))
        fitted_exp = {"power": fit.get("r"), "stretched": stretched}.get(fit.get("model"), fit.get("L"))
    return {
        "config_id": cfg_id,
        "status": report.get("status", "failed"),
        "predicted_model": pred.get("model", ""),
        "predicted_exponent": "" if law is None or law.exponent is None else repr(float(law.exponent)),
        "fitted_model": fit.get("model", ""),
        "fitted_exponent": "" if fitted_exp is None else repr(float(fitted_exp)),
        "goodness": "" if not fit else repr(float(fit["goodness"])),
        "dominance": "" if not dom else str(bool(dom.get("ok"))).lower(),
        "ledger_residual": "" if "ledger_residual" not in report else repr(float(report["ledger_residual"])),
        "error": report.get("error", ""),
    }


def _run_one(args):
    cfg_dict, outdir, backend = args
    return run_experiment(cfg_dict, outdir, backend)


def load_configs(directory) -> list:
    """All ``*.json`` configs in a directory, sorted by file name. Unparseable
    files come back as ``(stem, exception)`` so a sweep can mark them."""
    out = []
    for path in sorted(Path(directory).glob("*.json")):
        try:
            out.append(ExperimentConfig.load(path))
        except DecayLabError as exc:
            out.append((path.stem, exc))
    return out


def sweep(configs, outdir=None, workers: int = 1, backend: str | None = None, summary_name: str = "summary.csv"):
    """Run independent experiments and aggregate one summary row per config.

    Runs may execute in worker processes; aggregation happens here, in
    config order, so the summary is deterministic.
    """
    rows = []
    jobs = []
    for item in configs:
        if isinstance(item, tuple):
            rows.append((len(jobs), item[0], {"status": "failed", "error": f"{type(item[1]).__name__}: {item[1]}"}))
            jobs.append(None)
            continue
        cfg = item if isinstance(item, ExperimentConfig) else ExperimentConfig.from_dict(item)
        jobs.append((cfg.to_dict(), None if outdir is None else str(outdir), backend))
    todo = [(i, j) for i, j in enumerate(jobs) if j is not None]
    if workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, [j for _, j in todo]))
    else:
        results = [_run_one(j) for _, j in todo]
    for (i, job), rep in zip(todo, results):
        rows.append((i, job[0]["id"], rep))
    rows.sort(key=lambda r: r[0])
    table = [_summary_row(cid, rep) for _, cid, rep in rows]
    if outdir is not None:
        out = Path(outdir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / summary_name, "w", newline="") as fh:
            wr = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS, lineterminator="\n")
            wr.writeheader()
            wr.writerows(table)
    return table


def shipped_config_dir() -> Path:
    return Path(__file__).parent / "data" / "configs"


def acceptance_config_dir() -> Path:
    return Path(__file__).parent / "data" / "acceptance"
