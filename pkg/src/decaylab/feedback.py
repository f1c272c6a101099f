"""Damping nonlinearities g and their concave majorants G.

A :class:`FeedbackLaw` is a monotone, odd, linearly bounded map with
``g(0) = 0``. Three kinds are shipped:

``power_saturated``
    ``g(x) = |x|^(p-1) x`` for ``|x| <= 1`` and ``g(x) = x`` beyond. With
    the default ``p = gamma`` this is the classical sublinear/linear law;
    ``gamma = 1, p > 1`` gives the superlinear law ``x^p`` near zero.
``linear``
    ``g(x) = M x``. ``M = 0`` switches damping off.
``custom_sampled``
    Piecewise linear interpolant of a user table, extended linearly with
    the end slopes.

For ``dimension > 1`` laws act radially: ``g(x) = g1(|x|) x / |x|``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._accel import njit
from .errors import ConfigError, DomainError, UsageError

LAW_LINEAR = 0
LAW_POWER = 1
LAW_TABLE = 2

# regularization radius for sublinear laws inside implicit solves
G_EPS = 1e-12

KINDS = ("power_saturated", "linear", "custom_sampled")


@dataclass(frozen=True)
class FeedbackLaw:
    kind: str = "power_saturated"
    gamma: float = 1.0
    p: float | None = None
    M: float = 1.0
    m: float = 1.0
    dimension: int = 1
    table_x: tuple = field(default=(), repr=False)
    table_y: tuple = field(default=(), repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown feedback kind {self.kind!r}")
        if self.p is None:
            object.__setattr__(self, "p", float(self.gamma))
        if self.dimension < 1:
            raise ConfigError("dimension must be a positive integer")
        if self.kind == "power_saturated":
            if not (0.0 < self.gamma <= 1.0):
                raise ConfigError(f"gamma must lie in (0, 1], got {self.gamma}")
            if self.p < self.gamma:
                raise ConfigError(f"p must be >= gamma (got p={self.p}, gamma={self.gamma})")
        if self.kind == "custom_sampled":
            xs = np.asarray(self.table_x, dtype=float)
            ys = np.asarray(self.table_y, dtype=float)
            if xs.ndim != 1 or xs.size < 2 or xs.shape != ys.shape:
                raise ConfigError("custom_sampled law needs matching tables with >= 2 points")
            if np.any(np.diff(xs) <= 0):
                raise ConfigError("custom_sampled table_x must be strictly increasing")
            object.__setattr__(self, "table_x", tuple(float(v) for v in xs))
            object.__setattr__(self, "table_y", tuple(float(v) for v in ys))

    @classmethod
    def linear(cls, slope: float = 1.0) -> "FeedbackLaw":
        return cls(kind="linear", gamma=1.0, p=1.0, M=slope, m=slope)

    @classmethod
    def power(cls, gamma: float, p: float | None = None) -> "FeedbackLaw":
        return cls(kind="power_saturated", gamma=gamma, p=p)

    @classmethod
    def sampled(cls, xs, ys, gamma: float = 1.0, p: float | None = None) -> "FeedbackLaw":
        return cls(kind="custom_sampled", gamma=gamma, p=p,
                   table_x=tuple(np.asarray(xs, float)), table_y=tuple(np.asarray(ys, float)))

    @classmethod
    def from_dict(cls, d: dict) -> "FeedbackLaw":
        d = dict(d)
        kind = d.pop("kind", "power_saturated")
        if kind == "custom_sampled":
            d["table_x"] = tuple(d.pop("table_x", d.pop("x", ())))
            d["table_y"] = tuple(d.pop("table_y", d.pop("y", ())))
        allowed = {"gamma", "p", "M", "m", "dimension", "table_x", "table_y"}
        unknown = set(d) - allowed
        if unknown:
            raise ConfigError(f"unknown feedback keys: {sorted(unknown)}")
        return cls(kind=kind, **d)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "gamma": self.gamma, "p": self.p, "M": self.M, "m": self.m}
        if self.dimension != 1:
            d["dimension"] = self.dimension
        if self.kind == "custom_sampled":
            d["table_x"] = list(self.table_x)
            d["table_y"] = list(self.table_y)
        return d

    def kernel_params(self):
        """Flat encoding ``(code, param, xs, ys)`` consumed by the compiled kernels."""
        empty = np.zeros(1)
        if self.kind == "linear":
            return LAW_LINEAR, float(self.M), empty, empty
        if self.kind == "power_saturated":
            return LAW_POWER, float(self.p), empty, empty
        return (LAW_TABLE, 0.0, np.asarray(self.table_x, dtype=float),
                np.asarray(self.table_y, dtype=float))


# --------------------------------------------------------------------------
# scalar kernels (compiled); eps > 0 regularizes sublinear power laws near 0


@njit
def g_scalar(z, code, param, xs, ys, eps):
    if code == 0:
        return param * z
    if code == 1:
        a = abs(z)
        if a >= 1.0:
            return z
        if z == 0.0:
            return 0.0
        if param < 1.0 and a < eps:
            return z * eps ** (param - 1.0)
        return z * a ** (param - 1.0)
    n = xs.shape[0]
    if z <= xs[0]:
        return ys[0] + (ys[1] - ys[0]) / (xs[1] - xs[0]) * (z - xs[0])
    if z >= xs[n - 1]:
        return ys[n - 1] + (ys[n - 1] - ys[n - 2]) / (xs[n - 1] - xs[n - 2]) * (z - xs[n - 1])
    i = np.searchsorted(xs, z) - 1
    w = (z - xs[i]) / (xs[i + 1] - xs[i])
    return ys[i] + w * (ys[i + 1] - ys[i])


@njit
def dg_scalar(z, code, param, xs, ys, eps):
    if code == 0:
        return param
    if code == 1:
        a = abs(z)
        if a >= 1.0:
            return 1.0
        if param < 1.0 and a < eps:
            return eps ** (param - 1.0)
        if a == 0.0:
            if param < 1.0:
                return np.inf
            return 1.0 if param == 1.0 else 0.0
        return param * a ** (param - 1.0)
    n = xs.shape[0]
    if z <= xs[0]:
        return (ys[1] - ys[0]) / (xs[1] - xs[0])
    if z >= xs[n - 1]:
        return (ys[n - 1] - ys[n - 2]) / (xs[n - 1] - xs[n - 2])
    i = np.searchsorted(xs, z) - 1
    return (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i])


def g_vec(z, code, param, xs, ys, eps):
    """Numpy counterpart of :func:`g_scalar` (elementwise)."""
    z = np.asarray(z, dtype=float)
    if code == LAW_LINEAR:
        return param * z
    if code == LAW_POWER:
        a = np.abs(z)
        with np.errstate(divide="ignore", invalid="ignore"):
            core = z * np.where(a > 0, a, 1.0) ** (param - 1.0)
        if param < 1.0 and eps > 0:
            core = np.where(a < eps, z * eps ** (param - 1.0), core)
        core = np.where(a == 0, 0.0, core)
        return np.where(a >= 1.0, z, core)
    lo_slope = (ys[1] - ys[0]) / (xs[1] - xs[0])
    hi_slope = (ys[-1] - ys[-2]) / (xs[-1] - xs[-2])
    out = np.interp(z, xs, ys)
    out = np.where(z < xs[0], ys[0] + lo_slope * (z - xs[0]), out)
    return np.where(z > xs[-1], ys[-1] + hi_slope * (z - xs[-1]), out)


def dg_vec(z, code, param, xs, ys, eps):
    z = np.asarray(z, dtype=float)
    if code == LAW_LINEAR:
        return np.full_like(z, param)
    if code == LAW_POWER:
        a = np.abs(z)
        core = param * np.where(a > 0, a, 1.0) ** (param - 1.0)
        if param < 1.0:
            core = np.where(a < eps, eps ** (param - 1.0), core) if eps > 0 else np.where(a == 0, np.inf, core)
        elif param > 1.0:
            core = np.where(a == 0, 0.0, core)
        return np.where(a >= 1.0, 1.0, core)
    slopes = np.diff(ys) / np.diff(xs)
    idx = np.clip(np.searchsorted(xs, z) - 1, 0, len(slopes) - 1)
    return slopes[idx]


# --------------------------------------------------------------------------
# public operations


def eval_g(law: FeedbackLaw, x):
    """Evaluate ``g`` at a scalar, an array of scalars, or (radial laws) an
    array whose last axis has length ``law.dimension``."""
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("eval_g: non-finite input")
    code, param, xs, ys = law.kernel_params()
    if law.dimension == 1:
        out = g_vec(arr, code, param, xs, ys, 0.0)
        return float(out) if out.ndim == 0 else out
    if arr.shape[-1] != law.dimension:
        raise DomainError(f"expected last axis of length {law.dimension}, got {arr.shape}")
    r = np.linalg.norm(arr, axis=-1, keepdims=True)
    gr = g_vec(r, code, param, xs, ys, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(r > 0, gr / np.where(r > 0, r, 1.0) * arr, 0.0)
    return out


def default_grid(per_decade: int = 2048, lo_exp: float = -8.0, hi_exp: float = 3.0) -> np.ndarray:
    """Log-spaced positive points over ``[10^lo_exp, 10^hi_exp]``, their
    reflections, 0 and +-1."""
    n = int(round((hi_exp - lo_exp) * per_decade)) + 1
    pos = np.logspace(lo_exp, hi_exp, n)
    pos = np.union1d(pos, [1.0])
    return np.concatenate([-pos[::-1], [0.0], pos])


@dataclass(frozen=True)
class CheckResult:
    passed: bool
    constant: float | None = None
    detail: str = ""


@dataclass(frozen=True)
class ValidationReport:
    checks: dict
    M: float
    m: float
    c0: float
    C0: float

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks.values())

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "constants": {"M": self.M, "m": self.m, "c0": self.c0, "C0": self.C0},
            "checks": {k: {"passed": v.passed, "constant": v.constant, "detail": v.detail}
                       for k, v in self.checks.items()},
        }


def validate_feedback(law: FeedbackLaw, grid=None) -> ValidationReport:
    """Check the structural assumptions on ``g`` over a sample grid.

    Reported checks: ``goo`` (g(0)=0), ``gmono`` (monotone), ``gbounded``
    (|g| <= M(1+|x|)), ``gstrp`` (x g >= m x^2 for |x| >= 1) and ``spo15``
    (x g >= c0 |x|^(p+1), |g| <= C0 |x|^gamma for |x| <= 1), each with the
    tightest constant seen on the grid.
    """
    if grid is None:
        grid = default_grid()
    x = np.unique(np.asarray(grid, dtype=float).ravel())
    if x.size == 0:
        raise UsageError("validate_feedback: empty grid")
    if not (np.any(x == 0.0) and np.any(x == 1.0) and np.any(x == -1.0)):
        raise UsageError("validation grid must contain 0 and +-1")
    if x.min() > -2.0 or x.max() < 2.0:
        raise UsageError("validation grid must span at least [-2, 2]")

    code, param, xs, ys = law.kernel_params()
    g = g_vec(x, code, param, xs, ys, 0.0)
    checks = {}

    g0 = float(g[x == 0.0][0])
    checks["goo"] = CheckResult(g0 == 0.0, g0, "g(0) = 0")

    dg = np.diff(g)
    worst = float(dg.min()) if dg.size else 0.0
    checks["gmono"] = CheckResult(bool(worst >= 0.0), worst, "min consecutive increment of g")

    M_obs = float(np.max(np.abs(g) / (1.0 + np.abs(x))))
    checks["gbounded"] = CheckResult(bool(np.isfinite(M_obs)), M_obs, "max |g|/(1+|x|)")

    big = np.abs(x) >= 1.0
    m_obs = float(np.min(x[big] * g[big] / x[big] ** 2))
    checks["gstrp"] = CheckResult(bool(m_obs > 0.0), m_obs, "min x g(x)/x^2 over |x|>=1")

    small = (np.abs(x) <= 1.0) & (x != 0.0)
    ax = np.abs(x[small])
    c0 = float(np.min(x[small] * g[small] / ax ** (law.p + 1.0)))
    C0 = float(np.max(np.abs(g[small]) / ax ** law.gamma))
    ok15 = bool(c0 > 0.0 and np.isfinite(C0))
    checks["spo15"] = CheckResult(ok15, c0, f"c0={c0:.6g}, C0={C0:.6g} for p={law.p}, gamma={law.gamma}")
    return ValidationReport(checks=checks, M=M_obs, m=m_obs, c0=c0, C0=C0)


def check_monotone_pairs(law: FeedbackLaw, n_pairs: int = 10_000, scale: float = 3.0, rng=None) -> bool:
    """Monotonicity ``(g(a)-g(b))·(a-b) >= 0`` on random pairs (vector laws included)."""
    rng = np.random.default_rng(rng)
    shape = (n_pairs,) if law.dimension == 1 else (n_pairs, law.dimension)
    # mix of scales so both branches of saturated laws are exercised
    mags = 10.0 ** rng.uniform(-6, np.log10(scale), size=shape)
    a = rng.choice([-1.0, 1.0], size=shape) * mags
    b = rng.choice([-1.0, 1.0], size=shape) * 10.0 ** rng.uniform(-6, np.log10(scale), size=shape)
    ga, gb = eval_g(law, a), eval_g(law, b)
    prod = (ga - gb) * (a - b)
    if law.dimension > 1:
        prod = prod.sum(axis=-1)
    return bool(np.all(prod >= -1e-14 * (np.abs(a) + np.abs(b)).reshape(prod.shape[0], -1).sum(axis=-1)))


# --------------------------------------------------------------------------
# concave majorants


@dataclass(frozen=True)
class ConcaveMajorant:
    """``G(x) = C x^(2/(q+1))`` (``kind='power'``) or a sampled concave table."""

    kind: str = "power"
    q: float = 1.0
    delta: float = 2.0
    C_G: float = 1.0
    table_x: tuple = field(default=(), repr=False)
    table_y: tuple = field(default=(), repr=False)

    @property
    def exponent(self) -> float:
        return 2.0 / (self.q + 1.0)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "power":
            out = np.where(x > 0, np.abs(x) ** self.exponent, 0.0)
        else:
            xs = np.asarray(self.table_x)
            ys = np.asarray(self.table_y)
            slope = (ys[-1] - ys[-2]) / (xs[-1] - xs[-2])
            out = np.where(x > xs[-1], ys[-1] + slope * (x - xs[-1]), np.interp(x, xs, ys))
        return float(out) if out.ndim == 0 else out

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "q": self.q, "delta": self.delta, "C_G": self.C_G}
        if self.kind != "power":
            d["table_x"] = list(self.table_x)
            d["table_y"] = list(self.table_y)
        return d


def concave_majorant_for(law: FeedbackLaw) -> ConcaveMajorant:
    """Power majorant with ``q = (p+1)/gamma - 1``, ``delta = q + 1``, ``C_G = 1``.

    ``q < 1`` cannot arise from a valid law (``p >= gamma``); if it does the
    linear-regime majorant ``G(x) = x`` is returned instead.
    """
    if law.kind == "custom_sampled" and law.p is None:
        raise UsageError("custom law without declared (gamma, p)")
    q = (law.p + 1.0) / law.gamma - 1.0
    if q < 1.0:
        q = 1.0
    return ConcaveMajorant(kind="power", q=q, delta=q + 1.0, C_G=1.0)


def check_propG(G: ConcaveMajorant, betas, xs, rtol: float = 1e-12) -> bool:
    """``beta^2 G(x) <= C_G G(beta^delta x)`` at every sampled pair."""
    b = np.asarray(betas, dtype=float)
    x = np.asarray(xs, dtype=float)
    if np.any(b <= 0) or np.any(x <= 0):
        raise DomainError("check_propG needs beta, x > 0")
    b, x = np.broadcast_arrays(b, x)
    lhs = b ** 2 * G(x)
    rhs = G.C_G * G(b ** G.delta * x)
    return bool(np.all(lhs <= rhs * (1.0 + rtol)))


def check_concave_increasing(G: ConcaveMajorant, grid=None) -> bool:
    if grid is None:
        grid = np.logspace(-8, 3, 2000)
    x = np.concatenate([[0.0], np.sort(np.asarray(grid, dtype=float))])
    y = G(x)
    if y[0] != 0.0 or np.any(np.diff(y) <= 0):
        return False
    dq = np.diff(y) / np.diff(x)
    return bool(np.all(np.diff(dq) <= 1e-12 * np.abs(dq[:-1])))


def gnear0_constant(law: FeedbackLaw, G: ConcaveMajorant, grid=None) -> float:
    """Smallest ``K`` with ``|x|^2 + |g(x)|^2 <= K G(x g(x))`` on ``0 < |x| <= 1``.

    With the power majorant the inequality holds up to a constant
    ``(1 + C0^2) / c0^(2/(q+1))``, which the envelope absorbs into ``c``.
    """
    if grid is None:
        grid = default_grid()
    x = np.asarray(grid, dtype=float)
    x = x[(np.abs(x) <= 1.0) & (x != 0.0)]
    g = eval_g(law, x)
    lhs = x ** 2 + g ** 2
    rhs = G(x * g)
    return float(np.max(lhs / rhs))
