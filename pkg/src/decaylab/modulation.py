"""Time (and piecewise space) modulation factors alpha(t, x) of the damping."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._numerics import adaptive_simpson
from .errors import ConfigError, DomainError, InvalidProfileError, UsageError

NON_INCREASING = "NonIncreasing"
NON_DECREASING = "NonDecreasing"
OSCILLATING = "Oscillating"
REGIMES = (NON_INCREASING, NON_DECREASING, OSCILLATING)

PROFILE_KINDS = ("power_decay", "power_growth", "oscillating", "constant", "piecewise_in_space")

QUAD_TOL = 1e-10


@dataclass(frozen=True)
class Region:
    lo: float
    hi: float
    profile: "ModulationProfile"

    def contains(self, x):
        return (x >= self.lo) & (x <= self.hi)


@dataclass(frozen=True)
class ModulationProfile:
    """A positive damping factor.

    ``power_decay``  ``(1+t)^-sigma``;  ``power_growth``  ``(1+t)^sigma``;
    ``oscillating``  ``a + b sin(omega t)`` (requires ``a > |b|``);
    ``constant``  ``value``; ``piecewise_in_space``  one time profile per
    spatial interval ``[lo, hi]``.
    """

    kind: str = "constant"
    sigma: float = 0.0
    a: float = 1.0
    b: float = 0.0
    omega: float = 1.0
    value: float = 1.0
    regions: tuple = field(default=(), repr=False)

    def __post_init__(self):
        if self.kind not in PROFILE_KINDS:
            raise ConfigError(f"unknown alpha kind {self.kind!r}")
        if self.kind in ("power_decay", "power_growth") and not self.sigma > 0:
            raise InvalidProfileError(f"{self.kind} needs sigma > 0")
        if self.kind == "oscillating" and not self.a > abs(self.b):
            raise InvalidProfileError("oscillating profile needs a > |b| to stay positive")
        if self.kind == "constant" and not self.value > 0:
            raise InvalidProfileError("constant profile must be positive")
        if self.kind == "piecewise_in_space":
            if not self.regions:
                raise ConfigError("piecewise_in_space needs at least one region")
            for r in self.regions:
                if r.profile.kind == "piecewise_in_space":
                    raise ConfigError("regions cannot nest piecewise profiles")
                if not r.hi > r.lo:
                    raise ConfigError(f"region [{r.lo}, {r.hi}] is empty")

    # ---- constructors / serialization
    @classmethod
    def constant(cls, value: float = 1.0):
        return cls(kind="constant", value=value)

    @classmethod
    def power_decay(cls, sigma: float):
        return cls(kind="power_decay", sigma=sigma)

    @classmethod
    def power_growth(cls, sigma: float):
        return cls(kind="power_growth", sigma=sigma)

    @classmethod
    def oscillating(cls, a: float, b: float, omega: float):
        return cls(kind="oscillating", a=a, b=b, omega=omega)

    @classmethod
    def piecewise(cls, regions):
        regs = tuple(r if isinstance(r, Region) else Region(float(r[0]), float(r[1]), r[2]) for r in regions)
        return cls(kind="piecewise_in_space", regions=regs)

    @classmethod
    def from_dict(cls, d: dict) -> "ModulationProfile":
        d = dict(d)
        kind = d.pop("kind", "constant")
        if kind == "piecewise_in_space":
            regs = []
            for r in d.pop("regions", []):
                lo, hi = r["mask"]
                regs.append(Region(float(lo), float(hi), cls.from_dict(r["profile"])))
            return cls(kind=kind, regions=tuple(regs))
        allowed = {"sigma", "a", "b", "omega", "value"}
        unknown = set(d) - allowed
        if unknown:
            raise ConfigError(f"unknown alpha keys: {sorted(unknown)}")
        return cls(kind=kind, **{k: float(v) for k, v in d.items()})

    def to_dict(self) -> dict:
        if self.kind == "piecewise_in_space":
            return {"kind": self.kind,
                    "regions": [{"mask": [r.lo, r.hi], "profile": r.profile.to_dict()} for r in self.regions]}
        if self.kind in ("power_decay", "power_growth"):
            return {"kind": self.kind, "sigma": self.sigma}
        if self.kind == "oscillating":
            return {"kind": self.kind, "a": self.a, "b": self.b, "omega": self.omega}
        return {"kind": self.kind, "value": self.value}

    # ---- evaluation
    @property
    def spatially_uniform(self) -> bool:
        return self.kind != "piecewise_in_space"

    def time_profile(self, t):
        """Value of a spatially uniform profile at time(s) ``t``."""
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            return np.full_like(t, self.value)
        if self.kind == "power_decay":
            return (1.0 + t) ** (-self.sigma)
        if self.kind == "power_growth":
            return (1.0 + t) ** self.sigma
        if self.kind == "oscillating":
            return self.a + self.b * np.sin(self.omega * t)
        raise UsageError("time_profile needs a spatially uniform profile; use reduced()")

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            return np.zeros_like(t)
        if self.kind == "power_decay":
            return -self.sigma * (1.0 + t) ** (-self.sigma - 1.0)
        if self.kind == "power_growth":
            return self.sigma * (1.0 + t) ** (self.sigma - 1.0)
        if self.kind == "oscillating":
            return self.b * self.omega * np.cos(self.omega * t)
        raise UsageError("derivative is defined region by region for piecewise profiles")

    def region_values(self, t) -> np.ndarray:
        """Matrix ``(len(t), n_regions)`` of per-region values; a single
        column for spatially uniform profiles."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if self.spatially_uniform:
            return self.time_profile(t)[:, None]
        return np.stack([r.profile.time_profile(t) for r in self.regions], axis=1)

    def reduced(self, t, how: str = "min"):
        """``min`` (or ``max``) over space of ``alpha(t, .)``."""
        if self.spatially_uniform:
            return self.time_profile(t)
        vals = self.region_values(t)
        out = vals.min(axis=1) if how == "min" else vals.max(axis=1)
        return out if np.ndim(t) else float(out[0])

    def region_index(self, x) -> np.ndarray:
        """Index of the region containing each ``x`` (-1 when outside all)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        idx = np.full(x.shape, -1, dtype=np.int64)
        if self.spatially_uniform:
            idx[:] = 0
            return idx
        for j, r in enumerate(self.regions):
            idx = np.where((idx < 0) & r.contains(x), j, idx)
        return idx

    def __call__(self, t, x=None):
        return eval_alpha(self, t, x)


def eval_alpha(profile: ModulationProfile, t, x=None):
    """``alpha(t, x)``; ``x`` is required for piecewise profiles."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise DomainError("eval_alpha: t must be >= 0")
    if profile.spatially_uniform:
        out = profile.time_profile(t_arr)
    else:
        if x is None:
            raise UsageError("piecewise_in_space profile needs a spatial point x")
        idx = profile.region_index(x)
        if np.any(idx < 0):
            raise DomainError("x lies outside every region of the profile")
        vals = profile.region_values(np.atleast_1d(t_arr))
        out = vals[np.arange(vals.shape[0]) if vals.shape[0] == idx.size else 0, idx]
        if t_arr.ndim == 0 and np.ndim(x) == 0:
            out = out[0]
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class Classification:
    regime: str
    alpha0: float
    alpha_tilde: float


def classify(profile: ModulationProfile, horizon: float, step: float = 1e-3) -> Classification:
    """Regime label plus sampled bounds ``(alpha0, alpha_tilde)`` over ``[0, horizon]``.

    A profile flat to within 1e-12 is labelled Oscillating (bounded), which
    routes it to the autonomous-rate envelope.
    """
    if not horizon > 0:
        raise UsageError("horizon must be positive")
    n = int(np.ceil(horizon / step)) + 1
    t = np.linspace(0.0, horizon, n)
    vals = profile.region_values(t)
    if np.any(~np.isfinite(vals)) or np.any(vals <= 0):
        raise InvalidProfileError("profile has non-positive samples")
    d = np.diff(vals, axis=0)
    non_inc = bool(np.all(d <= 1e-12))
    non_dec = bool(np.all(d >= -1e-12))
    if non_inc and non_dec:
        regime = OSCILLATING
    elif non_inc:
        regime = NON_INCREASING
    elif non_dec:
        regime = NON_DECREASING
    else:
        regime = OSCILLATING
    return Classification(regime, float(vals.min()), float(vals.max()))


def _reducer_for(profile, reduce):
    if reduce not in ("min", "max"):
        raise UsageError("reduce must be 'min' or 'max'")
    return lambda s: profile.reduced(s, reduce)


def integral_alpha(profile: ModulationProfile, T: float, t, reduce: str = "min", tol: float = QUAD_TOL):
    """``int_T^t alpha(s) ds`` by adaptive Simpson (vectorized over ``t``)."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < T) or T < 0:
        raise UsageError("integral_alpha needs t >= T >= 0")
    return adaptive_simpson(_reducer_for(profile, reduce), T, t_arr, tol=tol)


def _check_nondecreasing(profile):
    kinds = [profile.kind] if profile.spatially_uniform else [r.profile.kind for r in profile.regions]
    if any(k in ("power_decay", "oscillating") for k in kinds):
        raise UsageError("integral_weighted applies to non-decreasing profiles")


def integral_weighted(profile: ModulationProfile, delta: float, T: float, t, reduce: str = "max",
                      tol: float = QUAD_TOL):
    """``int_T^t alpha(s-T) alpha(s)^-delta ds`` (non-decreasing regime)."""
    _check_nondecreasing(profile)
    if delta < 2:
        raise UsageError("delta must be >= 2")
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < T) or T < 0:
        raise UsageError("integral_weighted needs t >= T >= 0")
    f = _reducer_for(profile, reduce)
    return adaptive_simpson(lambda s: f(s - T) * f(s) ** (-delta), T, t_arr, tol=tol)


def cumulative_integral(f, times, start: float, tol: float = QUAD_TOL) -> np.ndarray:
    """``int_start^t f`` at each of the sorted ``times`` (all >= start),
    integrating consecutive gaps in one batched quadrature."""
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        return times.copy()
    if np.any(np.diff(times) < 0):
        raise UsageError("times must be sorted")
    edges = np.concatenate([[start], times])
    pieces = adaptive_simpson(f, edges[:-1], edges[1:], tol=tol / max(1, times.size))
    return np.cumsum(pieces)


def lipschitz_constant_estimate(profile: ModulationProfile, T: float, step: float = 1e-4) -> float:
    """``sup |d alpha / dt|`` over ``[0, T]`` sampled on a ``step`` grid."""
    n = int(np.ceil(T / step)) + 1
    t = np.linspace(0.0, T, n)
    profiles = [profile] if profile.spatially_uniform else [r.profile for r in profile.regions]
    return float(max(np.max(np.abs(p.derivative(t))) for p in profiles))


def spatial_equivalence_constant(profile: ModulationProfile, horizon: float, step: float = 1e-2) -> float:
    """Observed ``c0 = inf_t min_j alpha_j(t) / max_j alpha_j(t)``; 1 for uniform profiles."""
    if profile.spatially_uniform:
        return 1.0
    t = np.linspace(0.0, horizon, int(np.ceil(horizon / step)) + 1)
    vals = profile.region_values(t)
    return float(np.min(vals.min(axis=1) / vals.max(axis=1)))
