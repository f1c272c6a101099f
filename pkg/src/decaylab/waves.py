"""Semi-discrete 1D damped wave models and their energy traces.

Three damping loci are supported on a uniform grid of ``n_nodes`` points
(boundary points included):

* ``wave_interior``  ``u_tt - u_xx + alpha(t,x) sigma(x) g(u_t) = 0`` with
  Dirichlet ends;
* ``wave_boundary``  Dirichlet at ``x = 0`` and
  ``u_x + a u + alpha(t) k g(u_t) = 0`` at ``x = L``;
* ``string_pointwise``  ``u_tt - u_xx + alpha(t) g(u_t(xi)) delta_xi = 0``
  on ``(0, pi)``, Dirichlet left and Neumann right.

The spatial operator is the standard three-point Laplacian written in
symmetric form: lumped (trapezoidal) mass ``M`` and stiffness ``K`` with
``M^{-1} K = tridiag(-1, 2, -1) / dx^2`` on interior rows. A Neumann end
carries half a cell of mass, which is the ghost-node closure of the
one-sided condition. Dirichlet nodes are eliminated.

Damping is described by *channels*: each channel reads a velocity
``z = c0 v[i0] + c1 v[i1]`` and feeds back ``alpha * weight * g(z)`` with
the same coefficients, so its contribution to the energy balance is
``alpha * weight * g(z) z >= 0``.

Time stepping is the implicit midpoint rule with the damping evaluated at
the velocity midpoint and at ``t + dt/2``. Writing ``w`` for the midpoint
velocity, one step solves

    (2M + dt^2/2 K) w + dt D(t + dt/2, w) = 2M v0 - dt K u0

by damped Newton (tridiagonal Jacobian, Armijo backtracking), then sets
``u1 = u0 + dt w`` and ``v1 = 2w - v0``. The discrete energy obeys
``E1 - E0 = -dt <D(w), w>`` up to the solver residual.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from ._accel import njit, resolve_backend
from .errors import ConfigError, StepFailure, UsageError
from .feedback import G_EPS, FeedbackLaw, dg_scalar, dg_vec, g_scalar, g_vec
from .modulation import ModulationProfile

MODELS = ("wave_interior", "wave_boundary", "string_pointwise")
BCS = ("dirichlet_both", "dirichlet_left_neumann_right", "dirichlet_left_damped_right")
DEFAULT_BC = {
    "wave_interior": "dirichlet_both",
    "wave_boundary": "dirichlet_left_damped_right",
    "string_pointwise": "dirichlet_left_neumann_right",
}

SOLVE_TOL = 1e-12
MAX_NEWTON = 100
MAX_HALVINGS = 10


# ---------------------------------------------------------------------------
# system description
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SemiDiscreteSystem:
    model: str
    n_nodes: int
    length: float
    bc: str
    law: FeedbackLaw
    profile: ModulationProfile
    sigma: np.ndarray = field(repr=False)     # nodal coefficient (interior model)
    a: float = 0.0
    k: float = 1.0
    xi: float | None = None
    # derived arrays (free unknowns only)
    free: np.ndarray = field(repr=False, default=None)
    mass: np.ndarray = field(repr=False, default=None)
    left_pin: float = 0.0
    right_pin: float = 0.0
    channels: tuple = field(repr=False, default=())

    @property
    def dx(self) -> float:
        return self.length / (self.n_nodes - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, self.length, self.n_nodes)

    @property
    def x_free(self) -> np.ndarray:
        return self.x[self.free]

    @property
    def n_free(self) -> int:
        return int(self.free.size)

    @property
    def dt_max(self) -> float:
        """Default accuracy bound ``0.5 dx`` on the time step."""
        return 0.5 * self.dx

    @property
    def mu(self) -> float:
        """Measure of the damped set: length of ``{sigma > 0}`` for interior
        damping, 1 for the point-supported loci."""
        if self.model != "wave_interior":
            return 1.0
        w = np.full(self.n_nodes, self.dx)
        w[0] = w[-1] = 0.5 * self.dx
        return float(np.sum(w[self.sigma > 0]))

    def stiffness_bands(self):
        """``(diag, off)`` of the stiffness matrix on the free unknowns."""
        inv = 1.0 / self.dx
        nf = self.n_free
        diag = np.zeros(nf)
        diag[:-1] += inv
        diag[1:] += inv
        diag[0] += self.left_pin
        diag[-1] += self.right_pin
        off = np.full(nf - 1, -inv)
        return diag, off

    def stiffness(self) -> np.ndarray:
        d, o = self.stiffness_bands()
        return np.diag(d) + np.diag(o, 1) + np.diag(o, -1)

    def laplacian(self) -> np.ndarray:
        """``M^{-1} K``, the discrete ``-d^2/dx^2`` on the free unknowns."""
        return self.stiffness() / self.mass[:, None]

    def channel_arrays(self):
        if not self.channels:
            z = np.zeros(0)
            zi = np.zeros(0, dtype=np.int64)
            return zi, zi, z, z, z, zi
        cols = list(zip(*self.channels))
        return (np.asarray(cols[0], dtype=np.int64), np.asarray(cols[1], dtype=np.int64),
                np.asarray(cols[2], dtype=float), np.asarray(cols[3], dtype=float),
                np.asarray(cols[4], dtype=float), np.asarray(cols[5], dtype=np.int64))

    def alpha_matrix(self, t) -> np.ndarray:
        return self.profile.region_values(np.atleast_1d(np.asarray(t, dtype=float)))

    def describe(self) -> dict:
        d = {"model": self.model, "n": self.n_nodes, "length": self.length, "bc": self.bc}
        if self.model == "wave_interior":
            d["sigma_mask"] = [float(s) for s in self.sigma]
        if self.model == "wave_boundary":
            d.update(a=self.a, k=self.k)
        if self.model == "string_pointwise":
            d["xi"] = self.xi
        return d


def _parse_sigma(spec, x, length):
    n = x.size
    if spec is None:
        return np.ones(n)
    if isinstance(spec, (int, float)):
        return np.full(n, float(spec))
    spec = list(spec)
    if spec and isinstance(spec[0], dict):
        sig = np.zeros(n)
        for item in spec:
            lo, hi = item["interval"]
            sig = np.where((x >= lo - 1e-12) & (x <= hi + 1e-12), float(item.get("value", 1.0)), sig)
        return sig
    arr = np.asarray(spec, dtype=float)
    if arr.shape != (n,):
        raise ConfigError(f"sigma_mask must be a number, a list of intervals or {n} nodal values")
    return arr


def build_system(config: dict, law: FeedbackLaw | None = None,
                 profile: ModulationProfile | None = None) -> SemiDiscreteSystem:
    """Build a model from a ``system`` config block.

    Keys: ``model``, ``n`` (nodes including boundary points), ``length``,
    ``bc``, ``sigma_mask`` (number, list of ``{"interval": [lo, hi],
    "value": s}`` or nodal list), ``a``, ``k``, ``xi``. ``law`` and
    ``profile`` default to ``g(x) = x`` and ``alpha = 1``.
    """
    cfg = dict(config)
    model = cfg.get("model", "wave_interior")
    if model not in MODELS:
        raise ConfigError(f"unknown model {model!r}")
    n = int(cfg.get("n", 200))
    if n < 3:
        raise ConfigError("need at least 3 grid nodes")
    length = float(cfg.get("length", math.pi))
    if not length > 0:
        raise ConfigError("length must be positive")
    bc = cfg.get("bc", DEFAULT_BC[model])
    if bc not in BCS:
        raise ConfigError(f"unknown boundary condition {bc!r}")
    law = law if law is not None else FeedbackLaw.linear(1.0)
    profile = profile if profile is not None else ModulationProfile.constant(1.0)
    x = np.linspace(0.0, length, n)
    dx = length / (n - 1)
    a = float(cfg.get("a", 0.0))
    k = float(cfg.get("k", 1.0))
    xi = cfg.get("xi")

    if bc == "dirichlet_both":
        free = np.arange(1, n - 1)
        right_pin = 1.0 / dx
    else:
        free = np.arange(1, n)
        right_pin = a if bc == "dirichlet_left_damped_right" else 0.0
    if bc == "dirichlet_left_damped_right" and a < 0:
        raise ConfigError("a must be >= 0")
    mass = np.full(free.size, dx)
    if bc != "dirichlet_both":
        mass[-1] = 0.5 * dx
    col = {int(node): j for j, node in enumerate(free)}

    def region_of(pt):
        idx = int(profile.region_index(np.array([pt]))[0])
        if idx < 0:
            raise ConfigError(f"damped point x={pt} lies outside every alpha region")
        return idx

    sigma = np.zeros(n)
    channels = []
    if model == "wave_interior":
        sigma = _parse_sigma(cfg.get("sigma_mask"), x, length)
        if np.any(sigma < 0) or np.any(~np.isfinite(sigma)):
            raise ConfigError("sigma must be finite and >= 0")
        if not np.any(sigma[free] > 0):
            raise ConfigError("sigma vanishes on every free node: no damping anywhere")
        for j, node in enumerate(free):
            if sigma[node] > 0:
                channels.append((j, -1, 1.0, 0.0, float(sigma[node] * mass[j]), region_of(x[node])))
    elif model == "wave_boundary":
        if bc != "dirichlet_left_damped_right":
            raise ConfigError("wave_boundary uses the dirichlet_left_damped_right condition")
        if k <= 0:
            raise ConfigError("boundary damping needs k > 0")
        channels.append((free.size - 1, -1, 1.0, 0.0, k, region_of(length)))
    else:
        if xi is None:
            raise ConfigError("string_pointwise needs xi")
        xi = float(xi)
        if not 0.0 < xi < length:
            raise ConfigError(f"xi must lie strictly inside (0, {length})")
        j = min(int(math.floor(xi / dx)), n - 2)
        c1 = (xi - x[j]) / dx
        c0 = 1.0 - c1
        i0 = col.get(j, -1)
        i1 = col.get(j + 1, -1)
        if i0 < 0:
            i0, i1, c0, c1 = i1, -1, c1, 0.0
        elif i1 < 0:
            c1 = 0.0
        channels.append((i0, i1, float(c0), float(c1), 1.0, region_of(xi)))

    return SemiDiscreteSystem(model=model, n_nodes=n, length=length, bc=bc, law=law, profile=profile,
                              sigma=sigma, a=a, k=k, xi=xi, free=free, mass=mass,
                              left_pin=1.0 / dx, right_pin=right_pin, channels=tuple(channels))


# ---------------------------------------------------------------------------
# energy and dissipation
# ---------------------------------------------------------------------------

def _potential(u, inv_dx, left_pin, right_pin):
    du = np.diff(u)
    return float(inv_dx * np.dot(du, du) + left_pin * u[0] ** 2 + right_pin * u[-1] ** 2)


def energy(system: SemiDiscreteSystem, state) -> float:
    """``1/2 (|u|_V^2 + |v|_H^2)`` with trapezoidal weights; ``state = (u, v)``
    on the free unknowns."""
    u, v = (np.asarray(s, dtype=float) for s in state)
    if u.shape != (system.n_free,) or v.shape != (system.n_free,):
        raise UsageError(f"state must have {system.n_free} free unknowns")
    pot = _potential(u, 1.0 / system.dx, system.left_pin, system.right_pin)
    return 0.5 * (pot + float(np.dot(system.mass * v, v)))


def dissipation_rate(system: SemiDiscreteSystem, state, t: float) -> float:
    """``<B(t) v, v>``: sum over channels of ``alpha weight g(z) z``."""
    _, v = state
    v = np.asarray(v, dtype=float)
    i0, i1, c0, c1, w, reg = system.channel_arrays()
    if i0.size == 0:
        return 0.0
    z = _channel_velocity(v, i0, i1, c0, c1)
    code, param, xs, ys = system.law.kernel_params()
    alpha = system.alpha_matrix(t)[0]
    return float(np.sum(alpha[reg] * w * g_vec(z, code, param, xs, ys, 0.0) * z))


def _channel_velocity(v, i0, i1, c0, c1):
    z = c0 * v[np.maximum(i0, 0)] * (i0 >= 0)
    return z + c1 * v[np.maximum(i1, 0)] * (i1 >= 0)


# ---------------------------------------------------------------------------
# compiled kernel
# ---------------------------------------------------------------------------

@njit
def _thomas(lower, diag, upper, rhs, out):
    n = diag.shape[0]
    cp = np.empty(n)
    dp = np.empty(n)
    cp[0] = upper[0] / diag[0] if n > 1 else 0.0
    dp[0] = rhs[0] / diag[0]
    for i in range(1, n):
        m = diag[i] - lower[i - 1] * cp[i - 1]
        if i < n - 1:
            cp[i] = upper[i] / m
        dp[i] = (rhs[i] - lower[i - 1] * dp[i - 1]) / m
    out[n - 1] = dp[n - 1]
    for i in range(n - 2, -1, -1):
        out[i] = dp[i] - cp[i] * out[i + 1]


@njit
def _residual(w, Ad, Ao, b, dt, alpha, i0, i1, c0, c1, cw, creg, code, param, xs, ys, eps, R):
    n = w.shape[0]
    for i in range(n):
        acc = Ad[i] * w[i] - b[i]
        if i > 0:
            acc += Ao[i - 1] * w[i - 1]
        if i < n - 1:
            acc += Ao[i] * w[i + 1]
        R[i] = acc
    for c in range(i0.shape[0]):
        z = c0[c] * w[i0[c]]
        if i1[c] >= 0:
            z += c1[c] * w[i1[c]]
        f = dt * alpha[creg[c]] * cw[c] * g_scalar(z, code, param, xs, ys, eps)
        R[i0[c]] += c0[c] * f
        if i1[c] >= 0:
            R[i1[c]] += c1[c] * f
    m = 0.0
    for i in range(n):
        if abs(R[i]) > m:
            m = abs(R[i])
    return m


@njit
def _energy_k(u, v, mass, inv_dx, left_pin, right_pin):
    n = u.shape[0]
    pot = left_pin * u[0] * u[0] + right_pin * u[n - 1] * u[n - 1]
    kin = 0.0
    for i in range(n - 1):
        d = u[i + 1] - u[i]
        pot += inv_dx * d * d
    for i in range(n):
        kin += mass[i] * v[i] * v[i]
    return 0.5 * (pot + kin)


@njit
def advance_numba(u, v, dt, alpha_mid, mass, inv_dx, left_pin, right_pin,
                  i0, i1, c0, c1, cw, creg, code, param, xs, ys, eps, tol, max_iter):
    """Advance ``(u, v)`` in place by ``alpha_mid.shape[0]`` steps.

    Returns ``(status, steps_done, dissipated, max_energy_rise)``;
    ``status = 1`` flags a Newton failure at step ``steps_done``.
    """
    n = u.shape[0]
    n_steps = alpha_mid.shape[0]
    Kd = np.zeros(n)
    for i in range(n - 1):
        Kd[i] += inv_dx
        Kd[i + 1] += inv_dx
    Kd[0] += left_pin
    Kd[n - 1] += right_pin
    Ko = -inv_dx
    Ad = 2.0 * mass + 0.5 * dt * dt * Kd
    Ao = np.full(max(n - 1, 1), 0.5 * dt * dt * Ko)
    b = np.empty(n)
    w = np.empty(n)
    wt = np.empty(n)
    R = np.empty(n)
    Rt = np.empty(n)
    d = np.empty(n)
    Jd = np.empty(n)
    Jo = np.empty(max(n - 1, 1))
    dissipated = 0.0
    max_rise = 0.0
    E_prev = _energy_k(u, v, mass, inv_dx, left_pin, right_pin)
    for k in range(n_steps):
        alpha = alpha_mid[k]
        for i in range(n):
            Ku = Kd[i] * u[i]
            if i > 0:
                Ku += Ko * u[i - 1]
            if i < n - 1:
                Ku += Ko * u[i + 1]
            b[i] = 2.0 * mass[i] * v[i] - dt * Ku
            w[i] = v[i]
        scale = 0.0
        for i in range(n):
            scale = max(scale, abs(b[i]))
        rn = _residual(w, Ad, Ao, b, dt, alpha, i0, i1, c0, c1, cw, creg, code, param, xs, ys, eps, R)
        converged = rn <= tol * scale
        it = 0
        while not converged and it < max_iter:
            it += 1
            for i in range(n):
                Jd[i] = Ad[i]
            for i in range(n - 1):
                Jo[i] = Ao[i]
            for c in range(i0.shape[0]):
                z = c0[c] * w[i0[c]]
                if i1[c] >= 0:
                    z += c1[c] * w[i1[c]]
                s = dt * alpha[creg[c]] * cw[c] * dg_scalar(z, code, param, xs, ys, eps)
                Jd[i0[c]] += s * c0[c] * c0[c]
                if i1[c] >= 0:
                    Jd[i1[c]] += s * c1[c] * c1[c]
                    lo = min(i0[c], i1[c])
                    Jo[lo] += s * c0[c] * c1[c]
            for i in range(n):
                R[i] = -R[i]
            _thomas(Jo, Jd, Jo, R, d)
            lam = 1.0
            while True:
                for i in range(n):
                    wt[i] = w[i] + lam * d[i]
                rt = _residual(wt, Ad, Ao, b, dt, alpha, i0, i1, c0, c1, cw, creg, code, param, xs, ys, eps, Rt)
                if rt <= (1.0 - 1e-4 * lam) * rn or lam < 1e-10:
                    break
                lam *= 0.5
            for i in range(n):
                w[i] = wt[i]
                R[i] = Rt[i]
            rn = rt
            converged = rn <= tol * scale
        if not converged:
            return 1, k, dissipated, max_rise
        # dissipation over the step, then the update
        acc = 0.0
        for c in range(i0.shape[0]):
            z = c0[c] * w[i0[c]]
            if i1[c] >= 0:
                z += c1[c] * w[i1[c]]
            acc += alpha[creg[c]] * cw[c] * g_scalar(z, code, param, xs, ys, eps) * z
        dissipated += dt * acc
        for i in range(n):
            u[i] += dt * w[i]
            v[i] = 2.0 * w[i] - v[i]
        E_new = _energy_k(u, v, mass, inv_dx, left_pin, right_pin)
        if E_new - E_prev > max_rise:
            max_rise = E_new - E_prev
        E_prev = E_new
    return 0, n_steps, dissipated, max_rise


# ---------------------------------------------------------------------------
# numpy fallback
# ---------------------------------------------------------------------------

def advance_numpy(u, v, dt, alpha_mid, mass, inv_dx, left_pin, right_pin,
                  i0, i1, c0, c1, cw, creg, code, param, xs, ys, eps, tol, max_iter):
    """Vectorized counterpart of :func:`advance_numba` (banded LAPACK solves)."""
    n = u.size
    Kd = np.zeros(n)
    Kd[:-1] += inv_dx
    Kd[1:] += inv_dx
    Kd[0] += left_pin
    Kd[-1] += right_pin
    Ko = np.full(n - 1, -inv_dx)
    Ad = 2.0 * mass + 0.5 * dt * dt * Kd
    Ao = 0.5 * dt * dt * Ko
    has1 = i1 >= 0
    j0 = i0
    j1 = np.where(has1, i1, 0)
    c1m = np.where(has1, c1, 0.0)
    off_idx = np.minimum(j0, j1)
    pair = has1 & (np.abs(j0 - j1) == 1)

    def tri(x, d, o):
        y = d * x
        y[:-1] += o * x[1:]
        y[1:] += o * x[:-1]
        return y

    def resid(w, alpha, b):
        z = c0 * w[j0] + c1m * w[j1]
        f = dt * alpha[creg] * cw * g_vec(z, code, param, xs, ys, eps)
        R = tri(w, Ad, Ao) - b
        np.add.at(R, j0, c0 * f)
        np.add.at(R, j1, c1m * f)
        return R

    def energy_np(u, v):
        du = np.diff(u)
        return 0.5 * (inv_dx * du @ du + left_pin * u[0] ** 2 + right_pin * u[-1] ** 2 + (mass * v) @ v)

    dissipated = 0.0
    max_rise = 0.0
    E_prev = energy_np(u, v)
    ab = np.zeros((3, n))
    for k in range(alpha_mid.shape[0]):
        alpha = alpha_mid[k]
        b = 2.0 * mass * v - dt * tri(u, Kd, Ko)
        scale = np.max(np.abs(b)) if n else 0.0
        w = v.copy()
        R = resid(w, alpha, b)
        rn = np.max(np.abs(R))
        it = 0
        while rn > tol * scale and it < max_iter:
            it += 1
            z = c0 * w[j0] + c1m * w[j1]
            s = dt * alpha[creg] * cw * dg_vec(z, code, param, xs, ys, eps)
            Jd = Ad.copy()
            Jo = Ao.copy()
            np.add.at(Jd, j0, s * c0 * c0)
            np.add.at(Jd, j1, s * c1m * c1m)
            np.add.at(Jo, off_idx[pair], (s * c0 * c1m)[pair])
            ab[0, 1:] = Jo
            ab[1] = Jd
            ab[2, :-1] = Jo
            d = solve_banded((1, 1), ab, -R, check_finite=False)
            lam = 1.0
            while True:
                wt = w + lam * d
                Rt = resid(wt, alpha, b)
                rt = np.max(np.abs(Rt))
                if rt <= (1.0 - 1e-4 * lam) * rn or lam < 1e-10:
                    break
                lam *= 0.5
            w, R, rn = wt, Rt, rt
        if rn > tol * scale:
            return 1, k, dissipated, max_rise
        z = c0 * w[j0] + c1m * w[j1]
        dissipated += dt * float(np.sum(alpha[creg] * cw * g_vec(z, code, param, xs, ys, eps) * z))
        u += dt * w
        v[:] = 2.0 * w - v
        E_new = energy_np(u, v)
        max_rise = max(max_rise, E_new - E_prev)
        E_prev = E_new
    return 0, alpha_mid.shape[0], dissipated, max_rise


def _kernel(backend):
    return advance_numba if resolve_backend(backend) == "numba" else advance_numpy


def _advance(system, u, v, t, dt, n_steps, backend=None, tol=SOLVE_TOL):
    """Run ``n_steps`` steps in place; returns the kernel status tuple."""
    i0, i1, c0, c1, cw, creg = system.channel_arrays()
    code, param, xs, ys = system.law.kernel_params()
    eps = G_EPS if (code == 1 and param < 1.0) else 0.0
    t_mid = t + (np.arange(n_steps) + 0.5) * dt
    alpha_mid = np.ascontiguousarray(system.alpha_matrix(t_mid))
    if i0.size == 0:
        alpha_mid = np.ones((n_steps, 1))
    return _kernel(backend)(u, v, float(dt), alpha_mid, system.mass, 1.0 / system.dx,
                            float(system.left_pin), float(system.right_pin),
                            i0, i1, c0, c1, cw, creg, int(code), float(param),
                            np.ascontiguousarray(xs, dtype=float), np.ascontiguousarray(ys, dtype=float),
                            float(eps), float(tol), MAX_NEWTON)


def step(system: SemiDiscreteSystem, state, t: float, dt: float, backend: str | None = None):
    """One implicit-midpoint step; returns the new ``(u, v)``."""
    u = np.array(state[0], dtype=float)
    v = np.array(state[1], dtype=float)
    status, _, _, _ = _advance(system, u, v, t, dt, 1, backend)
    if status != 0:
        raise StepFailure(f"nonlinear solve did not converge at t={t}", t=t)
    return u, v


# ---------------------------------------------------------------------------
# initial data
# ---------------------------------------------------------------------------

def mode_shape(system: SemiDiscreteSystem, k: int) -> np.ndarray:
    """``k``-th eigenfunction of the undamped problem (``a = 0``) on the free nodes."""
    x = system.x_free
    L = system.length
    if system.bc == "dirichlet_both":
        return np.sin(k * math.pi * x / L)
    return np.sin((k - 0.5) * math.pi * x / L)


def initial_state(system: SemiDiscreteSystem, spec: dict | None = None, seed: int = 0):
    """Initial ``(u0, v0)``.

    ``{"kind": "modes", "n_modes": 8, "amplitude": 1, "decay": 2}`` draws
    normal coefficients scaled by ``k^-decay`` for both displacement and
    velocity; ``{"kind": "mode", "k": 1, "amplitude": 1}`` is a single
    standing mode at rest; ``{"kind": "zero"}`` is the trivial state.
    """
    spec = dict(spec or {"kind": "modes"})
    kind = spec.get("kind", "modes")
    amp = float(spec.get("amplitude", 1.0))
    nf = system.n_free
    if kind == "zero":
        return np.zeros(nf), np.zeros(nf)
    if kind == "mode":
        k = int(spec.get("k", 1))
        u0 = amp * mode_shape(system, k)
        v0 = float(spec.get("velocity", 0.0)) * mode_shape(system, k)
        return u0, v0
    if kind == "modes":
        rng = np.random.default_rng(seed)
        n_modes = int(spec.get("n_modes", 8))
        decay = float(spec.get("decay", 2.0))
        u0 = np.zeros(nf)
        v0 = np.zeros(nf)
        for k in range(1, n_modes + 1):
            a_k, b_k = rng.standard_normal(2) * k ** (-decay)
            phi = mode_shape(system, k)
            # scale displacement so both halves carry comparable energy
            u0 += a_k * phi / ((k - 0.5) if system.bc != "dirichlet_both" else k)
            v0 += b_k * phi
        return amp * u0, amp * v0
    raise ConfigError(f"unknown initial data kind {kind!r}")


# ---------------------------------------------------------------------------
# simulation driver
# ---------------------------------------------------------------------------

@dataclass
class EnergyTrace:
    t: np.ndarray
    E: np.ndarray
    D: np.ndarray
    dt: float
    scheme: str = "implicit_midpoint"
    system: dict = field(default_factory=dict)
    max_step_rise: float = 0.0
    steps: int = 0
    stopped_early: bool = False
    halvings: int = 0
    backend: str = "numba"

    @property
    def E0(self) -> float:
        return float(self.E[0])

    @property
    def ledger_residual(self) -> float:
        """``max_t |E(0) - E(t) - D(t)| / E(0)`` (0 for a zero trace)."""
        if self.E0 == 0:
            return 0.0
        return float(np.max(np.abs(self.E0 - self.E - self.D)) / self.E0)

    @property
    def monotone(self) -> bool:
        tol = 1e-10 * max(self.E0, 0.0)
        return bool(self.max_step_rise <= tol and np.all(np.diff(self.E) <= tol))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["t", "E", "D"])
            for row in zip(self.t, self.E, self.D):
                wr.writerow([repr(float(x)) for x in row])

    @classmethod
    def from_csv(cls, path) -> "EnergyTrace":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or [h.strip() for h in rows[0][:3]] != ["t", "E", "D"]:
            raise ConfigError(f"{path}: expected a CSV with header t,E,D")
        data = np.array([[float(x) for x in r[:3]] for r in rows[1:] if r], dtype=float).reshape(-1, 3)
        dt = float(np.min(np.diff(data[:, 0]))) if data.shape[0] > 1 else 0.0
        return cls(t=data[:, 0], E=data[:, 1], D=data[:, 2], dt=dt, scheme="csv")


def simulate(system: SemiDiscreteSystem, u0, v0, t_end: float, dt: float, sample_every: int = 1,
             backend: str | None = None, stop_ratio: float = 1e-14, check_dt: bool = True) -> EnergyTrace:
    """Integrate from ``t = 0`` to ``t_end``, sampling every ``sample_every`` steps.

    A failed nonlinear solve is retried on the same sample interval with
    ``dt / 2, dt / 4, ...`` (at most 10 halvings) before giving up with
    :class:`StepFailure`. The run stops early once ``E < stop_ratio E(0)``.
    """
    if not (dt > 0 and t_end > 0):
        raise UsageError("dt and t_end must be positive")
    if check_dt and dt > system.dt_max * (1 + 1e-12):
        raise UsageError(f"dt={dt} exceeds dt_max={system.dt_max:.6g} (0.5 dx)")
    if sample_every < 1:
        raise UsageError("sample_every must be >= 1")
    u = np.array(u0, dtype=float)
    v = np.array(v0, dtype=float)
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
        raise UsageError("initial data must be finite")
    if u.shape != (system.n_free,) or v.shape != (system.n_free,):
        raise UsageError(f"initial data must have {system.n_free} free unknowns")
    backend = resolve_backend(backend)
    n_total = int(round(t_end / dt))
    E0 = energy(system, (u, v))
    ts, Es, Ds = [0.0], [E0], [0.0]
    D = 0.0
    done = 0
    max_rise = 0.0
    halvings = 0
    stopped = False
    while done < n_total:
        n = min(sample_every, n_total - done)
        t = done * dt
        u_try, v_try = u.copy(), v.copy()
        status, _, dis, rise = _advance(system, u_try, v_try, t, dt, n, backend)
        h = 0
        while status != 0:
            h += 1
            if h > MAX_HALVINGS:
                raise StepFailure(f"step failed at t={t} after {MAX_HALVINGS} halvings of dt", t=t)
            u_try, v_try = u.copy(), v.copy()
            sub = 2 ** h
            status, _, dis, rise = _advance(system, u_try, v_try, t, dt / sub, n * sub, backend)
        halvings = max(halvings, h)
        u, v = u_try, v_try
        D += dis
        max_rise = max(max_rise, rise)
        done += n
        E = energy(system, (u, v))
        ts.append(done * dt)
        Es.append(E)
        Ds.append(D)
        if E0 > 0 and E < stop_ratio * E0:
            stopped = True
            break
    return EnergyTrace(t=np.asarray(ts), E=np.asarray(Es), D=np.asarray(Ds), dt=dt,
                       system=system.describe() | {"law": system.law.to_dict(),
                                                   "alpha": system.profile.to_dict()},
                       max_step_rise=max_rise, steps=done, stopped_early=stopped,
                       halvings=halvings, backend=backend)
