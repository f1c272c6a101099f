"""Finite-dimensional realization of the resolvent / Yosida construction.

The operator is ``A(t) v = A1 v + alpha(t) g_I(v) - omega v`` on ``R^dim``
where ``A1`` is skew, ``g_I`` applies the feedback law to the components in
the damped index set ``I`` (zero elsewhere) and ``omega >= 0`` is the
quasi-monotonicity shift. For ``n > omega``

* ``J_n(t) = (I + A(t)/n)^{-1}``   (resolvent, damped Newton),
* ``A_n(t) = n (I - J_n(t))``       (Yosida approximation, Lipschitz),

and ``u_n' + A_n(t) u_n = 0`` is integrated with classical RK4 at
``dt <= 0.1 / n``. The limit dynamics ``u' + A(t) u = 0`` are integrated with
the implicit midpoint rule, which is the Cayley-type map
``u_{k+1} = 2 J_{2/dt}(t_{k+1/2}) u_k - u_k``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._accel import njit, resolve_backend
from .errors import SolverError, UsageError
from .feedback import FeedbackLaw, dg_scalar, dg_vec, g_scalar, g_vec
from .modulation import ModulationProfile

NEWTON_MAX = 200
RESOLVENT_TOL = 1e-12


@dataclass(frozen=True)
class AbstractSystem:
    A1: np.ndarray = field(repr=False)
    law: FeedbackLaw
    damped: np.ndarray = field(repr=False)        # boolean mask over components
    profile: ModulationProfile = field(default_factory=ModulationProfile.constant)
    omega: float = 0.0

    def __post_init__(self):
        A1 = np.asarray(self.A1, dtype=float)
        if A1.ndim != 2 or A1.shape[0] != A1.shape[1]:
            raise UsageError("A1 must be square")
        if not np.array_equal(A1, -A1.T):
            raise UsageError("A1 must be exactly skew-symmetric")
        mask = np.asarray(self.damped, dtype=bool)
        if mask.shape != (A1.shape[0],):
            raise UsageError("damped mask must have one entry per component")
        if self.omega < 0:
            raise UsageError("omega must be >= 0")
        object.__setattr__(self, "A1", A1)
        object.__setattr__(self, "damped", mask)

    @property
    def dim(self) -> int:
        return self.A1.shape[0]

    def alpha(self, t) -> float:
        return float(self.profile.reduced(float(t), "min"))

    def apply(self, t: float, v) -> np.ndarray:
        """``A(t) v``."""
        v = np.asarray(v, dtype=float)
        code, param, xs, ys = self.law.kernel_params()
        gv = np.where(self.damped, g_vec(v, code, param, xs, ys, 0.0), 0.0)
        return self.A1 @ v + self.alpha(t) * gv - self.omega * v


def random_system(dim: int = 4, law: FeedbackLaw | None = None, damped=None, omega: float = 0.0,
                  profile: ModulationProfile | None = None, seed: int = 0, scale: float = 1.0) -> AbstractSystem:
    """Random instance with ``A1 = S - S^T`` (exactly skew by construction)."""
    rng = np.random.default_rng(seed)
    S = rng.standard_normal((dim, dim)) * scale
    A1 = S - S.T
    if damped is None:
        damped = np.zeros(dim, dtype=bool)
        damped[0] = True
    law = law if law is not None else FeedbackLaw.linear(1.0)
    return AbstractSystem(A1=A1, law=law, damped=np.asarray(damped, dtype=bool),
                          profile=profile or ModulationProfile.constant(1.0), omega=omega)


def check_quasi_monotone(system: AbstractSystem, n_pairs: int = 1000, seed: int = 0, t: float = 0.0) -> bool:
    """``(A u - A v) . (u - v) >= -omega |u - v|^2`` on random pairs."""
    rng = np.random.default_rng(seed)
    for _ in range(n_pairs):
        u, v = rng.standard_normal((2, system.dim)) * rng.uniform(0.01, 3.0)
        d = u - v
        lhs = (system.apply(t, u) - system.apply(t, v)) @ d
        if lhs < -system.omega * (d @ d) - 1e-12 * (1 + d @ d):
            return False
    return True


# ---------------------------------------------------------------------------
# compiled kernels
# ---------------------------------------------------------------------------

@njit
def _phi(s, inv_p):
    a = abs(s)
    if a >= 1.0:
        return s
    return np.sign(s) * a ** inv_p


@njit
def _dphi(s, inv_p):
    a = abs(s)
    if a >= 1.0:
        return 1.0
    return inv_p * a ** (inv_p - 1.0)


@njit
def _resolvent_k(A1, mask, alpha, omega, n, x, y0, code, param, xs, ys, tol, max_iter):
    """Solve ``(1 - omega/n) y + (A1 y + alpha g_I(y)) / n = x``; returns (y, status).

    For sublinear power laws the damped components are parametrized as
    ``y = phi(s)`` with ``g(phi(s)) = s``, which removes the infinite slope
    of ``g`` at 0 and keeps Newton's iteration well conditioned.
    """
    dim = x.shape[0]
    shift = 1.0 - omega / n
    sub = code == 1 and param < 1.0
    inv_p = 1.0 / param if sub else 1.0
    z = np.empty(dim)
    for i in range(dim):
        if sub and mask[i]:
            z[i] = g_scalar(y0[i], code, param, xs, ys, 0.0)
        else:
            z[i] = y0[i]
    y = np.empty(dim)
    yt = np.empty(dim)
    zt = np.empty(dim)
    F = np.empty(dim)
    Ft = np.empty(dim)
    J = np.empty((dim, dim))
    dy = np.empty(dim)
    xn = 0.0
    for i in range(dim):
        xn += x[i] * x[i]
    thr = tol * (1.0 + np.sqrt(xn))

    def to_y(zz, out):
        for i in range(dim):
            out[i] = _phi(zz[i], inv_p) if (sub and mask[i]) else zz[i]

    def resid(zz, yy, out):
        m = 0.0
        for i in range(dim):
            acc = 0.0
            for j in range(dim):
                acc += A1[i, j] * yy[j]
            if mask[i]:
                gi = zz[i] if sub else g_scalar(yy[i], code, param, xs, ys, 0.0)
                acc += alpha * gi
            out[i] = shift * yy[i] + acc / n - x[i]
            m += out[i] * out[i]
        return np.sqrt(m)

    to_y(z, y)
    r = resid(z, y, F)
    it = 0
    while r > thr and it < max_iter:
        it += 1
        for j in range(dim):
            dy[j] = _dphi(z[j], inv_p) if (sub and mask[j]) else 1.0
        for i in range(dim):
            for j in range(dim):
                J[i, j] = A1[i, j] * dy[j] / n
            J[i, i] += shift * dy[i]
            if mask[i]:
                J[i, i] += alpha * (1.0 if sub else dg_scalar(y[i], code, param, xs, ys, 0.0)) / n
        d = np.linalg.solve(J, -F)
        lam = 1.0
        while True:
            for i in range(dim):
                zt[i] = z[i] + lam * d[i]
            to_y(zt, yt)
            rt = resid(zt, yt, Ft)
            if rt <= (1.0 - 1e-4 * lam) * r or lam < 1e-12:
                break
            lam *= 0.5
        for i in range(dim):
            z[i] = zt[i]
            y[i] = yt[i]
            F[i] = Ft[i]
        r = rt
    return y, (0 if r <= thr else 1)


@njit
def _rk4_k(A1, mask, alpha_half, omega, n, u0, dt, n_steps, sample_every,
           code, param, xs, ys, tol, max_iter):
    """RK4 for ``u' = -n (u - J_n u)``; ``alpha_half[j] = alpha(j dt / 2)``."""
    dim = u0.shape[0]
    n_samples = n_steps // sample_every + 1
    out = np.empty((n_samples, dim))
    u = u0.copy()
    out[0] = u
    s = 1
    y_guess = u.copy()
    for k in range(n_steps):
        a0 = alpha_half[2 * k]
        a1 = alpha_half[2 * k + 1]
        a2 = alpha_half[2 * k + 2]
        y, st = _resolvent_k(A1, mask, a0, omega, n, u, y_guess, code, param, xs, ys, tol, max_iter)
        if st != 0:
            return out[:s], k, 1
        k1 = -n * (u - y)
        y_guess = y
        ut = u + 0.5 * dt * k1
        y, st = _resolvent_k(A1, mask, a1, omega, n, ut, y_guess, code, param, xs, ys, tol, max_iter)
        if st != 0:
            return out[:s], k, 1
        k2 = -n * (ut - y)
        ut = u + 0.5 * dt * k2
        y, st = _resolvent_k(A1, mask, a1, omega, n, ut, y, code, param, xs, ys, tol, max_iter)
        if st != 0:
            return out[:s], k, 1
        k3 = -n * (ut - y)
        ut = u + dt * k3
        y, st = _resolvent_k(A1, mask, a2, omega, n, ut, y, code, param, xs, ys, tol, max_iter)
        if st != 0:
            return out[:s], k, 1
        k4 = -n * (ut - y)
        u = u + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if (k + 1) % sample_every == 0:
            out[s] = u
            s += 1
    return out[:s], n_steps, 0


# ---------------------------------------------------------------------------
# numpy fallback
# ---------------------------------------------------------------------------

def _resolvent_np(A1, mask, alpha, omega, n, x, y0, code, param, xs, ys, tol, max_iter):
    shift = 1.0 - omega / n
    sub = code == 1 and param < 1.0
    inv_p = 1.0 / param if sub else 1.0
    thr = tol * (1.0 + np.linalg.norm(x))
    subm = mask & sub

    def to_y(z):
        a = np.abs(z)
        return np.where(subm & (a < 1.0), np.sign(z) * a ** inv_p, z)

    def resid(z, y):
        gy = np.where(subm, z, g_vec(y, code, param, xs, ys, 0.0))
        return shift * y + (A1 @ y + alpha * np.where(mask, gy, 0.0)) / n - x

    z = np.where(subm, g_vec(y0, code, param, xs, ys, 0.0), y0).astype(float)
    y = to_y(z)
    F = resid(z, y)
    r = np.linalg.norm(F)
    it = 0
    while r > thr and it < max_iter:
        it += 1
        a = np.abs(z)
        dy = np.where(subm & (a < 1.0), inv_p * a ** (inv_p - 1.0), 1.0)
        dgz = np.where(subm, 1.0, dg_vec(y, code, param, xs, ys, 0.0))
        J = A1 * dy[None, :] / n + np.diag(shift * dy + np.where(mask, alpha * dgz, 0.0) / n)
        d = np.linalg.solve(J, -F)
        lam = 1.0
        while True:
            zt = z + lam * d
            yt = to_y(zt)
            Ft = resid(zt, yt)
            rt = np.linalg.norm(Ft)
            if rt <= (1.0 - 1e-4 * lam) * r or lam < 1e-12:
                break
            lam *= 0.5
        z, y, F, r = zt, yt, Ft, rt
    return y, (0 if r <= thr else 1)


def _rk4_np(A1, mask, alpha_half, omega, n, u0, dt, n_steps, sample_every,
            code, param, xs, ys, tol, max_iter):
    u = np.array(u0, dtype=float)
    out = [u.copy()]
    y = u.copy()

    def stage(a, x, guess):
        yy, st = _resolvent_np(A1, mask, a, omega, n, x, guess, code, param, xs, ys, tol, max_iter)
        return -n * (x - yy), yy, st

    for k in range(n_steps):
        a0, a1, a2 = alpha_half[2 * k], alpha_half[2 * k + 1], alpha_half[2 * k + 2]
        k1, y, st1 = stage(a0, u, y)
        k2, y, st2 = stage(a1, u + 0.5 * dt * k1, y)
        k3, y, st3 = stage(a1, u + 0.5 * dt * k2, y)
        k4, y, st4 = stage(a2, u + dt * k3, y)
        if st1 or st2 or st3 or st4:
            return np.array(out), k, 1
        u = u + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if (k + 1) % sample_every == 0:
            out.append(u.copy())
    return np.array(out), n_steps, 0


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------

def _params(system):
    code, param, xs, ys = system.law.kernel_params()
    return int(code), float(param), np.ascontiguousarray(xs, float), np.ascontiguousarray(ys, float)


def _check_n(system, n):
    if not n > system.omega:
        raise UsageError(f"n must exceed omega ({n} <= {system.omega})")


def _tol_for(n):
    # the Yosida identity multiplies the residual by n
    return RESOLVENT_TOL / max(1.0, float(n))


def resolvent_solve(system: AbstractSystem, n: float, t: float, x, backend: str | None = None) -> np.ndarray:
    """``J_n(t) x``: the solution ``y`` of ``y + A(t) y / n = x``."""
    _check_n(system, n)
    x = np.asarray(x, dtype=float)
    code, param, xs, ys = _params(system)
    fn = _resolvent_k if resolve_backend(backend) == "numba" else _resolvent_np
    y, st = fn(system.A1, system.damped, system.alpha(t), float(system.omega), float(n), x, x.copy(),
               code, param, xs, ys, _tol_for(n), NEWTON_MAX)
    if st != 0:
        raise SolverError(f"resolvent Newton iteration did not converge (n={n}, t={t})")
    return np.asarray(y)


def yosida_apply(system: AbstractSystem, n: float, t: float, x, backend: str | None = None) -> np.ndarray:
    """``A_n(t) x = n (x - J_n(t) x)``, which equals ``A(t) J_n(t) x``."""
    x = np.asarray(x, dtype=float)
    return float(n) * (x - resolvent_solve(system, n, t, x, backend))


@dataclass
class Trajectory:
    t: np.ndarray
    u: np.ndarray          # shape (samples, dim)
    n: float | None
    dt: float

    @property
    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.u, axis=1)


def _alpha_half(system, dt, n_steps):
    t_half = np.arange(2 * n_steps + 1) * (0.5 * dt)
    return np.ascontiguousarray(np.atleast_1d(system.profile.reduced(t_half, "min")), dtype=float)


def integrate_approx(system: AbstractSystem, n: float, a, T: float, dt: float | None = None,
                     sample_every: int = 1, backend: str | None = None) -> Trajectory:
    """RK4 solution of ``u_n' + A_n(t) u_n = 0``, ``u_n(0) = a`` on ``[0, T]``.

    ``dt`` defaults to (and is capped at) ``0.1 / n``; it is then shrunk so
    that a whole number of steps covers ``[0, T]``.
    """
    _check_n(system, n)
    a = np.asarray(a, dtype=float)
    dt_cap = 0.1 / n
    dt = dt_cap if dt is None else min(dt, dt_cap)
    n_steps = max(1, int(np.ceil(T / dt - 1e-9)))
    dt = T / n_steps
    code, param, xs, ys = _params(system)
    fn = _rk4_k if resolve_backend(backend) == "numba" else _rk4_np
    out, done, st = fn(system.A1, system.damped, _alpha_half(system, dt, n_steps), float(system.omega),
                       float(n), a, float(dt), n_steps, int(sample_every), code, param, xs, ys,
                       _tol_for(n), NEWTON_MAX)
    if st != 0:
        raise SolverError(f"resolvent failed at step {done} (t={done * dt})")
    t = np.arange(out.shape[0]) * dt * sample_every
    return Trajectory(t=t, u=np.asarray(out), n=float(n), dt=dt)


def integrate_limit(system: AbstractSystem, a, T: float, dt: float, sample_every: int = 1,
                    backend: str | None = None) -> Trajectory:
    """Implicit midpoint for ``u' + A(t) u = 0``: ``u_{k+1} = 2 J_{2/dt} u_k - u_k``.

    Preserves ``|u|`` exactly (to solver tolerance) when the damping is off,
    and makes ``|u|`` non-increasing in the monotone case ``omega = 0``.
    """
    a = np.asarray(a, dtype=float)
    n_steps = max(1, int(np.ceil(T / dt - 1e-9)))
    dt = T / n_steps
    n_eff = 2.0 / dt
    _check_n(system, n_eff)
    code, param, xs, ys = _params(system)
    fn = _resolvent_k if resolve_backend(backend) == "numba" else _resolvent_np
    u = a.copy()
    out = [u.copy()]
    for k in range(n_steps):
        y, st = fn(system.A1, system.damped, system.alpha((k + 0.5) * dt), float(system.omega), n_eff,
                   u, u.copy(), code, param, xs, ys, RESOLVENT_TOL * 1e-2, NEWTON_MAX)
        if st != 0:
            raise SolverError(f"implicit midpoint solve failed at t={k * dt}")
        u = 2.0 * np.asarray(y) - u
        if (k + 1) % sample_every == 0:
            out.append(u.copy())
    t = np.arange(len(out)) * dt * sample_every
    return Trajectory(t=t, u=np.array(out), n=None, dt=dt)


@dataclass
class ConvergenceStudy:
    n_list: list
    errors: np.ndarray          # sup_t |u_{n_i} - u_{n_{i+1}}|
    slope: float                # of log(err^2) vs log(n)
    C: float                    # smallest C with err^2 <= C (1/n + 1/m)
    rows: list = field(default_factory=list)

    def to_rows(self):
        return [(int(n), float(e)) for n, e in zip(self.n_list[:-1], self.errors)]


def convergence_study(system: AbstractSystem, a, T: float, n_list, dt: float | None = None,
                      backend: str | None = None) -> ConvergenceStudy:
    """Sup-in-time distances between approximations for consecutive ``n``.

    All runs share the step ``dt = min(dt, 0.1 / max(n_list))`` so their
    samples coincide and the time-discretization error is comparable.
    """
    n_list = [float(n) for n in n_list]
    if len(n_list) < 2 or any(b <= a_ for a_, b in zip(n_list, n_list[1:])):
        raise UsageError("n_list must be increasing with at least two entries")
    for n in n_list:
        _check_n(system, n)
    step = 0.1 / max(n_list)
    step = step if dt is None else min(dt, step)
    trajs = [integrate_approx(system, n, a, T, step, backend=backend) for n in n_list]
    errs = np.array([np.max(np.linalg.norm(p.u - q.u, axis=1)) for p, q in zip(trajs, trajs[1:])])
    ns = np.array(n_list[:-1])
    ms = np.array(n_list[1:])
    good = errs > 0
    if np.count_nonzero(good) >= 2:
        slope = float(np.polyfit(np.log(ns[good]), np.log(errs[good] ** 2), 1)[0])
    else:
        slope = float("-inf") if not np.any(good) else float("nan")
    C = float(np.max(errs ** 2 / (1.0 / ns + 1.0 / ms)))
    return ConvergenceStudy(n_list=n_list, errors=errs, slope=slope, C=C)
