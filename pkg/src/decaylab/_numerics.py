"""Shared scalar numerics: batched adaptive Simpson and monotone bisection."""

import numpy as np


def adaptive_simpson(f, a, b, tol=1e-10, rtol=0.0, min_depth=4, max_depth=48):
    """Integrate ``f`` over each interval ``[a_i, b_i]``.

    All panels that are still active at a given refinement level are
    evaluated in one vectorized call of ``f``, so ``f`` must accept and
    return 1-D arrays. A panel is accepted when the Richardson estimate
    ``|S_left + S_right - S| / 15`` falls below its share of
    ``max(tol, rtol * |panel value|)``; the accepted value carries the
    Richardson correction.

    Parameters
    ----------
    f : callable
        Vectorized integrand.
    a, b : float or array_like
        Interval endpoints (broadcast together). ``b < a`` gives the
        negated integral.
    tol : float
        Absolute tolerance per interval.
    rtol : float
        Relative tolerance per panel; useful when the integral is huge.

    Returns
    -------
    float or ndarray
        Integral(s), same shape as the broadcast endpoints.
    """
    a_arr, b_arr = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    shape = a_arr.shape
    lo0 = a_arr.ravel().copy()
    hi0 = b_arr.ravel().copy()
    sign = np.where(hi0 < lo0, -1.0, 1.0)
    lo0, hi0 = np.minimum(lo0, hi0), np.maximum(lo0, hi0)
    n = lo0.size
    result = np.zeros(n)
    width0 = hi0 - lo0
    live = width0 > 0
    if not np.any(live):
        out = result * sign
        return out.reshape(shape) if shape else float(out[0])

    owner = np.nonzero(live)[0]
    lo = lo0[live]
    hi = hi0[live]
    mid = 0.5 * (lo + hi)
    vals = _call(f, np.concatenate([lo, mid, hi]))
    k = lo.size
    flo, fmid, fhi = vals[:k], vals[k:2 * k], vals[2 * k:]
    whole = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi)
    eps = np.full(k, float(tol))
    depth = 0

    while owner.size:
        lmid = 0.5 * (lo + mid)
        rmid = 0.5 * (mid + hi)
        vals = _call(f, np.concatenate([lmid, rmid]))
        k = lo.size
        flm, frm = vals[:k], vals[k:]
        left = (mid - lo) / 6.0 * (flo + 4.0 * flm + fmid)
        right = (hi - mid) / 6.0 * (fmid + 4.0 * frm + fhi)
        both = left + right
        err = both - whole
        bound = np.maximum(eps, rtol * np.abs(both))
        done = (np.abs(err) <= 15.0 * bound) & (depth >= min_depth)
        if depth >= max_depth:
            done[:] = True
        if not np.all(np.isfinite(both)):
            raise FloatingPointError("non-finite integrand value in adaptive_simpson")
        np.add.at(result, owner[done], both[done] + err[done] / 15.0)

        keep = ~done
        if not np.any(keep):
            break
        # children: [lo, mid] and [mid, hi]
        owner = np.concatenate([owner[keep], owner[keep]])
        new_lo = np.concatenate([lo[keep], mid[keep]])
        new_hi = np.concatenate([mid[keep], hi[keep]])
        new_mid = np.concatenate([lmid[keep], rmid[keep]])
        flo = np.concatenate([flo[keep], fmid[keep]])
        fhi = np.concatenate([fmid[keep], fhi[keep]])
        fmid = np.concatenate([flm[keep], frm[keep]])
        whole = np.concatenate([left[keep], right[keep]])
        eps = np.concatenate([eps[keep], eps[keep]]) * 0.5
        lo, hi, mid = new_lo, new_hi, new_mid
        depth += 1

    out = result * sign
    return out.reshape(shape) if shape else float(out[0])


def _call(f, x):
    y = np.asarray(f(x), dtype=float)
    if y.shape != x.shape:
        y = np.broadcast_to(y, x.shape).astype(float)
    return y


def bisect_increasing(f, y, lo, hi, rtol=1e-12, max_iter=200, geometric=False):
    """Solve ``f(x) = y`` for a non-decreasing vectorized ``f``.

    ``lo``/``hi`` must bracket the root (``f(lo) <= y <= f(hi)``); this is
    not re-checked per element beyond a final sanity test. With
    ``geometric=True`` the bracket must be positive and midpoints are taken
    in log space, which resolves roots spanning many decades.
    """
    y = np.asarray(y, dtype=float)
    lo = np.broadcast_to(np.asarray(lo, dtype=float), y.shape).copy()
    hi = np.broadcast_to(np.asarray(hi, dtype=float), y.shape).copy()
    for _ in range(max_iter):
        if geometric:
            m = np.sqrt(lo * hi)
        else:
            m = 0.5 * (lo + hi)
        below = f(m) < y
        lo = np.where(below, m, lo)
        hi = np.where(below, hi, m)
        if np.all(hi - lo <= rtol * np.abs(hi)):
            break
    return 0.5 * (lo + hi)
