"""Compiled inner loops for scalar-state models.

Models are dispatched on an integer code with a flat parameter vector built by
the Python model class (see ``kernel()`` on each model):

* ``SV``  -- [mu, phi, sd_initial, sd_transition, leverage]
  where leverage = rho * tau
* ``LG``  -- [phi, sigma, sd_initial, obs_sd]
* ``TOY`` -- [c_init, c_stay, log_p0, log_p1, log_stay, log_switch,
  mean0, mean1, obs_sd]

The SMC loop mirrors the reference implementation in :mod:`pmmhpg.smc` step
for step; only the arithmetic is compiled.
"""

import math

import numpy as np
from numba import njit

SV = 0
LG = 1
TOY = 2

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
_GRID_SHIFT = 1.5 * 2.0**12  # must match pmmhpg.ssm

OK = -1


@njit(cache=True, nogil=True)
def prop0(code, p, v):
    if code == SV:
        return ((p[0] + p[2] * v) + _GRID_SHIFT) - _GRID_SHIFT
    elif code == LG:
        return ((p[2] * v) + _GRID_SHIFT) - _GRID_SHIFT
    else:
        return 0.0 if v <= p[0] else 1.0


@njit(cache=True, nogil=True)
def prop(code, p, v, xp, yp):
    if code == SV:
        m = p[0] + p[1] * (xp - p[0]) + p[4] * math.exp(-0.5 * xp) * yp
        return ((m + p[3] * v) + _GRID_SHIFT) - _GRID_SHIFT
    elif code == LG:
        return ((p[0] * xp + p[1] * v) + _GRID_SHIFT) - _GRID_SHIFT
    else:
        if v <= p[1]:
            return xp
        return 1.0 - xp


@njit(cache=True, nogil=True)
def log_obs(code, p, x, y):
    if code == SV:
        return -_HALF_LOG_2PI - 0.5 * x - 0.5 * y * y * math.exp(-x)
    elif code == LG:
        z = (y - x) / p[3]
        return -_HALF_LOG_2PI - math.log(p[3]) - 0.5 * z * z
    else:
        m = p[6] if x == 0.0 else p[7]
        z = (y - m) / p[8]
        return -_HALF_LOG_2PI - math.log(p[8]) - 0.5 * z * z


@njit(cache=True, nogil=True)
def log_trans(code, p, x, xp, yp):
    if code == SV:
        mean = p[0] + p[1] * (xp - p[0]) + p[4] * math.exp(-0.5 * xp) * yp
        z = (x - mean) / p[3]
        return -_HALF_LOG_2PI - math.log(p[3]) - 0.5 * z * z
    elif code == LG:
        z = (x - p[0] * xp) / p[1]
        return -_HALF_LOG_2PI - math.log(p[1]) - 0.5 * z * z
    else:
        return p[4] if x == xp else p[5]


@njit(cache=True, nogil=True)
def prop_path(code, p, v, xp, yp, first):
    """Vectorised propagation; ``first`` marks entries that use the initial map."""
    out = np.empty(v.shape[0])
    for i in range(v.shape[0]):
        if first[i]:
            out[i] = prop0(code, p, v[i])
        else:
            out[i] = prop(code, p, v[i], xp[i], yp[i])
    return out


@njit(cache=True, nogil=True)
def _search(F, v):
    # min{k : F[k] >= v}
    lo = 0
    hi = F.shape[0] - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if F[mid] >= v:
            hi = mid
        else:
            lo = mid + 1
    return lo


@njit(cache=True, nogil=True)
def smc_core(code, p, y, vx, va, do_sort, constrained, jref, ucon):
    """Run the (optionally constrained) sorted-multinomial SMC.

    Returns ``(x, a, logw, status, bad_t)``.  ``status`` is 0 on success,
    1 for an all-zero weight row at ``bad_t``, 2 for an empty constrained
    resampling interval at ``bad_t`` and 3 for a non-finite state or NaN
    weight at ``bad_t``.  In constrained mode the resampling
    variate of slot ``jref[t]`` is written into ``va[t-1]``.
    """
    T, N = vx.shape
    x = np.empty((T, N))
    a = np.empty((max(T - 1, 0), N), dtype=np.int64)
    logw = np.empty((T, N))
    wbar = np.empty(N)
    F = np.empty(N)
    zeta = np.arange(N)
    zinv = np.empty(N, dtype=np.int64)
    for i in range(N):
        x[0, i] = prop0(code, p, vx[0, i])
        logw[0, i] = log_obs(code, p, x[0, i], y[0])
        if not math.isfinite(x[0, i]) or math.isnan(logw[0, i]):
            return x, a, logw, 3, 0
    for t in range(1, T):
        m = -np.inf
        for i in range(N):
            if logw[t - 1, i] > m:
                m = logw[t - 1, i]
        if not (m > -np.inf and m < np.inf):
            return x, a, logw, 1, t - 1
        s = 0.0
        for i in range(N):
            wbar[i] = math.exp(logw[t - 1, i] - m)
            s += wbar[i]
        for i in range(N):
            wbar[i] /= s
        if do_sort:
            zeta = np.argsort(x[t - 1], kind="mergesort")
        cum = 0.0
        last = 0
        for k in range(N):
            cum += wbar[zeta[k]]
            F[k] = cum
            if wbar[zeta[k]] > 0.0:
                last = k
        for k in range(last, N):
            F[k] = 1.0
        if constrained:
            for k in range(N):
                zinv[zeta[k]] = k
            sp = zinv[jref[t - 1]]
            lo = F[sp - 1] if sp > 0 else 0.0
            hi = F[sp]
            if not hi > lo:
                return x, a, logw, 2, t
            v = lo + ucon[t - 1] * (hi - lo)
            if v <= lo:
                v = np.nextafter(lo, np.inf)
            if v > hi:
                v = hi
            if v >= 1.0:
                v = np.nextafter(1.0, 0.0)
                if not v > lo:
                    return x, a, logw, 2, t
            va[t - 1, jref[t]] = v
        for i in range(N):
            a[t - 1, i] = zeta[_search(F, va[t - 1, i])]
        for i in range(N):
            xp = x[t - 1, a[t - 1, i]]
            x[t, i] = prop(code, p, vx[t, i], xp, y[t - 1])
            logw[t, i] = log_obs(code, p, x[t, i], y[t])
            if not math.isfinite(x[t, i]) or math.isnan(logw[t, i]):
                return x, a, logw, 3, t
    m = -np.inf
    for i in range(N):
        if logw[T - 1, i] > m:
            m = logw[T - 1, i]
    if not (m > -np.inf and m < np.inf):
        return x, a, logw, 1, T - 1
    return x, a, logw, 0, OK


@njit(cache=True, nogil=True)
def _categorical(lw, u):
    N = lw.shape[0]
    m = -np.inf
    for i in range(N):
        if lw[i] > m:
            m = lw[i]
    if not (m > -np.inf and m < np.inf):
        return -1
    c = np.empty(N)
    s = 0.0
    for i in range(N):
        s += math.exp(lw[i] - m)
        c[i] = s
    target = u * s
    for i in range(N):
        if c[i] >= target:
            return i
    return N - 1


@njit(cache=True, nogil=True)
def bsim_core(code, p, y, x, logw, u):
    """Backward simulation; returns ``(j, bad_t)`` with ``bad_t = -1`` on success."""
    T, N = x.shape
    j = np.empty(T, dtype=np.int64)
    lw = np.empty(N)
    k = _categorical(logw[T - 1], u[T - 1])
    if k < 0:
        return j, T - 1
    j[T - 1] = k
    for t in range(T - 2, -1, -1):
        xn = x[t + 1, j[t + 1]]
        for l in range(N):
            lw[l] = logw[t, l] + log_trans(code, p, xn, x[t, l], y[t])
        k = _categorical(lw, u[t])
        if k < 0:
            return j, t
        j[t] = k
    return j, OK
