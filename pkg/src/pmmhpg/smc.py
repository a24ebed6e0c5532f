"""Sequential Monte Carlo with sorted multinomial resampling.

Every run is a pure function of ``(model, theta, y, RandomInputs)``.  Before
each resampling step the particles at ``t-1`` are sorted (plain sort for
scalar states, Hilbert keys otherwise), the uniforms are mapped through the
cumulative weights of the *sorted* cloud and the chosen sorted positions are
mapped back to particle indices.  Keeping nearby indices on nearby states is
what makes likelihood estimates at nearby ``theta`` strongly correlated.

Two engines implement the same algorithm: a numpy reference engine that works
for any :class:`~pmmhpg.ssm.StateSpaceModel`, and a compiled engine used when
the model exposes a kernel (scalar SV, linear Gaussian and the discrete toy).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DegenerateConstraintError, DegenerateWeightsError, ModelEvaluationError
from .hilbert import DEFAULT_ORDER, sort_order
from .rng import RandomInputs
from .ssm import ParticleSystem, log_weight, propagate

ENGINES = ("auto", "numba", "numpy")


@dataclass
class SmcRun:
    system: ParticleSystem
    log_z_hat: float
    inputs_used: RandomInputs


def cumulative_weights(sorted_weights) -> np.ndarray:
    """Left-to-right cumulative sum, set to exactly 1 from the last positive weight on."""
    w = np.asarray(sorted_weights, dtype=np.float64)
    F = np.cumsum(w)
    pos = np.flatnonzero(w > 0.0)
    F[(pos[-1] if len(pos) else 0):] = 1.0
    return F


def multinomial_resample(v_a, sorted_weights) -> np.ndarray:
    """Sorted positions ``min{k : F[k] >= v}`` for each uniform (0-based)."""
    F = cumulative_weights(sorted_weights)
    return np.searchsorted(F, np.asarray(v_a, dtype=np.float64), side="left")


def constrained_uniform(F, s, u, t=None) -> float:
    """Map ``u`` in (0,1) into ``(F[s-1], F[s]]`` so that the search returns ``s``."""
    lo = float(F[s - 1]) if s > 0 else 0.0
    hi = float(F[s])
    if not hi > lo:
        raise DegenerateConstraintError(t)
    v = lo + u * (hi - lo)
    if v <= lo:
        v = np.nextafter(lo, np.inf)
    if v > hi:
        v = hi
    if v >= 1.0:
        v = np.nextafter(1.0, 0.0)
        if not v > lo:
            raise DegenerateConstraintError(t)
    return float(v)


def log_likelihood_estimate(system: ParticleSystem) -> float:
    """log Z-hat = sum_t (log sum_i w_t^i - log N)."""
    return system.log_z_hat


def _use_kernel(model, theta, engine):
    if engine not in ENGINES:
        raise ValueError(f"unknown engine {engine!r}")
    if engine == "numpy" or model.state_dim != 1:
        if engine == "numba":
            raise ValueError("the compiled engine supports scalar states only")
        return None
    k = model.kernel(theta)
    if k is None and engine == "numba":
        raise ValueError(f"{type(model).__name__} has no compiled kernel")
    return k


def _raise_status(status, t):
    if status == 1:
        raise DegenerateWeightsError(t)
    if status == 2:
        raise DegenerateConstraintError(t)
    if status == 3:
        raise ModelEvaluationError("non-finite state or weight", t)


def _smc_numpy(model, theta, y, inputs, sort, order, jref=None):
    vx, va = inputs.v_x, inputs.v_a
    T, N = vx.shape[:2]
    x = np.empty(vx.shape)
    a = np.empty((max(T - 1, 0), N), dtype=np.int64)
    logw = np.empty((T, N))
    x[0] = propagate(model, vx[0], theta, t=0)
    logw[0] = log_weight(model, theta, 0, x[0], None, y)
    for t in range(1, T):
        lw = logw[t - 1]
        m = lw.max()
        if not np.isfinite(m):
            raise DegenerateWeightsError(t - 1)
        e = np.exp(lw - m)
        wbar = e / e.sum()
        zeta = sort_order(x[t - 1], order) if sort else np.arange(N)
        F = cumulative_weights(wbar[zeta])
        if jref is not None:
            zinv = np.empty(N, dtype=np.int64)
            zinv[zeta] = np.arange(N)
            va[t - 1, jref[t]] = constrained_uniform(F, zinv[jref[t - 1]], va[t - 1, jref[t]], t)
        a[t - 1] = zeta[np.searchsorted(F, va[t - 1], side="left")]
        x[t] = propagate(model, vx[t], theta, x[t - 1][a[t - 1]], t, y)
        logw[t] = log_weight(model, theta, t, x[t], x[t - 1][a[t - 1]], y)
    if not np.isfinite(logw[T - 1].max()):
        raise DegenerateWeightsError(T - 1)
    return x, a, logw


def _smc_kernel(kern, y, inputs, sort, jref=None):
    code, p = kern
    vx, va = inputs.v_x, inputs.v_a
    if jref is None:
        jr = np.zeros(1, dtype=np.int64)
        ucon = np.zeros(1)
    else:
        jr = np.asarray(jref, dtype=np.int64)
        ucon = va[np.arange(len(jr) - 1), jr[1:]].copy()
    x, a, logw, status, bad_t = _kernels.smc_core(
        code, p, y, vx, va, bool(sort), jref is not None, jr, ucon
    )
    _raise_status(status, bad_t)
    return x, a, logw


def _run(model, theta, y, inputs, sort=True, engine="auto", order=DEFAULT_ORDER, jref=None):
    y = np.ascontiguousarray(y, dtype=np.float64)
    if inputs.T != len(y):
        raise ValueError(f"inputs cover T={inputs.T} but y has length {len(y)}")
    kern = _use_kernel(model, theta, engine)
    if kern is not None:
        x, a, logw = _smc_kernel(kern, y, inputs, sort, jref)
    else:
        x, a, logw = _smc_numpy(model, theta, y, inputs, sort, order, jref)
    system = ParticleSystem.from_log_weights(x, a, logw)
    return system


def run_smc(model, theta, y, N, inputs: RandomInputs, sort=True, engine="auto",
            order=DEFAULT_ORDER) -> SmcRun:
    """Run the particle filter driven entirely by ``inputs``.

    Args:
        model: a :class:`~pmmhpg.ssm.StateSpaceModel`.
        theta: model parameters, passed through to the model.
        y: observations, length ``T``.
        N: number of particles; must match ``inputs``.
        inputs: base variates for the whole run.
        sort: sort the cloud before each resampling step.
        engine: ``"auto"``, ``"numba"`` or ``"numpy"``.
        order: Hilbert order (bits per axis) for multivariate states.

    Raises:
        DegenerateWeightsError: every weight at some ``t`` is zero.
        ModelEvaluationError: the model produced a non-finite state or weight.
    """
    if N < 1 or inputs.N != N:
        raise ValueError(f"N={N} does not match inputs with N={inputs.N}")
    system = _run(model, theta, y, inputs, sort, engine, order)
    return SmcRun(system, system.log_z_hat, inputs)
