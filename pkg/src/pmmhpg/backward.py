"""Backward simulation of a trajectory from a completed particle system."""

from __future__ import annotations

import numpy as np

from . import _kernels
from .errors import DegenerateWeightsError
from .smc import _use_kernel
from .ssm import ParticleSystem, Trajectory


def categorical(logw, u) -> int:
    """Index ``min{k : C[k] >= u * C[-1]}`` for the cumulative weights ``C``.

    Returns -1 when every weight is zero.
    """
    lw = np.asarray(logw, dtype=np.float64)
    m = lw.max()
    if not np.isfinite(m):
        return -1
    c = np.cumsum(np.exp(lw - m))
    return int(np.searchsorted(c, u * c[-1], side="left"))


def backward_simulate(system: ParticleSystem, model, theta, y, stream, engine="auto") -> Trajectory:
    """Draw ``J_T`` from the final weights, then ``J_t`` given ``J_{t+1}`` backwards.

    ``J_t = l`` with probability proportional to
    ``w_t^l * f(x_{t+1}^{J_{t+1}} | x_t^l)``.  Consumes exactly ``T``
    uniforms from ``stream``.

    Raises:
        DegenerateWeightsError: all backward weights vanish at some ``t``.
    """
    y = np.ascontiguousarray(y, dtype=np.float64)
    T = system.T
    u = stream.uniform(T)
    kern = _use_kernel(model, theta, engine)
    if kern is not None:
        code, p = kern
        j, bad_t = _kernels.bsim_core(code, p, y, system.x, system.log_w, u)
        if bad_t >= 0:
            raise DegenerateWeightsError(int(bad_t), "backward weights")
        return Trajectory.from_system(system, j)
    j = np.empty(T, dtype=np.int64)
    k = categorical(system.log_w[T - 1], u[T - 1])
    if k < 0:
        raise DegenerateWeightsError(T - 1, "backward weights")
    j[T - 1] = k
    for t in range(T - 2, -1, -1):
        xn = system.x[t + 1, j[t + 1]]
        xn = np.broadcast_to(xn, system.x[t].shape)
        lw = system.log_w[t] + model.log_transition(theta, xn, system.x[t], y[t])
        k = categorical(lw, u[t])
        if k < 0:
            raise DegenerateWeightsError(t, "backward weights")
        j[t] = k
    return Trajectory.from_system(system, j)
