"""State-space model contract and the particle-system container.

Time and particle indices are 0-based throughout.  ``y_prev`` arguments carry
the previous observation because the transition may depend on it (leverage).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateWeightsError, ModelEvaluationError

# Continuous models round propagated states onto the grid of multiples of
# 2**-40 (for |x| < 2048).  A double-precision variate cannot reach every
# double state near zero, but it can reach every grid point, so a reference
# path always has an exact preimage.
_GRID_SHIFT = 1.5 * 2.0**12


def snap(x):
    """Round states onto the propagation grid."""
    return (x + _GRID_SHIFT) - _GRID_SHIFT


class StateSpaceModel:
    """Base class for models driven by standard-normal base variates.

    Subclasses implement the propagation map ``x = X(v; theta, x_prev)``, its
    inverse and the three densities.  All methods broadcast over particles.
    The proposal defaults to the transition (bootstrap filter).

    A scalar-state model may additionally return ``(code, params)`` from
    :meth:`kernel` to run on the compiled engine.
    """

    state_dim = 1
    bootstrap = True

    def propagate_initial(self, theta, v):
        raise NotImplementedError

    def propagate(self, theta, v, x_prev, y_prev):
        raise NotImplementedError

    def invert_initial(self, theta, x, u=None):
        raise NotImplementedError

    def invert(self, theta, x, x_prev, y_prev, u=None):
        raise NotImplementedError

    def log_initial(self, theta, x):
        raise NotImplementedError

    def log_transition(self, theta, x, x_prev, y_prev):
        raise NotImplementedError

    def log_obs(self, theta, x, y):
        raise NotImplementedError

    def log_proposal_initial(self, theta, x):
        return self.log_initial(theta, x)

    def log_proposal(self, theta, x, x_prev, y_prev):
        return self.log_transition(theta, x, x_prev, y_prev)

    def kernel(self, theta):
        return None

    def complete_data_loglik(self, theta, x, y):
        """log p(x_{1:T}, y_{1:T} | theta) along a single path."""
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        total = float(self.log_initial(theta, x[:1]).sum())
        if len(x) > 1:
            total += float(np.sum(self.log_transition(theta, x[1:], x[:-1], y[:-1])))
        total += float(np.sum(self.log_obs(theta, x, y)))
        return total


def propagate(model, v, theta, x_prev=None, t=0, y=None):
    """Propagation map at time ``t``; ``x_prev`` must be given iff ``t >= 1``."""
    if (x_prev is None) != (t == 0):
        raise ValueError("x_prev is required exactly when t >= 1")
    if t == 0:
        x = model.propagate_initial(theta, v)
    else:
        x = model.propagate(theta, v, x_prev, y[t - 1])
    if not np.all(np.isfinite(x)):
        raise ModelEvaluationError("non-finite propagated state", t)
    return x


def invert_propagate(model, x, theta, x_prev=None, t=0, y=None, u=None):
    if t == 0:
        return model.invert_initial(theta, x, u)
    return model.invert(theta, x, x_prev, y[t - 1], u)


def log_weight(model, theta, t, x, x_prev, y):
    """log w_t = log g + log f - log m (just log g for the bootstrap proposal)."""
    lw = model.log_obs(theta, x, y[t])
    if not model.bootstrap:
        if t == 0:
            lw = lw + model.log_initial(theta, x) - model.log_proposal_initial(theta, x)
        else:
            lw = (lw + model.log_transition(theta, x, x_prev, y[t - 1])
                  - model.log_proposal(theta, x, x_prev, y[t - 1]))
    if np.any(np.isnan(lw)):
        raise ModelEvaluationError("weight evaluation produced NaN", t)
    return lw


def log_transition(model, theta, t, x, x_prev, y):
    if t < 1:
        raise ValueError("transition density is defined for t >= 1")
    return model.log_transition(theta, x, x_prev, y[t - 1])


def normalize_log_weights(logw):
    """Row-wise ``(w_bar, log_sum_w)`` computed by max subtraction.

    Rows whose weights are all zero raise :class:`DegenerateWeightsError`.
    """
    logw = np.atleast_2d(np.asarray(logw, dtype=np.float64))
    m = logw.max(axis=1)
    bad = ~np.isfinite(m) | (m == -np.inf)
    if np.any(bad):
        raise DegenerateWeightsError(int(np.flatnonzero(bad)[0]))
    e = np.exp(logw - m[:, None])
    s = e.sum(axis=1)
    return e / s[:, None], m + np.log(s)


@dataclass
class ParticleSystem:
    """All particles, ancestors and weights of one (conditional) SMC run.

    ``x`` is ``(T, N)`` for scalar states and ``(T, N, d)`` otherwise;
    ``a[t]`` holds the ancestors (into ``x[t]``) of the particles ``x[t+1]``.
    """

    x: np.ndarray
    a: np.ndarray
    log_w: np.ndarray
    w_bar: np.ndarray
    log_sum_w: np.ndarray

    @classmethod
    def from_log_weights(cls, x, a, log_w):
        w_bar, log_sum_w = normalize_log_weights(log_w)
        return cls(x, a, log_w, w_bar, log_sum_w)

    @property
    def T(self) -> int:
        return self.x.shape[0]

    @property
    def N(self) -> int:
        return self.x.shape[1]

    @property
    def log_z_hat(self) -> float:
        return float(np.sum(self.log_sum_w - np.log(self.N)))

    def path(self, j) -> np.ndarray:
        j = np.asarray(j)
        return self.x[np.arange(self.T), j].copy()


@dataclass
class Trajectory:
    """Selected indices ``j`` and the matching state path ``x[t, j[t]]``."""

    j: np.ndarray
    x_path: np.ndarray

    @classmethod
    def from_system(cls, system: ParticleSystem, j) -> "Trajectory":
        j = np.asarray(j, dtype=np.int64)
        return cls(j, system.path(j))

    def copy(self) -> "Trajectory":
        return Trajectory(self.j.copy(), self.x_path.copy())
