"""Scalar linear-Gaussian state-space model, the model with an exact likelihood.

    x_1 ~ N(0, sd1^2),  x_t = phi x_{t-1} + sigma v_t,  y_t = x_t + obs_sd e_t

``sd1`` defaults to the stationary value sigma / sqrt(1 - phi^2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import _kernels
from ..errors import SingularModelError
from ..ssm import StateSpaceModel, snap

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class LgParams:
    phi: float
    sigma: float
    obs_sd: float = 1.0
    sd1: float | None = None

    @property
    def initial_sd(self) -> float:
        if self.sd1 is not None:
            return self.sd1
        return self.sigma / math.sqrt(1.0 - self.phi**2)


def _logpdf(x, mean, sd):
    z = (x - mean) / sd
    return -0.5 * _LOG_2PI - math.log(sd) - 0.5 * z * z


class LinearGaussianModel(StateSpaceModel):
    """Bootstrap filter for the scalar AR(1)-plus-noise model.

    The parameter vector is empty: ``theta`` is fixed at construction, which
    is how the model is used as a validation target.
    """

    name = "linear-gaussian"
    param_names = ()

    def __init__(self, params: LgParams):
        self.params = params

    def _p(self, th):
        return self.params if th is None or not isinstance(th, LgParams) else th

    def propagate_initial(self, th, v):
        return snap(self._p(th).initial_sd * np.asarray(v))

    def propagate(self, th, v, x_prev, y_prev):
        p = self._p(th)
        return snap(p.phi * x_prev + p.sigma * np.asarray(v))

    def invert_initial(self, th, x, u=None):
        p = self._p(th)
        if not p.initial_sd > 0.0:
            raise SingularModelError("initial variance is zero", 0)
        return np.asarray(x) / p.initial_sd

    def invert(self, th, x, x_prev, y_prev, u=None):
        p = self._p(th)
        if not p.sigma > 0.0:
            raise SingularModelError("process noise is zero")
        return (np.asarray(x) - p.phi * x_prev) / p.sigma

    def log_initial(self, th, x):
        return _logpdf(np.asarray(x), 0.0, self._p(th).initial_sd)

    def log_transition(self, th, x, x_prev, y_prev):
        p = self._p(th)
        return _logpdf(np.asarray(x), p.phi * x_prev, p.sigma)

    def log_obs(self, th, x, y):
        return _logpdf(y, np.asarray(x), self._p(th).obs_sd)

    def kernel(self, th):
        p = self._p(th)
        return _kernels.LG, np.array([p.phi, p.sigma, p.initial_sd, p.obs_sd])

    def theta(self, vec):
        return self.params

    def initial_vector(self):
        return np.empty(0)

    def in_support(self, vec):
        return True

    def log_prior(self, vec):
        return 0.0

    def transforms(self):
        return {}

    def pg_update(self, names, vec, path, y, stream):
        return None

    def default_plan(self):
        from ..sampler import BlockingPlan

        return BlockingPlan([], p1=0)

    def simulate(self, T, stream):
        p = self.params
        v = stream.normal(2 * T).reshape(2, T)
        x = np.empty(T)
        x[0] = p.initial_sd * v[0, 0]
        for t in range(1, T):
            x[t] = p.phi * x[t - 1] + p.sigma * v[0, t]
        return x, x + p.obs_sd * v[1]
