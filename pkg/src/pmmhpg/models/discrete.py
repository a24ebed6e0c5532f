"""Two-state Markov chain observed in Gaussian noise.

Small enough (T=2, N=2) that every augmented distribution can be enumerated,
which makes it the reference model for exactness tests.  States are 0.0 and
1.0.  A standard-normal variate ``v`` selects the state by thresholding:
``x_1 = 0`` iff ``v <= ndtri(p0)`` and the chain stays put iff
``v <= ndtri(stay)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

import numpy as np
from scipy.special import ndtri

from .. import _kernels
from ..ssm import StateSpaceModel

_LOG_2PI = math.log(2.0 * math.pi)


def _log(p):
    return math.log(p) if p > 0.0 else -math.inf


@dataclass(frozen=True)
class ToyParams:
    stay: float
    obs_sd: float


class DiscreteToyModel(StateSpaceModel):
    """The toy model with ``theta = (stay, obs_sd)`` restricted to two grids.

    The prior is uniform on ``stay_grid x sd_grid``.  ``stay`` is meant for a
    PMMH block (it has a grid-flip proposal), ``obs_sd`` for an exact PG block.
    """

    name = "discrete-toy"
    param_names = ("stay", "obs_sd")

    def __init__(self, p0=0.5, means=(-1.0, 1.0), stay_grid=(0.3, 0.85), sd_grid=(0.6, 1.4)):
        self.p0 = float(p0)
        self.means = (float(means[0]), float(means[1]))
        self.stay_grid = tuple(float(s) for s in stay_grid)
        self.sd_grid = tuple(float(s) for s in sd_grid)

    @staticmethod
    def _th(th):
        if isinstance(th, ToyParams):
            return th
        return ToyParams(float(th[0]), float(th[1]))

    def propagate_initial(self, th, v):
        return np.where(np.asarray(v) <= ndtri(self.p0), 0.0, 1.0)

    def propagate(self, th, v, x_prev, y_prev):
        th = self._th(th)
        return np.where(np.asarray(v) <= ndtri(th.stay), x_prev, 1.0 - np.asarray(x_prev))

    @staticmethod
    def _truncated(u, p, low):
        # standard-normal variate given Phi(v) <= p (low) or Phi(v) > p
        c = ndtri(p)
        v = np.where(low, ndtri(u * p), ndtri(p + u * (1.0 - p)))
        return np.where(low, np.minimum(v, c), np.maximum(v, np.nextafter(c, np.inf)))

    def invert_initial(self, th, x, u=None):
        u = np.full(np.shape(x), 0.5) if u is None else np.asarray(u)
        return self._truncated(u, self.p0, np.asarray(x) == 0.0)

    def invert(self, th, x, x_prev, y_prev, u=None):
        th = self._th(th)
        u = np.full(np.shape(x), 0.5) if u is None else np.asarray(u)
        return self._truncated(u, th.stay, np.asarray(x) == np.asarray(x_prev))

    def log_initial(self, th, x):
        return np.where(np.asarray(x) == 0.0, _log(self.p0), _log(1.0 - self.p0))

    def log_transition(self, th, x, x_prev, y_prev):
        th = self._th(th)
        return np.where(np.asarray(x) == np.asarray(x_prev), _log(th.stay), _log(1.0 - th.stay))

    def log_obs(self, th, x, y):
        th = self._th(th)
        m = np.where(np.asarray(x) == 0.0, self.means[0], self.means[1])
        z = (y - m) / th.obs_sd
        return -0.5 * _LOG_2PI - math.log(th.obs_sd) - 0.5 * z * z

    def kernel(self, th):
        th = self._th(th)
        p = np.array([ndtri(self.p0), ndtri(th.stay), _log(self.p0), _log(1.0 - self.p0),
                      _log(th.stay), _log(1.0 - th.stay), self.means[0], self.means[1],
                      th.obs_sd])
        return _kernels.TOY, p

    # exact quantities by enumeration

    def log_joint(self, th, x, y):
        """log p(x_{1:T}, y_{1:T} | theta) for one path."""
        return self.complete_data_loglik(self._th(th), np.asarray(x, dtype=float), y)

    def paths(self, T):
        return [np.array(p, dtype=float) for p in product((0.0, 1.0), repeat=T)]

    def smoothing_law(self, th, y) -> dict:
        """Exact p(x_{1:T} | y, theta) keyed by state tuples."""
        y = np.asarray(y, dtype=float)
        lj = {tuple(p): self.log_joint(th, p, y) for p in self.paths(len(y))}
        m = max(lj.values())
        z = sum(math.exp(v - m) for v in lj.values())
        return {k: math.exp(v - m) / z for k, v in lj.items()}

    def log_likelihood(self, th, y) -> float:
        y = np.asarray(y, dtype=float)
        vals = np.array([self.log_joint(th, p, y) for p in self.paths(len(y))])
        m = vals.max()
        return float(m + math.log(np.exp(vals - m).sum()))

    def posterior(self, y) -> dict:
        """Exact p(theta | y) over the parameter grid."""
        lp = {(s, d): self.log_likelihood(ToyParams(s, d), y)
              for s in self.stay_grid for d in self.sd_grid}
        m = max(lp.values())
        z = sum(math.exp(v - m) for v in lp.values())
        return {k: math.exp(v - m) / z for k, v in lp.items()}

    # parameter-space interface used by the sampler

    def theta(self, vec):
        return ToyParams(float(vec[0]), float(vec[1]))

    def initial_vector(self):
        return np.array([self.stay_grid[0], self.sd_grid[0]])

    def in_support(self, vec):
        return vec[0] in self.stay_grid and vec[1] in self.sd_grid

    def log_prior(self, vec):
        return 0.0 if self.in_support(vec) else -np.inf

    def transforms(self):
        return {}

    def propose(self, names, vec, stream):
        """Deterministic flip to the other grid point (symmetric, q-ratio 0)."""
        if tuple(names) != ("stay",):
            return None
        out = vec.copy()
        g = self.stay_grid
        out[0] = g[1] if vec[0] == g[0] else g[0]
        return out, 0.0

    def pg_update(self, names, vec, path, y, stream):
        if tuple(names) != ("obs_sd",):
            return None
        # only the observation density depends on obs_sd
        r = np.asarray(y) - np.where(np.asarray(path) == 0.0, self.means[0], self.means[1])
        sd = np.array(self.sd_grid)
        lp = -len(r) * np.log(sd) - 0.5 * np.dot(r, r) / sd**2
        p = np.exp(lp - lp.max())
        u = stream.uniform(1)[0]
        k = int(np.searchsorted(np.cumsum(p), u * p.sum(), side="left"))
        out = vec.copy()
        out[1] = self.sd_grid[k]
        return out, True

    def default_plan(self):
        from ..sampler import Block, BlockingPlan

        return BlockingPlan([Block("stay", ("stay",)), Block("obs_sd", ("obs_sd",))], p1=1)
