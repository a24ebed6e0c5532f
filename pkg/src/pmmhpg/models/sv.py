"""Univariate stochastic volatility with leverage.

    y_t = exp(x_t / 2) eps_t
    x_1 ~ N(mu, tau2 / (1 - phi^2))
    x_{t+1} = mu + phi (x_t - mu) + rho tau eps_t + tau sqrt(1 - rho^2) eta_t

Given ``y_t`` the leverage term is ``rho tau exp(-x_t / 2) y_t``, so the
transition density depends on the previous observation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betaln
from scipy.stats import truncnorm

from .. import _kernels
from ..errors import SingularModelError
from ..ssm import StateSpaceModel, snap

_LOG_2PI = math.log(2.0 * math.pi)

PHI_PRIOR_A = 100.0
PHI_PRIOR_B = 1.5


@dataclass(frozen=True)
class SvParams:
    mu: float
    phi: float
    tau2: float
    rho: float = 0.0

    def __post_init__(self):
        if not (abs(self.phi) < 1.0 and self.tau2 > 0.0 and abs(self.rho) < 1.0):
            raise ValueError(f"invalid SV parameters {self}")

    @property
    def tau(self) -> float:
        return math.sqrt(self.tau2)

    def as_array(self) -> np.ndarray:
        return np.array([self.mu, self.phi, self.tau2, self.rho])

    @classmethod
    def from_array(cls, a) -> "SvParams":
        return cls(float(a[0]), float(a[1]), float(a[2]), float(a[3]))

    def replace(self, **kw) -> "SvParams":
        d = dict(mu=self.mu, phi=self.phi, tau2=self.tau2, rho=self.rho)
        d.update(kw)
        return SvParams(**d)


def _sd_initial(th: SvParams) -> float:
    return math.sqrt(th.tau2 / (1.0 - th.phi**2))


def _sd_transition(th: SvParams) -> float:
    return math.sqrt(th.tau2 * (1.0 - th.rho**2))


def transition_mean(th: SvParams, x_prev, y_prev):
    return th.mu + th.phi * (x_prev - th.mu) + th.rho * th.tau * np.exp(-0.5 * x_prev) * y_prev


def _normal_logpdf(x, mean, sd):
    z = (x - mean) / sd
    return -0.5 * _LOG_2PI - math.log(sd) - 0.5 * z * z


# --- priors and transforms -------------------------------------------------

def log_prior_phi(phi) -> float:
    """Scaled Beta(100, 1.5) on (1 + phi) / 2, as a density in phi."""
    if not abs(phi) < 1.0:
        return -np.inf
    return (-math.log(2.0) - betaln(PHI_PRIOR_A, PHI_PRIOR_B)
            + (PHI_PRIOR_A - 1.0) * math.log((1.0 + phi) / 2.0)
            + (PHI_PRIOR_B - 1.0) * math.log((1.0 - phi) / 2.0))


def log_prior_tau2(tau2) -> float:
    """Half-Cauchy(0, 1) on tau, moved to the tau2 scale (Jacobian 1 / (2 tau))."""
    if not tau2 > 0.0:
        return -np.inf
    return math.log(2.0 / math.pi) - math.log1p(tau2) - math.log(2.0) - 0.5 * math.log(tau2)


def log_prior_rho(rho) -> float:
    """Flat on atanh(rho), i.e. proportional to 1 / (1 - rho^2)."""
    if not abs(rho) < 1.0:
        return -np.inf
    return -math.log1p(-rho * rho)


def sv_log_prior(params: SvParams) -> float:
    """Joint log prior; flat in mu.  Out-of-support values give -inf."""
    if isinstance(params, SvParams):
        mu, phi, tau2, rho = params.mu, params.phi, params.tau2, params.rho
    else:
        mu, phi, tau2, rho = (float(v) for v in params)
    if not np.isfinite(mu):
        return -np.inf
    return log_prior_phi(phi) + log_prior_tau2(tau2) + log_prior_rho(rho)


def _log_sech2(u):
    # log(1 - tanh(u)^2), stable for large |u|
    a = abs(u)
    return math.log(4.0) - 2.0 * a - 2.0 * math.log1p(math.exp(-2.0 * a))


def _exp(u):
    return math.exp(u) if u < 709.0 else math.inf


def _atanh(v):
    return math.atanh(v) if abs(v) < 1.0 else math.copysign(math.inf, v)


def _log(v):
    return math.log(v) if v > 0.0 else -math.inf


# Per-parameter maps onto the real line: name -> (forward, inverse, log|d inverse / du|)
TRANSFORMS = {
    "mu": (float, float, lambda u: 0.0),
    "phi": (_atanh, math.tanh, _log_sech2),
    "tau2": (_log, _exp, float),
    "rho": (_atanh, math.tanh, _log_sech2),
}

SV_NAMES = ("mu", "phi", "tau2", "rho")


def sv_transform(params: SvParams) -> np.ndarray:
    """(mu, atanh phi, log tau2, atanh rho)."""
    a = params.as_array()
    return np.array([TRANSFORMS[n][0](v) for n, v in zip(SV_NAMES, a)])


def sv_untransform(u) -> SvParams:
    return SvParams.from_array([TRANSFORMS[n][1](float(v)) for n, v in zip(SV_NAMES, u)])


def sv_log_jacobian(u) -> float:
    """log |d params / d u| of :func:`sv_untransform`."""
    return float(sum(TRANSFORMS[n][2](float(v)) for n, v in zip(SV_NAMES, u)))


# --- conditional updates -----------------------------------------------------

def sv_mu_conditional(path, th: SvParams, y):
    """Mean and variance of the Gaussian full conditional of mu (flat prior)."""
    h = np.asarray(path, dtype=np.float64)
    T = len(h)
    phi, tau2, rho = th.phi, th.tau2, th.rho
    one_r = 1.0 - rho * rho
    prec_num = (1.0 - phi * phi) * one_r + (T - 1) * (1.0 - phi) ** 2
    var = tau2 * one_r / prec_num
    s = h[0] * (1.0 - phi * phi) * one_r
    if T > 1:
        eps = np.asarray(y, dtype=np.float64)[:-1] * np.exp(-0.5 * h[:-1])
        s += (1.0 - phi) * np.sum(h[1:] - phi * h[:-1] - rho * th.tau * eps)
    return var * s / (tau2 * one_r), var


def sv_pg_update_mu(path, th: SvParams, y, stream) -> float:
    """Exact Gibbs draw of mu given the state path."""
    mean, var = sv_mu_conditional(path, th, y)
    return float(mean + math.sqrt(var) * stream.normal(1)[0])


def sv_phi_proposal(path, th: SvParams, y):
    """Mean and variance of the Gaussian phi proposal (before truncation).

    Returns ``None`` when the path carries no information on phi.
    """
    h = np.asarray(path, dtype=np.float64)
    if len(h) < 2:
        return None
    d = h - th.mu
    eps = np.asarray(y, dtype=np.float64)[:-1] * np.exp(-0.5 * h[:-1])
    one_r = 1.0 - th.rho**2
    denom = np.sum(d[:-1] ** 2) - d[0] ** 2 * one_r
    if not denom > 0.0:
        return None
    num = np.sum(d[1:] * d[:-1] - th.rho * th.tau * d[:-1] * eps)
    return num / denom, th.tau2 * one_r / denom


def phi_log_accept_ratio(phi_new, phi_old) -> float:
    """log of p(phi*) sqrt(1 - phi*^2) / (p(phi) sqrt(1 - phi^2))."""
    return (log_prior_phi(phi_new) + 0.5 * math.log1p(-phi_new**2)
            - log_prior_phi(phi_old) - 0.5 * math.log1p(-phi_old**2))


def truncated_normal(stream, mean, sd, lo=-1.0, hi=1.0) -> float:
    """Inverse-CDF draw from N(mean, sd^2) restricted to the open interval (lo, hi)."""
    u = stream.uniform(1)[0]
    a, b = (lo - mean) / sd, (hi - mean) / sd
    x = float(truncnorm.ppf(u, a, b, loc=mean, scale=sd))
    return min(max(x, np.nextafter(lo, hi)), np.nextafter(hi, lo))


def sv_pg_update_phi(path, th: SvParams, y, stream):
    """Truncated-normal MH step for phi; returns ``(phi, accepted)``.

    Always consumes two uniforms so stream positions do not depend on the path.
    """
    prop = sv_phi_proposal(path, th, y)
    if prop is None:
        stream.uniform(2)
        return th.phi, False
    mean, var = prop
    phi_new = truncated_normal(stream, mean, math.sqrt(var))
    log_u = math.log(stream.uniform(1)[0])
    if log_u < phi_log_accept_ratio(phi_new, th.phi):
        return phi_new, True
    return th.phi, False


# --- model ---------------------------------------------------------------------

class SVModel(StateSpaceModel):
    """Bootstrap SV-with-leverage model; ``theta`` is an :class:`SvParams`."""

    name = "sv-leverage"
    param_names = SV_NAMES

    def propagate_initial(self, th, v):
        return snap(th.mu + _sd_initial(th) * np.asarray(v))

    def propagate(self, th, v, x_prev, y_prev):
        m = th.mu + th.phi * (x_prev - th.mu) + th.rho * th.tau * np.exp(-0.5 * x_prev) * y_prev
        return snap(m + _sd_transition(th) * np.asarray(v))

    def invert_initial(self, th, x, u=None):
        return np.sqrt((1.0 - th.phi**2) / th.tau2) * (np.asarray(x) - th.mu)

    def invert(self, th, x, x_prev, y_prev, u=None):
        sd = _sd_transition(th)
        if not sd > 0.0:
            raise SingularModelError("transition variance tau2 (1 - rho^2) is zero")
        return (np.asarray(x) - transition_mean(th, x_prev, y_prev)) / sd

    def log_initial(self, th, x):
        return _normal_logpdf(np.asarray(x), th.mu, _sd_initial(th))

    def log_transition(self, th, x, x_prev, y_prev):
        return _normal_logpdf(np.asarray(x), transition_mean(th, x_prev, y_prev), _sd_transition(th))

    def log_obs(self, th, x, y):
        x = np.asarray(x)
        with np.errstate(over="ignore"):
            # overflow means a zero density
            return -0.5 * _LOG_2PI - 0.5 * x - 0.5 * y * y * np.exp(-x)

    def kernel(self, th):
        p = np.array([th.mu, th.phi, _sd_initial(th), _sd_transition(th), th.rho * th.tau])
        return _kernels.SV, p

    # parameter-space interface used by the sampler

    def theta(self, vec) -> SvParams:
        return SvParams.from_array(vec)

    def initial_vector(self) -> np.ndarray:
        return np.array([0.0, 0.95, 0.05, 0.0])

    def in_support(self, vec) -> bool:
        return abs(vec[1]) < 1.0 and vec[2] > 0.0 and abs(vec[3]) < 1.0 and np.isfinite(vec[0])

    def log_prior(self, vec) -> float:
        if not self.in_support(vec):
            return -np.inf
        return sv_log_prior(vec)

    def transforms(self):
        return TRANSFORMS

    def pg_update(self, names, vec, path, y, stream):
        """Model-specific exact updates; ``None`` means use the generic RW-MH step."""
        if tuple(names) == ("mu",):
            out = vec.copy()
            out[0] = sv_pg_update_mu(path, self.theta(vec), y, stream)
            return out, True
        if tuple(names) == ("phi",):
            out = vec.copy()
            out[1], acc = sv_pg_update_phi(path, self.theta(vec), y, stream)
            return out, acc
        return None

    def default_plan(self):
        from ..sampler import Block, BlockingPlan

        return BlockingPlan([Block("tau2,rho", ("tau2", "rho")), Block("mu", ("mu",)),
                             Block("phi", ("phi",))], p1=1)


def sv_model(params: SvParams | None = None) -> SVModel:
    """The SV model; parameters are passed per call, ``params`` is only validated."""
    if params is not None and not isinstance(params, SvParams):
        SvParams.from_array(params)
    return SVModel()
