"""Forward simulation of synthetic data sets."""

from __future__ import annotations

import math

import numpy as np

from .models.sv import SvParams
from .rng import Stream, new_stream


def simulate_sv(params: SvParams, T: int, stream: Stream):
    """Returns ``(y, x)`` for the SV-with-leverage model."""
    e = stream.normal(T)
    eta = stream.normal(T)
    x = np.empty(T)
    x[0] = params.mu + math.sqrt(params.tau2 / (1.0 - params.phi**2)) * eta[0]
    sd = params.tau * math.sqrt(1.0 - params.rho**2)
    for t in range(1, T):
        x[t] = (params.mu + params.phi * (x[t - 1] - params.mu)
                + params.rho * params.tau * e[t - 1] + sd * eta[t])
    return np.exp(0.5 * x) * e, x


def simulate_factor_sv(beta, eps_params, fac_params, T: int, stream: Stream):
    """Returns ``(y, f, h, lam)`` with shapes (S,T), (K,T), (S,T), (K,T).

    ``eps_params`` is a list of :class:`SvParams`; ``fac_params`` a list of
    ``(phi, tau2)`` pairs (the factor level is zero and there is no leverage).
    """
    beta = np.asarray(beta, dtype=float)
    S, K = beta.shape
    lam = np.empty((K, T))
    f = np.empty((K, T))
    for k, (phi, tau2) in enumerate(fac_params):
        zk, lk = simulate_sv(SvParams(0.0, phi, tau2, 0.0), T, stream.substream(f"fac-{k}"))
        lam[k], f[k] = lk, zk
    h = np.empty((S, T))
    e = np.empty((S, T))
    for s, p in enumerate(eps_params):
        e[s], h[s] = simulate_sv(p, T, stream.substream(f"eps-{s}"))
    return beta @ f + e, f, h, lam


def simulate(model: str, params: dict, T: int, seed: int, S: int = 1, K: int = 1):
    """Dispatch on the model name; returns a dict of arrays."""
    root = new_stream(seed).substream("simulate")
    if model == "sv-leverage":
        p = SvParams(**params)
        y, x = simulate_sv(p, T, root)
        return {"y": y[:, None], "states": x[:, None]}
    if model == "factor-sv":
        beta = np.asarray(params["beta"], dtype=float).reshape(S, K)
        eps = [SvParams(**e) for e in params["eps"]]
        fac = [tuple(v) for v in params["fac"]]
        y, f, h, lam = simulate_factor_sv(beta, eps, fac, T, root)
        return {"y": y.T, "states": np.vstack([h, lam, f]).T}
    if model == "linear-gaussian":
        from .models.linear_gaussian import LgParams, LinearGaussianModel

        m = LinearGaussianModel(LgParams(**params))
        x, y = m.simulate(T, root)
        return {"y": y[:, None], "states": x[:, None]}
    raise ValueError(f"unknown model {model!r}")
