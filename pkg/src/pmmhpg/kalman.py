"""Kalman filter and Rauch-Tung-Striebel smoother for the scalar AR(1)-plus-noise model."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import SingularModelError


@dataclass
class KalmanResult:
    log_likelihood: float
    filtered_mean: np.ndarray
    filtered_var: np.ndarray
    smoothed_mean: np.ndarray
    smoothed_var: np.ndarray


def kalman_oracle(params, y) -> KalmanResult:
    """Exact log-likelihood and smoothing moments.

    Args:
        params: an object with ``phi``, ``sigma``, ``obs_sd`` and ``initial_sd``.
        y: observations.

    Raises:
        SingularModelError: an innovation variance is not positive.
    """
    y = np.asarray(y, dtype=np.float64)
    T = len(y)
    phi, q, r = params.phi, params.sigma**2, params.obs_sd**2
    mf = np.empty(T)
    pf = np.empty(T)
    mp = np.empty(T)
    pp = np.empty(T)
    ll = 0.0
    m, P = 0.0, params.initial_sd**2
    for t in range(T):
        if t > 0:
            m, P = phi * mf[t - 1], phi * phi * pf[t - 1] + q
        mp[t], pp[t] = m, P
        S = P + r
        if not S > 0.0:
            raise SingularModelError("innovation variance is not positive", t)
        e = y[t] - m
        ll += -0.5 * (math.log(2.0 * math.pi * S) + e * e / S)
        K = P / S
        mf[t] = m + K * e
        pf[t] = (1.0 - K) * P
    ms = mf.copy()
    ps = pf.copy()
    for t in range(T - 2, -1, -1):
        if pp[t + 1] > 0.0:
            G = pf[t] * phi / pp[t + 1]
        else:
            G = 0.0
        ms[t] = mf[t] + G * (ms[t + 1] - mp[t + 1])
        ps[t] = pf[t] + G * G * (ps[t + 1] - pp[t + 1])
    return KalmanResult(ll, mf, pf, ms, ps)
