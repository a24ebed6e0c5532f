"""Factor stochastic volatility model.

    y_t = beta f_t + V_t^{1/2} eps_t,   V_t = diag(exp(h_{1t}), ..., exp(h_{St}))
    f_t ~ N(0, D_t),                    D_t = diag(exp(lambda_{1t}), ..., exp(lambda_{Kt}))

Each ``h_s`` is an SV-with-leverage process driven by the residual
``y_s - beta_s f``; each ``lambda_k`` is an SV process without leverage and
with level fixed at zero, observed through ``f_k``.  Given ``(y, beta, f)`` the
``S + K`` volatility series are conditionally independent, so each one is
handled by its own univariate sampler state (inputs, trajectory, adapter and
sub-stream ``eps-s`` / ``fac-k``).  ``beta`` is unrestricted while sampling
and identified afterwards by :func:`postprocess_identification`.
"""

from __future__ import annotations

import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import permutations

import numpy as np

from ..backward import backward_simulate
from ..errors import PmcmcError, SamplerError, SingularModelError
from ..rng import Stream, draw_inputs, new_stream
from ..sampler import (
    Block,
    ChainState,
    DrawMatrix,
    SeriesState,
    pg_step,
    pmmh_step,
    refresh_inputs,
    refresh_trajectory,
    sweep_stream,
)
from ..smc import run_smc
from ..ssm import snap
from .sv import TRANSFORMS, SVModel, SvParams, log_prior_phi, log_prior_tau2, sv_pg_update_phi

B0 = 1e5
_LOG_2PI = math.log(2.0 * math.pi)


# --- Gibbs blocks --------------------------------------------------------------

def _chol_spd(P, what):
    """Batched Cholesky with trace-scaled jitter on failure."""
    try:
        return np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        k = P.shape[-1]
        tr = np.trace(P, axis1=-2, axis2=-1)[..., None, None]
        try:
            return np.linalg.cholesky(P + 1e-10 * tr * np.eye(k))
        except np.linalg.LinAlgError as e:
            raise SingularModelError(f"precision matrix for {what} is not positive definite") from e


def _gaussian_draw(P, rhs, z, what):
    """Draw N(P^{-1} rhs, P^{-1}) for a batch of precision matrices ``P``."""
    L = _chol_spd(P, what)
    mean = np.linalg.solve(P, rhs[..., None])[..., 0]
    Lt = np.swapaxes(L, -1, -2)
    return mean + np.linalg.solve(Lt, z[..., None])[..., 0]


def beta_row_moments(f, y, h):
    """Per-row posterior mean ``a_s`` (S, K) and covariance ``b_s`` (S, K, K)."""
    f = np.atleast_2d(f)
    w = np.exp(-np.asarray(h))
    P = np.einsum("kt,st,lt->skl", f, w, f) + np.eye(f.shape[0])
    rhs = np.einsum("kt,st->sk", f, w * y)
    b = np.linalg.inv(P)
    return np.einsum("skl,sl->sk", b, rhs), b


def sample_beta_rows(f, y, h, stream: Stream) -> np.ndarray:
    """Draw every row of beta from its Gaussian conditional (unit-variance prior)."""
    f = np.atleast_2d(f)
    y = np.atleast_2d(y)
    S, K = y.shape[0], f.shape[0]
    w = np.exp(-np.atleast_2d(h))
    P = np.einsum("kt,st,lt->skl", f, w, f) + np.eye(K)
    rhs = np.einsum("kt,st->sk", f, w * y)
    z = stream.normal(S * K).reshape(S, K)
    return _gaussian_draw(P, rhs, z, "beta rows")


def factor_moments(beta, y, h, lam):
    """Per-time posterior mean ``a_t`` (T, K) and covariance ``b_t`` (T, K, K)."""
    w = np.exp(-np.asarray(h))
    P = np.einsum("sk,st,sl->tkl", beta, w, beta)
    K = beta.shape[1]
    P[:, np.arange(K), np.arange(K)] += np.exp(-np.asarray(lam)).T
    rhs = np.einsum("sk,st->tk", beta, w * y)
    b = np.linalg.inv(P)
    return np.einsum("tkl,tl->tk", b, rhs), b


def sample_factors(beta, y, h, lam, stream: Stream) -> np.ndarray:
    """Draw all factors ``f`` (K, T) independently over ``t``."""
    beta = np.atleast_2d(beta)
    y = np.atleast_2d(y)
    lam = np.atleast_2d(lam)
    K, T = lam.shape
    w = np.exp(-np.atleast_2d(h))
    P = np.einsum("sk,st,sl->tkl", beta, w, beta)
    P[:, np.arange(K), np.arange(K)] += np.exp(-lam).T
    rhs = np.einsum("sk,st->tk", beta, w * y)
    z = stream.normal(T * K).reshape(T, K)
    return _gaussian_draw(P, rhs, z, "factors").T.copy()


def _log_prior_mu(mu):
    # implied by beta_kk ~ N(0, 1) and mu = log beta_kk^2
    return mu / 2.0 - math.exp(mu) / 2.0


def _lnorm(x, mean, var):
    return -0.5 * (_LOG_2PI + math.log(var) + (x - mean) ** 2 / var)


def interweave_proposal(lam_star, phi, tau2, b0=B0):
    """Mean ``A`` and variance ``B`` of the Gaussian proposal for the factor level."""
    T = len(lam_star)
    denom = T - 1 + 1.0 / b0
    A = (np.sum(lam_star[1:T - 1]) + (lam_star[T - 1] - phi * lam_star[0]) / (1.0 - phi)) / denom
    B = tau2 / (1.0 - phi) ** 2 / denom
    return float(A), float(B)


def interweave_log_ratio(mu_new, mu_old, lam1_star, beta_star_other, phi, tau2, b0=B0) -> float:
    """log R for moving the factor level from ``mu_old`` to ``mu_new``."""
    var1 = tau2 / (1.0 - phi**2)
    aux = b0 * tau2 / (1.0 - phi) ** 2

    def part(mu):
        lb = float(np.sum(_lnorm_vec(beta_star_other, math.exp(-mu))))
        return _log_prior_mu(mu) + _lnorm(lam1_star, mu, var1) + lb

    return part(mu_new) - part(mu_old) + _lnorm(mu_old, 0.0, aux) - _lnorm(mu_new, 0.0, aux)


def _lnorm_vec(x, var):
    x = np.asarray(x, dtype=float)
    return -0.5 * (_LOG_2PI + math.log(var) + x * x / var)


def deep_interweave(beta, f, lam, factor_params, stream: Stream, b0=B0):
    """Re-draw the scale of each factor through its level in the ``beta_kk = 1`` parametrisation.

    Args:
        beta: (S, K) loadings.
        f: (K, T) factors.
        lam: (K, T) factor log-volatilities.
        factor_params: (K, 2) rows of ``(phi, tau2)``.

    Returns:
        ``(beta, f, lam, accepted)``; the inputs are not modified.
    """
    beta = np.array(beta, dtype=float)
    f = np.array(f, dtype=float)
    lam = np.array(lam, dtype=float)
    K = f.shape[0]
    accepted = np.zeros(K, dtype=bool)
    for k in range(K):
        z = stream.normal(1)[0]
        u = stream.uniform(1)[0]
        bkk = beta[k, k]
        if bkk == 0.0:
            warnings.warn(f"beta[{k},{k}] is zero; interweaving skipped for factor {k}", RuntimeWarning)
            continue
        phi, tau2 = float(factor_params[k][0]), float(factor_params[k][1])
        beta_star = beta[:, k] / bkk
        lam_star = lam[k] + 2.0 * math.log(abs(bkk))
        mu_old = math.log(bkk * bkk)
        A, B = interweave_proposal(lam_star, phi, tau2, b0)
        mu_new = A + math.sqrt(B) * z
        other = np.delete(beta_star, k)
        log_r = interweave_log_ratio(mu_new, mu_old, lam_star[0], other, phi, tau2, b0)
        if math.log(u) < log_r:
            bnew = math.copysign(math.exp(mu_new / 2.0), bkk)
            # one rounded ratio for both sides, so beta_k f_k only picks up the
            # rounding of the two scalings
            c = bnew / bkk
            beta[:, k] = beta[:, k] * c
            f[k] = f[k] / c
            # stays on the state grid so the path keeps an exact preimage
            lam[k] = snap(lam[k] - 2.0 * math.log(abs(c)))
            accepted[k] = True
    return beta, f, lam, accepted


def sample_phi_fk(lam_path, phi, tau2, stream: Stream):
    """Truncated-normal MH update of a factor persistence; returns ``(phi, accepted)``."""
    lam_path = np.asarray(lam_path, dtype=float)
    return sv_pg_update_phi(lam_path, SvParams(0.0, phi, tau2, 0.0), np.zeros_like(lam_path), stream)


# --- identification -----------------------------------------------------------------

def select_pivots(beta) -> np.ndarray:
    """Pivot row of each column: repeatedly take the largest remaining |beta_sk|.

    Equivalent to the lexicographically largest sorted vector of pivot
    magnitudes over all injective row choices, so it does not depend on the
    column order.
    """
    a = np.abs(np.asarray(beta, dtype=float))
    S, K = a.shape
    piv = np.full(K, -1, dtype=np.int64)
    rows = np.ones(S, dtype=bool)
    cols = np.ones(K, dtype=bool)
    for _ in range(K):
        masked = np.where(rows[:, None] & cols[None, :], a, -np.inf)
        s, k = np.unravel_index(int(np.argmax(masked)), a.shape)
        piv[k] = s
        rows[s] = False
        cols[k] = False
    return piv


def select_pivots_bruteforce(beta) -> np.ndarray:
    """Exhaustive version of :func:`select_pivots` for small problems."""
    a = np.abs(np.asarray(beta, dtype=float))
    S, K = a.shape
    best, best_key = None, None
    for rows in permutations(range(S), K):
        key = sorted((a[r, k] for k, r in enumerate(rows)), reverse=True)
        if best_key is None or key > best_key:
            best, best_key = rows, key
    return np.array(best, dtype=np.int64)


def postprocess_identification(beta_draws):
    """Canonical column order and signs for each draw.

    Columns are ordered by their pivot row and each column is multiplied by
    the sign of its pivot.  Returns ``(identified, perm, sign)`` where
    ``identified[i] = beta_draws[i][:, perm[i]] * sign[i]``; apply the same
    ``perm`` to any per-factor quantity.
    """
    B = np.asarray(beta_draws, dtype=float)
    single = B.ndim == 2
    if single:
        B = B[None]
    n, S, K = B.shape
    out = np.empty_like(B)
    perm = np.empty((n, K), dtype=np.int64)
    sign = np.empty((n, K))
    for i in range(n):
        piv = select_pivots(B[i])
        order = np.argsort(piv, kind="stable")
        perm[i] = order
        sg = np.sign(B[i][piv[order], order])
        sg[sg == 0] = 1.0
        sign[i] = sg
        out[i] = B[i][:, order] * sg
    if single:
        return out[0], perm[0], sign[0]
    return out, perm, sign


# --- orchestration -------------------------------------------------------------------

class FactorSeriesModel(SVModel):
    """Factor log-volatility: SV with zero level and no leverage; parameters (phi, tau2)."""

    param_names = ("phi", "tau2")

    def theta(self, vec):
        return SvParams(0.0, float(vec[0]), float(vec[1]), 0.0)

    def initial_vector(self):
        return np.array([0.95, 0.05])

    def in_support(self, vec):
        return abs(vec[0]) < 1.0 and vec[1] > 0.0

    def log_prior(self, vec):
        if not self.in_support(vec):
            return -np.inf
        return log_prior_phi(vec[0]) + log_prior_tau2(vec[1])

    def transforms(self):
        return {"phi": TRANSFORMS["phi"], "tau2": TRANSFORMS["tau2"]}

    def pg_update(self, names, vec, path, y, stream):
        if tuple(names) == ("phi",):
            out = vec.copy()
            out[0], acc = sample_phi_fk(path, vec[0], vec[1], stream)
            return out, acc
        return None


@dataclass
class FactorConfig:
    sweeps: int = 6000
    burn_in: int = 1000
    seed: int = 0
    pmmh: bool = True
    interweave: bool = True
    fixed_beta: np.ndarray | None = None
    engine: str = "auto"
    threads: int = 1
    record_states: bool = False
    state_thin: int = 10


@dataclass
class FactorState:
    beta: np.ndarray
    f: np.ndarray
    eps: list
    fac: list
    sweep_index: int = 0
    interweave_accepts: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def h(self) -> np.ndarray:
        return np.array([c.trajectory.x_path for c in self.eps])

    @property
    def lam(self) -> np.ndarray:
        return np.array([c.trajectory.x_path for c in self.fac])


@dataclass
class FactorDraws:
    draws: DrawMatrix
    beta: np.ndarray
    fac_names: list


_EPS_MODEL = SVModel()
_FAC_MODEL = FactorSeriesModel()
_EPS_PMMH = Block("tau2,rho", ("tau2", "rho"))
_FAC_PMMH = Block("tau2", ("tau2",))


def _series_init(model, vec, obs, N, stream, engine):
    inputs = draw_inputs(stream.substream("inputs"), len(obs), N)
    th = model.theta(vec)
    run = run_smc(model, th, obs, N, inputs, engine=engine)
    traj = backward_simulate(run.system, model, th, obs, stream.substream("bsim"), engine=engine)
    return ChainState(np.array(vec, dtype=float), [SeriesState(inputs, traj, run.log_z_hat, run.system)])


def init_factor_state(y, K, N, seed, fixed_beta=None, engine="auto") -> FactorState:
    """Principal-component start for (beta, f); one SMC pass per volatility series."""
    y = np.asarray(y, dtype=float)
    S, T = y.shape
    root = new_stream(seed).substream("init")
    if fixed_beta is not None:
        beta = np.array(fixed_beta, dtype=float).reshape(S, K)
        f = np.zeros((K, T))
    else:
        U, sv, Vt = np.linalg.svd(y, full_matrices=False)
        beta = U[:, :K] * sv[:K] / math.sqrt(T)
        f = Vt[:K] * math.sqrt(T)
    resid = y - beta @ f
    eps = []
    for s in range(S):
        v = np.array([math.log(max(np.var(resid[s]), 1e-12)), 0.95, 0.05, 0.0])
        eps.append(_series_init(_EPS_MODEL, v, resid[s], N, root.substream(f"eps-{s}"), engine))
    fac = [_series_init(_FAC_MODEL, _FAC_MODEL.initial_vector(), f[k], N,
                        root.substream(f"fac-{k}"), engine) for k in range(K)]
    return FactorState(beta, f, eps, fac, 0, np.zeros(K))


def _map(fn, items, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(fn, items))
    return [fn(i) for i in items]


def factor_sweep(state: FactorState, y, N, cfg: FactorConfig) -> FactorState:
    """Parts 1-5 for every series plus the coupled Gibbs block in part 3."""
    k_sw = state.sweep_index
    root = sweep_stream(cfg.seed, k_sw)
    S, K = state.beta.shape
    resid = y - state.beta @ state.f
    jobs = [("eps", s, state.eps[s], resid[s]) for s in range(S)] + \
           [("fac", k, state.fac[k], state.f[k]) for k in range(K)]
    part = 1

    def label(kind, i):
        return f"{kind}-{i}"

    def part12(job):
        kind, i, cs, obs = job
        model = _EPS_MODEL if kind == "eps" else _FAC_MODEL
        block = _EPS_PMMH if kind == "eps" else _FAC_PMMH
        st = root.substream(label(kind, i))
        if cfg.pmmh:
            pmmh_step(cs, block, model, obs, N, st.substream("pmmh"), cfg.engine)
        refresh_trajectory(cs, model, obs, N, st.substream("bsim"), cfg.engine)

    try:
        _map(part12, jobs, cfg.threads)
        part = 3
        h, lam = state.h, state.lam
        if cfg.fixed_beta is None:
            state.beta = sample_beta_rows(state.f, y, h, root.substream("beta"))
            if cfg.interweave:
                fp = np.array([c.theta for c in state.fac])
                state.beta, state.f, lam, acc = deep_interweave(state.beta, state.f, lam, fp,
                                                                root.substream("interweave"))
                state.interweave_accepts = state.interweave_accepts + acc
                for k in range(K):
                    state.fac[k].series[0].trajectory.x_path = lam[k].copy()
        state.f = sample_factors(state.beta, y, h, lam, root.substream("factors"))
        for k in range(K):
            cs = state.fac[k]
            st = root.substream(label("fac", k))
            pg_step(cs, Block("phi", ("phi",)), _FAC_MODEL, state.f[k], st.substream("pg-phi"))
            if not cfg.pmmh:
                pg_step(cs, _FAC_PMMH, _FAC_MODEL, state.f[k], st.substream("pg-tau2"))
        resid = y - state.beta @ state.f
        for s in range(S):
            cs = state.eps[s]
            st = root.substream(label("eps", s))
            pg_step(cs, Block("phi", ("phi",)), _EPS_MODEL, resid[s], st.substream("pg-phi"))
            pg_step(cs, Block("mu", ("mu",)), _EPS_MODEL, resid[s], st.substream("pg-mu"))
            if not cfg.pmmh:
                pg_step(cs, _EPS_PMMH, _EPS_MODEL, resid[s], st.substream("pg-tau2,rho"))
        part = 4
        jobs = [("eps", s, state.eps[s], resid[s]) for s in range(S)] + \
               [("fac", k, state.fac[k], state.f[k]) for k in range(K)]

        def part4(job):
            kind, i, cs, obs = job
            model = _EPS_MODEL if kind == "eps" else _FAC_MODEL
            refresh_inputs(cs, model, obs, N, root.substream(label(kind, i)).substream("ccsmc"), cfg.engine)

        _map(part4, jobs, cfg.threads)
    except (PmcmcError, ValueError) as e:
        raise SamplerError(k_sw, part, e) from e
    state.sweep_index = k_sw + 1
    return state


def factor_param_names(S, K) -> list:
    """Draw-file columns: PMMH parameters first, then PG parameters, then loadings."""
    names = [f"tau2_f{k}" for k in range(K)]
    for s in range(S):
        names += [f"tau2_eps{s}", f"rho_eps{s}"]
    names += [f"mu_eps{s}" for s in range(S)] + [f"phi_eps{s}" for s in range(S)]
    names += [f"phi_f{k}" for k in range(K)]
    names += [f"beta_{s}_{k}" for s in range(S) for k in range(K)]
    return names


def _row(state: FactorState) -> np.ndarray:
    S, K = state.beta.shape
    r = [c.theta[1] for c in state.fac]
    for c in state.eps:
        r += [c.theta[2], c.theta[3]]
    r += [c.theta[0] for c in state.eps] + [c.theta[1] for c in state.eps]
    r += [c.theta[0] for c in state.fac]
    return np.concatenate([np.array(r), state.beta.ravel()])


def run_factor_chain(y, K, N, config: FactorConfig | None = None, progress=None) -> FactorDraws:
    """Run the factor-model sampler on ``y`` (S, T) and return post-burn-in draws."""
    cfg = config or FactorConfig()
    y = np.asarray(y, dtype=float)
    if y.ndim != 2:
        raise ValueError("y must be an (S, T) matrix")
    S, T = y.shape
    if not S >= K >= 1:
        raise ValueError(f"need S >= K >= 1, got S={S}, K={K}")
    if not cfg.sweeps > cfg.burn_in >= 0:
        raise ValueError("need sweeps > burn_in >= 0")

    state = init_factor_state(y, K, N, cfg.seed, cfg.fixed_beta, cfg.engine)
    names = factor_param_names(S, K)
    n_keep = cfg.sweeps - cfg.burn_in
    draws = np.empty((n_keep, len(names)))
    times = np.arange(0, T, max(cfg.state_thin, 1))
    states = np.empty((n_keep, S + K, len(times))) if cfg.record_states else None
    elapsed = 0.0
    for k in range(cfg.sweeps):
        t0 = time.perf_counter()
        factor_sweep(state, y, N, cfg)
        dt = time.perf_counter() - t0
        if k >= cfg.burn_in:
            elapsed += dt
            draws[k - cfg.burn_in] = _row(state)
            if states is not None:
                states[k - cfg.burn_in] = np.vstack([state.h, state.lam])[:, times]
        if progress is not None:
            progress(k, state)
    acc = {}
    for lbl, group in (("eps", state.eps), ("fac", state.fac)):
        for i, cs in enumerate(group):
            for b, (a, n) in cs.accepts.items():
                acc[f"{lbl}{i}:{b}"] = a / n
    for k in range(K):
        acc[f"interweave{k}"] = float(state.interweave_accepts[k]) / cfg.sweeps
    dm = DrawMatrix(names, np.arange(cfg.burn_in, cfg.sweeps), draws,
                    times if states is not None else np.empty(0, dtype=np.int64),
                    None if states is None else states.reshape(n_keep, -1),
                    elapsed / n_keep, acc)
    beta = draws[:, -S * K:].reshape(n_keep, S, K)
    return FactorDraws(dm, beta, [f"f{k}" for k in range(K)])
