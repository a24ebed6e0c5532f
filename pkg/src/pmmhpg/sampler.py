"""The four-part PMMH + PG sweep.

Each sweep runs, in order:

1. PMMH on the first ``p1`` parameter blocks, re-using the current random
   inputs so that the two likelihood estimates in each ratio are correlated;
2. backward simulation of a trajectory from the cached particle system;
3. particle-Gibbs updates of the remaining blocks given that trajectory;
4. a constrained conditional SMC pass that refreshes the random inputs while
   keeping the trajectory.

``p1 = 0`` is particle Gibbs with backward simulation; ``p1 = p`` is
correlated PMMH on everything.  Every random draw comes from a sub-stream
keyed by the sweep index and the part, so a run is reproducible from its seed
and can be resumed from a checkpoint without changing the output.
"""

from __future__ import annotations

import logging
import math
import pickle
import time
from dataclasses import dataclass, field

import numpy as np

from .backward import backward_simulate
from .ccsmc import run_ccsmc
from .errors import DegenerateWeightsError, PmcmcError, SamplerError
from .rng import RandomInputs, Stream, draw_inputs, new_stream
from .smc import run_smc
from .ssm import ParticleSystem, Trajectory

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class Block:
    name: str
    params: tuple

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(self.params))


@dataclass
class BlockingPlan:
    """Ordered parameter blocks; the first ``p1`` are PMMH blocks, the rest PG."""

    blocks: list
    p1: int

    def validate(self, names) -> "BlockingPlan":
        if not 0 <= self.p1 <= len(self.blocks):
            raise ValueError(f"p1={self.p1} outside [0, {len(self.blocks)}]")
        seen = [p for b in self.blocks for p in b.params]
        if len(seen) != len(set(seen)):
            raise ValueError(f"blocks overlap: {seen}")
        if set(seen) != set(names):
            raise ValueError(f"blocks {sorted(seen)} do not partition parameters {sorted(names)}")
        return self

    @property
    def pmmh_blocks(self):
        return self.blocks[: self.p1]

    @property
    def pg_blocks(self):
        return self.blocks[self.p1:]

    @property
    def order(self) -> list:
        """Parameter names in blocking order (the draw-file column order)."""
        return [p for b in self.blocks for p in b.params]

    @classmethod
    def from_lists(cls, pmmh, pg) -> "BlockingPlan":
        blocks = [Block(",".join(b), tuple(b)) for b in list(pmmh) + list(pg)]
        return cls(blocks, len(pmmh))

    def with_p1(self, p1: int) -> "BlockingPlan":
        return BlockingPlan(list(self.blocks), p1)


class ProposalAdapter:
    """Adaptive Gaussian random walk on the unconstrained scale of one block.

    During warm-up the step is isotropic with standard deviation
    ``0.1 / sqrt(dim)``.  Afterwards the covariance is
    ``exp(2 * log_scale) * (C + jitter * I)`` with ``C`` the running covariance
    of the chain (Welford), and ``log_scale`` follows a Robbins-Monro
    recursion with gain ``n ** -0.6`` towards the target acceptance rate.
    """

    def __init__(self, dim, warmup=100, target=0.25, jitter=1e-6, decay=0.6):
        self.dim = dim
        self.warmup = warmup
        self.target = target
        self.jitter = jitter
        self.decay = decay
        self.n = 0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros((dim, dim))
        self.log_scale = math.log(2.38 / math.sqrt(dim)) if dim else 0.0
        self.accepted = 0
        self.proposed = 0

    @property
    def warm(self) -> bool:
        return self.n >= self.warmup

    def covariance(self) -> np.ndarray:
        if not self.warm:
            return np.eye(self.dim) * (0.1 / math.sqrt(self.dim)) ** 2
        C = self.m2 / max(self.n - 1, 1)
        C = 0.5 * (C + C.T) + self.jitter * np.eye(self.dim)
        return math.exp(2.0 * self.log_scale) * C

    def propose(self, u, stream: Stream):
        """Returns ``(u_star, log q(u | u*) - log q(u* | u))``; the walk is symmetric."""
        z = stream.normal(self.dim)
        cov = self.covariance()
        try:
            L = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            L = np.linalg.cholesky(cov + 1e-8 * np.trace(cov) * np.eye(self.dim))
        return u + L @ z, 0.0

    def update(self, u, accepted: bool):
        """Record the post-step value and the acceptance outcome."""
        self.proposed += 1
        self.accepted += int(accepted)
        self.n += 1
        delta = u - self.mean
        self.mean = self.mean + delta / self.n
        self.m2 = self.m2 + np.outer(delta, u - self.mean)
        if self.warm:
            gain = self.n ** (-self.decay)
            self.log_scale += gain * (float(accepted) - self.target)

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.proposed if self.proposed else float("nan")


def adaptive_rw_propose(adapter: ProposalAdapter, u_block, stream: Stream):
    return adapter.propose(np.asarray(u_block, dtype=float), stream)


@dataclass
class SeriesState:
    """Per-series random inputs, trajectory, cached system and log Z-hat."""

    inputs: RandomInputs
    trajectory: Trajectory
    log_z_hat: float
    system: ParticleSystem | None = None


@dataclass
class ChainState:
    theta: np.ndarray
    series: list
    sweep_index: int = 0
    adapters: dict = field(default_factory=dict)
    accepts: dict = field(default_factory=dict)
    last_pmmh: dict | None = None

    @property
    def inputs(self) -> RandomInputs:
        return self.series[0].inputs

    @property
    def trajectory(self) -> Trajectory:
        return self.series[0].trajectory

    @property
    def log_z_hat(self) -> float:
        return self.series[0].log_z_hat


@dataclass
class DrawMatrix:
    """Post-burn-in draws in blocking order, plus optional thinned states."""

    names: list
    sweeps: np.ndarray
    theta: np.ndarray
    state_times: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    states: np.ndarray | None = None
    seconds_per_sweep: float = float("nan")
    acceptance: dict = field(default_factory=dict)

    def column(self, name) -> np.ndarray:
        return self.theta[:, self.names.index(name)]


# --- helpers shared with the factor model --------------------------------------

def _block_index(model, block: Block) -> np.ndarray:
    names = list(model.param_names)
    return np.array([names.index(p) for p in block.params], dtype=np.int64)


def _to_u(model, vec, idx) -> np.ndarray:
    tr = model.transforms()
    names = model.param_names
    return np.array([tr[names[i]][0](float(vec[i])) for i in idx])


def _from_u(model, vec, idx, u) -> np.ndarray:
    tr = model.transforms()
    names = model.param_names
    out = np.array(vec, dtype=float)
    for i, val in zip(idx, u):
        out[i] = tr[names[i]][1](float(val))
    return out


def _log_jac(model, idx, u) -> float:
    tr = model.transforms()
    names = model.param_names
    return float(sum(tr[names[i]][2](float(val)) for i, val in zip(idx, u)))


def mh_accept(stream: Stream, log_alpha: float) -> bool:
    """Accept with probability ``min(1, exp(log_alpha))``; always draws one uniform."""
    u = stream.uniform(1)[0]
    return bool(math.log(u) < log_alpha) if not math.isnan(log_alpha) else False


def propose_block(model, state_adapters, key, block, vec, stream):
    """Return ``(vec_star, log_q_ratio, log_jac_star - log_jac, adapter_info)`` for one block."""
    idx = _block_index(model, block)
    custom = getattr(model, "propose", None)
    if custom is not None:
        out = custom(block.params, vec, stream)
        if out is not None:
            return out[0], out[1], 0.0, None
    adapter = state_adapters.setdefault(key, ProposalAdapter(len(idx)))
    u = _to_u(model, vec, idx)
    u_star, lq = adapter.propose(u, stream)
    vec_star = _from_u(model, vec, idx, u_star)
    dj = _log_jac(model, idx, u_star) - _log_jac(model, idx, u)
    return vec_star, lq, dj, (adapter, idx)


def _adapt(model, info, vec):
    if info is not None:
        adapter, idx = info
        return adapter, _to_u(model, vec, idx)
    return None, None


def _count(state, key, accepted):
    a, n = state.accepts.get(key, (0, 0))
    state.accepts[key] = (a + int(accepted), n + 1)


# --- the four parts -------------------------------------------------------------

def pmmh_step(state: ChainState, block: Block, model, y, N, stream: Stream, engine="auto"):
    """Correlated PMMH update of one block; returns ``(state, accepted)``.

    The proposal is re-filtered with the *current* random inputs.  Proposals
    outside the prior support are rejected without running the filter.
    """
    vec = state.theta
    ser = state.series[0]
    vec_star, lq, dj, info = propose_block(model, state.adapters, "pmmh:" + block.name, block, vec, stream)
    lp = model.log_prior(vec)
    lp_star = model.log_prior(vec_star) if model.in_support(vec_star) else -np.inf
    run = None
    if np.isfinite(lp_star):
        try:
            run = run_smc(model, model.theta(vec_star), y, N, ser.inputs, engine=engine)
            ll_star = run.log_z_hat
        except DegenerateWeightsError:
            # Z-hat = 0 under theta*: a valid estimate, so reject
            ll_star = -np.inf
    else:
        ll_star = -np.inf
    log_alpha = (ll_star - ser.log_z_hat) + (lp_star - lp) + dj + lq if np.isfinite(ll_star + lp_star) else -np.inf
    accepted = mh_accept(stream, log_alpha)
    state.last_pmmh = dict(block=block.name, theta=vec.copy(), theta_star=vec_star, ll=ser.log_z_hat,
                           ll_star=ll_star, lp=lp, lp_star=lp_star, log_jac_diff=dj, log_q=lq,
                           log_alpha=log_alpha, accepted=accepted)
    if accepted:
        state.theta = vec_star
        ser.log_z_hat = run.log_z_hat
        ser.system = run.system
    adapter, u = _adapt(model, info, state.theta)
    if adapter is not None:
        adapter.update(u, accepted)
    _count(state, block.name, accepted)
    return state, accepted


def refresh_trajectory(state: ChainState, model, y, N, stream: Stream, engine="auto") -> ChainState:
    """Backward-simulate a trajectory from the system implied by the current inputs."""
    ser = state.series[0]
    th = model.theta(state.theta)
    if ser.system is None:
        run = run_smc(model, th, y, N, ser.inputs, engine=engine)
        ser.system, ser.log_z_hat = run.system, run.log_z_hat
    ser.trajectory = backward_simulate(ser.system, model, th, y, stream, engine=engine)
    return state


def pg_step(state: ChainState, block: Block, model, y, stream: Stream):
    """Update one block given the trajectory: exact model update or generic RW-MH."""
    ser = state.series[0]
    path = ser.trajectory.x_path
    vec = state.theta
    exact = model.pg_update(block.params, vec, path, y, stream)
    if exact is not None:
        state.theta, accepted = exact
        _count(state, block.name, accepted)
        return state, accepted
    vec_star, lq, dj, info = propose_block(model, state.adapters, "pg:" + block.name, block, vec, stream)
    if model.in_support(vec_star):
        lt = model.complete_data_loglik(model.theta(vec), path, y) + model.log_prior(vec)
        lt_star = model.complete_data_loglik(model.theta(vec_star), path, y) + model.log_prior(vec_star)
        log_alpha = lt_star - lt + dj + lq
    else:
        log_alpha = -np.inf
    accepted = mh_accept(stream, log_alpha)
    if accepted:
        state.theta = vec_star
    adapter, u = _adapt(model, info, state.theta)
    if adapter is not None:
        adapter.update(u, accepted)
    _count(state, block.name, accepted)
    return state, accepted


def refresh_inputs(state: ChainState, model, y, N, stream: Stream, engine="auto") -> ChainState:
    """Regenerate inputs around the current trajectory by constrained conditional SMC."""
    ser = state.series[0]
    run = run_ccsmc(model, model.theta(state.theta), y, N, ser.trajectory, stream, engine=engine)
    ser.inputs, ser.system, ser.log_z_hat = run.inputs, run.system, run.log_z_hat
    return state


# --- driver -------------------------------------------------------------------------

def sweep_stream(seed: int, k: int) -> Stream:
    return new_stream(seed).substream("sweep").substream(str(k))


def init_chain(model, y, N, seed, theta=None, engine="auto") -> ChainState:
    """Initial parameters, fresh inputs, one SMC pass and one backward draw."""
    y = np.asarray(y, dtype=float)
    root = new_stream(seed).substream("init")
    vec = np.array(model.initial_vector() if theta is None else theta, dtype=float)
    inputs = draw_inputs(root.substream("inputs"), len(y), N, model.state_dim)
    th = model.theta(vec)
    run = run_smc(model, th, y, N, inputs, engine=engine)
    traj = backward_simulate(run.system, model, th, y, root.substream("bsim"), engine=engine)
    return ChainState(vec, [SeriesState(inputs, traj, run.log_z_hat, run.system)])


def sweep(state: ChainState, model, y, plan: BlockingPlan, N, seed, engine="auto") -> ChainState:
    """One pass of parts 1-4; errors are wrapped with the sweep index and part."""
    k = state.sweep_index
    s = sweep_stream(seed, k)
    part = 1
    try:
        for b in plan.pmmh_blocks:
            pmmh_step(state, b, model, y, N, s.substream("pmmh-" + b.name), engine)
        part = 2
        refresh_trajectory(state, model, y, N, s.substream("bsim"), engine)
        part = 3
        for b in plan.pg_blocks:
            pg_step(state, b, model, y, s.substream("pg-" + b.name))
        part = 4
        if N >= 2:
            refresh_inputs(state, model, y, N, s.substream("ccsmc"), engine)
        else:
            inputs = draw_inputs(s.substream("ccsmc"), len(y), N, model.state_dim)
            run = run_smc(model, model.theta(state.theta), y, N, inputs, engine=engine)
            state.series[0] = SeriesState(inputs, state.trajectory, run.log_z_hat, run.system)
    except (PmcmcError, ValueError, FloatingPointError) as e:
        raise SamplerError(k, part, e) from e
    state.sweep_index = k + 1
    return state


def state_times(T, thin) -> np.ndarray:
    return np.arange(0, T, max(int(thin), 1), dtype=np.int64)


def run_chain(model, y, plan: BlockingPlan | None, N, sweeps, burn_in, seed, *, theta0=None,
              record_states=False, state_thin=10, engine="auto", progress_every=0,
              checkpoint_path=None, checkpoint_every=0, resume=None) -> DrawMatrix:
    """Run the sampler and return the post-burn-in draws.

    Args:
        model: a model exposing the parameter-space interface (``param_names``,
            ``theta``, ``log_prior``, ``transforms``, ``pg_update``...).
        y: observations.
        plan: blocking plan; ``None`` uses ``model.default_plan()``.
        N: particles.
        sweeps, burn_in: total sweeps and how many of them to discard.
        seed: root seed; the run is a pure function of it.
        record_states: also store the trajectory at every ``state_thin``-th time.
        resume: a checkpoint dict from :func:`load_checkpoint`.
    """
    if not sweeps > burn_in >= 0:
        raise ValueError("need sweeps > burn_in >= 0")
    y = np.asarray(y, dtype=float)
    plan = (plan or model.default_plan()).validate(model.param_names)
    names = plan.order
    col = [list(model.param_names).index(n) for n in names]
    times = state_times(len(y), state_thin)
    n_keep = sweeps - burn_in
    draws = np.empty((n_keep, len(names)))
    states = np.empty((n_keep, len(times))) if record_states else None
    elapsed = 0.0
    if resume is not None:
        state = resume["state"]
        draws[: resume["kept"]] = resume["draws"][: resume["kept"]]
        if record_states and resume.get("states") is not None:
            states[: resume["kept"]] = resume["states"][: resume["kept"]]
        elapsed = resume.get("elapsed", 0.0)
    else:
        state = init_chain(model, y, N, seed, theta0, engine)
    while state.sweep_index < sweeps:
        k = state.sweep_index
        t0 = time.perf_counter()
        sweep(state, model, y, plan, N, seed, engine)
        dt = time.perf_counter() - t0
        if k >= burn_in:
            elapsed += dt
            r = k - burn_in
            draws[r] = state.theta[col]
            if record_states:
                states[r] = state.trajectory.x_path[times]
        if progress_every and (k + 1) % progress_every == 0:
            log.info("sweep %d/%d theta=%s", k + 1, sweeps, np.array2string(state.theta, precision=4))
        if checkpoint_path and checkpoint_every and (k + 1) % checkpoint_every == 0:
            save_checkpoint(checkpoint_path, state, draws, states, max(k + 1 - burn_in, 0), elapsed)
    acc = {b: a / n for b, (a, n) in state.accepts.items()}
    return DrawMatrix(names, np.arange(burn_in, sweeps), draws, times if record_states else
                      np.empty(0, dtype=np.int64), states, elapsed / n_keep, acc)


def save_checkpoint(path, state, draws=None, states=None, kept=0, elapsed=0.0):
    blob = dict(version=CHECKPOINT_VERSION, state=state, draws=draws, states=states, kept=kept,
                elapsed=elapsed)
    with open(path, "wb") as fh:
        pickle.dump(blob, fh, protocol=pickle.HIGHEST_PROTOCOL)


def load_checkpoint(path) -> dict:
    with open(path, "rb") as fh:
        blob = pickle.load(fh)
    if blob.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {blob.get('version')}")
    return blob
