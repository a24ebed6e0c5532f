import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import kstest, norm

from pmmhpg.diagnostics import iact
from pmmhpg.errors import PmcmcError, SamplerError
from pmmhpg.kalman import kalman_oracle
from pmmhpg.models.linear_gaussian import LgParams, LinearGaussianModel
from pmmhpg.models.sv import SVModel, SvParams, sv_log_jacobian, sv_log_prior, sv_transform
from pmmhpg.rng import new_stream
from pmmhpg.sampler import (
    Block,
    BlockingPlan,
    ProposalAdapter,
    adaptive_rw_propose,
    init_chain,
    load_checkpoint,
    pg_step,
    pmmh_step,
    refresh_inputs,
    refresh_trajectory,
    run_chain,
    save_checkpoint,
    sweep,
)
from pmmhpg.smc import run_smc

SV = SVModel()
TAU_RHO = Block("tau2,rho", ("tau2", "rho"))


class FixedProposalSV(SVModel):
    """SV model whose PMMH proposal is a preset vector."""

    def __init__(self, target):
        self.target = np.asarray(target, dtype=float)

    def propose(self, names, vec, stream):
        return self.target.copy(), 0.0


class FailingPG(SVModel):
    def pg_update(self, names, vec, path, y, stream):
        raise PmcmcError("boom")


def test_plan_validation():
    names = SV.param_names
    SV.default_plan().validate(names)
    with pytest.raises(ValueError):
        BlockingPlan([Block("a", ("mu", "phi")), Block("b", ("phi", "tau2", "rho"))], 1).validate(names)
    with pytest.raises(ValueError):
        BlockingPlan([Block("a", ("mu", "phi"))], 1).validate(names)
    with pytest.raises(ValueError):
        SV.default_plan().with_p1(4).validate(names)
    plan = BlockingPlan.from_lists([["tau2", "rho"]], [["mu"], ["phi"]])
    assert plan.p1 == 1 and plan.order == ["tau2", "rho", "mu", "phi"]
    assert [b.name for b in plan.pg_blocks] == ["mu", "phi"]


def test_identical_proposal_is_accepted(sv_data):
    y, _ = sv_data
    vec = np.array([-0.5, 0.97, 0.04, -0.3])
    m = FixedProposalSV(vec)
    st_ = init_chain(m, y, 20, 0, theta=vec)
    st_, acc = pmmh_step(st_, TAU_RHO, m, y, 20, new_stream(1))
    assert acc and st_.last_pmmh["log_alpha"] == 0.0


def test_out_of_support_is_rejected_without_filtering(sv_data):
    y, _ = sv_data
    vec = np.array([-0.5, 0.97, 0.04, -0.3])
    bad = np.array([-0.5, 1.2, 0.04, -0.3])
    m = FixedProposalSV(bad)
    st_ = init_chain(m, y, 20, 0, theta=vec)
    before = (st_.theta.copy(), st_.log_z_hat)
    st_, acc = pmmh_step(st_, TAU_RHO, m, y, 20, new_stream(1))
    assert not acc
    assert np.array_equal(st_.theta, before[0]) and st_.log_z_hat == before[1]
    assert st_.last_pmmh["ll_star"] == -np.inf


def test_logged_ratio_recomputes(sv_data):
    y, _ = sv_data
    st_ = init_chain(SV, y, 20, 0, theta=[-0.5, 0.97, 0.04, -0.3])
    for k in range(30):
        st_, _ = pmmh_step(st_, TAU_RHO, SV, y, 20, new_stream(k))
        rec = st_.last_pmmh
        th, th_s = SvParams.from_array(rec["theta"]), SvParams.from_array(rec["theta_star"])
        ll_star = run_smc(SV, th_s, y, 20, st_.inputs).log_z_hat
        assert rec["ll_star"] == ll_star
        log_alpha = (ll_star - rec["ll"] + sv_log_prior(th_s) - sv_log_prior(th)
                     + sv_log_jacobian(sv_transform(th_s)) - sv_log_jacobian(sv_transform(th)))
        assert rec["log_alpha"] == pytest.approx(log_alpha, abs=1e-12)


def test_log_z_hat_coherent_between_sweeps(sv_data):
    y, _ = sv_data
    plan = SV.default_plan()
    st_ = init_chain(SV, y, 20, 3)
    for _ in range(10):
        sweep(st_, SV, y, plan, 20, 3)
        again = run_smc(SV, SV.theta(st_.theta), y, 20, st_.inputs).log_z_hat
        assert abs(st_.log_z_hat - again) <= 1e-10


def test_refresh_trajectory_single_particle_and_replay(sv_data):
    y, _ = sv_data
    st_ = init_chain(SV, y, 1, 0)
    refresh_trajectory(st_, SV, y, 1, new_stream(1))
    assert st_.trajectory.j.tolist() == [0] * len(y)
    st_ = init_chain(SV, y, 10, 0)
    a = refresh_trajectory(st_, SV, y, 10, new_stream(2)).trajectory.copy()
    b = refresh_trajectory(st_, SV, y, 10, new_stream(2)).trajectory
    assert np.array_equal(a.j, b.j)


def test_exact_gibbs_block_always_accepted(sv_data):
    y, _ = sv_data
    st_ = init_chain(SV, y, 10, 0)
    for k in range(20):
        _, acc = pg_step(st_, Block("mu", ("mu",)), SV, y, new_stream(k))
        assert acc


def _mu_conditional_by_quadratic(path, th, y):
    # the complete-data log density is quadratic in mu under a flat prior
    f = lambda m: SV.complete_data_loglik(th.replace(mu=m), path, y)
    h = 0.5
    f0, fp, fm = f(0.0), f(h), f(-h)
    a = (fp + fm - 2 * f0) / (2 * h * h)
    b = (fp - fm) / (2 * h)
    return -b / (2 * a), -1.0 / (2 * a)


def test_mu_draws_follow_conditional(sv_data):
    y, x = sv_data
    th = SvParams(-0.5, 0.97, 0.04, -0.3)
    mean, var = _mu_conditional_by_quadratic(x, th, y)
    s = new_stream(5)
    vec = th.as_array()
    draws = np.empty(10**4)
    for i in range(len(draws)):
        out, _ = SV.pg_update(("mu",), vec, x, y, s)
        draws[i] = out[0]
    assert kstest(draws, norm(mean, math.sqrt(var)).cdf).pvalue > 0.01


def test_generic_pg_block_uses_rw_mh(sv_data):
    y, _ = sv_data
    st_ = init_chain(SV, y, 10, 0)
    before = st_.theta.copy()
    for k in range(50):
        pg_step(st_, TAU_RHO, SV, y, new_stream(k))
    assert "pg:tau2,rho" in st_.adapters
    assert st_.accepts["tau2,rho"][1] == 50
    assert not np.array_equal(before, st_.theta)


def test_refresh_inputs_keeps_trajectory_and_coherence():
    lg = LinearGaussianModel(LgParams(0.8, 0.5, 1.0))
    _, y = lg.simulate(50, new_stream(1))
    exact = kalman_oracle(lg.params, y).log_likelihood
    st_ = init_chain(lg, y, 50, 0)
    traj = st_.trajectory.copy()
    lls = []
    for k in range(40):
        refresh_inputs(st_, lg, y, 50, new_stream(k))
        assert np.array_equal(st_.trajectory.x_path, traj.x_path)
        assert st_.log_z_hat == run_smc(lg, lg.params, y, 50, st_.inputs).log_z_hat
        lls.append(st_.log_z_hat)
    lls = np.array(lls)
    assert lls[0] != lls[1]
    assert abs(np.median(lls) - exact) < 1.0


def test_adapter_warmup_and_symmetry():
    ad = ProposalAdapter(2)
    np.testing.assert_allclose(ad.covariance(), np.eye(2) * 0.1**2 / 2)
    u_star, lq = adaptive_rw_propose(ad, [0.0, 0.0], new_stream(0))
    assert lq == 0.0 and u_star.shape == (2,)
    z = new_stream(0).normal(2)
    np.testing.assert_allclose(u_star, 0.1 / math.sqrt(2) * z)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2**32 - 1), st.integers(100, 300))
def test_adapter_covariance_is_symmetric_psd(dim, seed, n):
    rng = np.random.default_rng(seed)
    ad = ProposalAdapter(dim)
    for _ in range(n):
        ad.update(rng.normal(size=dim) * rng.uniform(0, 5), rng.uniform() < 0.3)
    C = ad.covariance()
    assert np.array_equal(C, C.T)
    assert np.linalg.eigvalsh(C).min() > 0
    ad.propose(np.zeros(dim), new_stream(seed))


def test_adapter_steers_acceptance(sv_data):
    y, _ = sv_data
    dm = run_chain(SV, y, None, 20, 3000, 500, 1)
    assert 0.15 <= dm.acceptance["tau2,rho"] <= 0.40


def test_degenerate_plans(sv_data):
    y, _ = sv_data
    pg = run_chain(SV, y, SV.default_plan().with_p1(0), 10, 30, 0, 2)
    assert "tau2,rho" in pg.acceptance
    pm = run_chain(SV, y, SV.default_plan().with_p1(3), 10, 30, 0, 2)
    assert set(pm.acceptance) == {"tau2,rho", "mu", "phi"}
    assert pm.names == ["tau2", "rho", "mu", "phi"]


def test_fixed_theta_smoother_matches_kalman():
    lg = LinearGaussianModel(LgParams(0.8, 0.5, 1.0))
    _, y = lg.simulate(30, new_stream(7))
    ks = kalman_oracle(lg.params, y)
    dm = run_chain(lg, y, None, 20, 5200, 200, 8, record_states=True, state_thin=1)
    X = dm.states
    for t in range(0, 30, 3):
        col = X[:, t]
        tau = max(iact(col), 1.0)
        se_mean = math.sqrt(col.var() * tau / len(col))
        assert abs(col.mean() - ks.smoothed_mean[t]) < 3 * se_mean
        sq = (col - ks.smoothed_mean[t]) ** 2
        se_var = math.sqrt(sq.var() * max(iact(sq), 1.0) / len(sq))
        assert abs(sq.mean() - ks.smoothed_var[t]) < 3 * se_var


def test_run_chain_determinism_and_resume(tmp_path, sv_data):
    y, _ = sv_data
    a = run_chain(SV, y, None, 10, 40, 10, 4)
    b = run_chain(SV, y, None, 10, 40, 10, 4)
    assert np.array_equal(a.theta, b.theta)
    ck = tmp_path / "ck.pkl"
    run_chain(SV, y, None, 10, 25, 10, 4, checkpoint_path=str(ck), checkpoint_every=25)
    blob = load_checkpoint(str(ck))
    assert blob["kept"] == 15
    c = run_chain(SV, y, None, 10, 40, 10, 4, resume=blob)
    assert np.array_equal(a.theta, c.theta)


def test_checkpoint_version_checked(tmp_path, sv_data):
    y, _ = sv_data
    st_ = init_chain(SV, y, 5, 0)
    p = tmp_path / "ck.pkl"
    save_checkpoint(str(p), st_)
    assert load_checkpoint(str(p))["state"].sweep_index == 0
    import pickle

    p.write_bytes(pickle.dumps({"version": 99}))
    with pytest.raises(ValueError):
        load_checkpoint(str(p))


def test_errors_carry_sweep_and_part(sv_data):
    y, _ = sv_data
    m = FailingPG()
    with pytest.raises(SamplerError) as e:
        run_chain(m, y, None, 10, 5, 0, 0)
    assert e.value.sweep == 0 and e.value.part == 3


def test_run_chain_argument_checks(sv_data):
    y, _ = sv_data
    with pytest.raises(ValueError):
        run_chain(SV, y, None, 10, 10, 10, 0)
