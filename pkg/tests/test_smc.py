import math

import numpy as np
import pytest

from pmmhpg.errors import DegenerateConstraintError, DegenerateWeightsError
from pmmhpg.kalman import kalman_oracle
from pmmhpg.models.discrete import DiscreteToyModel, ToyParams
from pmmhpg.models.linear_gaussian import LgParams, LinearGaussianModel
from pmmhpg.models.sv import SVModel, SvParams
from pmmhpg.rng import draw_inputs, new_stream
from pmmhpg.smc import (
    constrained_uniform,
    cumulative_weights,
    log_likelihood_estimate,
    multinomial_resample,
    run_smc,
)
from pmmhpg.ssm import ParticleSystem, StateSpaceModel, snap

from conftest import binomial_z

SV = SVModel()
TH = SvParams(-0.5, 0.97, 0.04, -0.3)


class BivariateAR(StateSpaceModel):
    """Two independent AR(1) states; y observes their sum in unit noise."""

    state_dim = 2
    phi = np.array([0.9, 0.5])
    sd = np.array([0.3, 1.0])

    def propagate_initial(self, th, v):
        return snap(self.sd / np.sqrt(1 - self.phi**2) * np.asarray(v))

    def propagate(self, th, v, x_prev, y_prev):
        return snap(self.phi * x_prev + self.sd * np.asarray(v))

    def invert_initial(self, th, x, u=None):
        return np.asarray(x) * np.sqrt(1 - self.phi**2) / self.sd

    def invert(self, th, x, x_prev, y_prev, u=None):
        return (np.asarray(x) - self.phi * x_prev) / self.sd

    def log_initial(self, th, x):
        s = self.sd / np.sqrt(1 - self.phi**2)
        return np.sum(-0.5 * (x / s) ** 2 - np.log(s) - 0.5 * math.log(2 * math.pi), axis=-1)

    def log_transition(self, th, x, x_prev, y_prev):
        z = (x - self.phi * x_prev) / self.sd
        return np.sum(-0.5 * z**2 - np.log(self.sd) - 0.5 * math.log(2 * math.pi), axis=-1)

    def log_obs(self, th, x, y):
        return -0.5 * (y - np.sum(x, axis=-1)) ** 2 - 0.5 * math.log(2 * math.pi)


def test_multinomial_examples():
    assert multinomial_resample([0.1, 0.3, 0.6, 0.9], np.full(4, 0.25)).tolist() == [0, 1, 2, 3]
    v = new_stream(0).uniform(10)
    assert multinomial_resample(v, [1.0, 0.0, 0.0]).tolist() == [0] * 10


def test_zero_weight_tail_is_never_selected():
    w = np.array([0.2, 0.3, 0.5, 0.0, 0.0])
    F = cumulative_weights(w)
    assert F[2] == 1.0 and F[-1] == 1.0
    v = np.nextafter(1.0, 0.0)
    assert multinomial_resample([v], w)[0] == 2


def test_multinomial_offspring_frequencies():
    rng = np.random.default_rng(3)
    w = rng.dirichlet(np.ones(5))
    reps = 10**5
    v = new_stream(5).uniform(reps * 5).reshape(reps, 5)
    idx = multinomial_resample(v.ravel(), w)
    counts = np.bincount(idx, minlength=5)
    assert np.all(np.abs(binomial_z(counts, reps * 5, w)) < 4)


def test_constrained_uniform_lands_in_interval():
    F = cumulative_weights(np.full(4, 0.25))
    for u in (1e-17, 0.3, 1 - 1e-16):
        v = constrained_uniform(F, 2, u)
        assert 0.5 < v <= 0.75
        assert np.searchsorted(F, v, side="left") == 2
    with pytest.raises(DegenerateConstraintError):
        constrained_uniform(cumulative_weights([0.5, 0.0, 0.5]), 1, 0.5)


def test_single_particle_likelihood_is_path_observation_density(sv_data):
    y, _ = sv_data
    run = run_smc(SV, TH, y, 1, draw_inputs(new_stream(1), len(y), 1))
    x = run.system.x[:, 0]
    assert run.log_z_hat == pytest.approx(float(np.sum(SV.log_obs(TH, x, y))), rel=1e-13)
    assert np.all(run.system.a == 0)


@pytest.mark.parametrize("engine", ["numba", "numpy"])
def test_determinism(sv_data, engine):
    y, _ = sv_data
    inp = draw_inputs(new_stream(2), len(y), 30)
    a = run_smc(SV, TH, y, 30, inp, engine=engine)
    b = run_smc(SV, TH, y, 30, inp.copy(), engine=engine)
    assert a.log_z_hat == b.log_z_hat
    assert np.array_equal(a.system.x, b.system.x)


def _models():
    lg = LinearGaussianModel(LgParams(0.8, 0.5, 1.0))
    y_lg = lg.simulate(60, new_stream(9))[1]
    toy = DiscreteToyModel()
    y_toy = new_stream(10).normal(40)
    return [(SV, TH, None), (lg, lg.params, y_lg), (toy, ToyParams(0.85, 0.6), y_toy)]


@pytest.mark.parametrize("which", [0, 1, 2])
@pytest.mark.parametrize("sort", [True, False])
def test_engines_agree(sv_data, which, sort):
    # states and ancestors are identical; exp() may differ in the last ulp between engines
    model, th, y = _models()[which]
    if y is None:
        y = sv_data[0]
    for seed in range(5):
        inp = draw_inputs(new_stream(seed), len(y), 25)
        a = run_smc(model, th, y, 25, inp, sort=sort, engine="numba")
        b = run_smc(model, th, y, 25, inp, sort=sort, engine="numpy")
        assert np.array_equal(a.system.x, b.system.x)
        assert np.array_equal(a.system.a, b.system.a)
        np.testing.assert_allclose(a.system.log_w, b.system.log_w, rtol=1e-14, atol=1e-14)
        assert a.log_z_hat == pytest.approx(b.log_z_hat, rel=1e-13)


def test_log_z_hat_recomputable(sv_data):
    y, _ = sv_data
    s = run_smc(SV, TH, y, 40, draw_inputs(new_stream(3), len(y), 40)).system
    from scipy.special import logsumexp

    recomputed = float(np.sum(logsumexp(s.log_w, axis=1) - np.log(40)))
    assert s.log_z_hat == pytest.approx(recomputed, abs=1e-10)
    assert log_likelihood_estimate(s) == s.log_z_hat


def test_constant_weights():
    T, N, c = 6, 4, 0.37
    ps = ParticleSystem.from_log_weights(np.zeros((T, N)), np.zeros((T - 1, N), dtype=np.int64),
                                         np.full((T, N), math.log(c)))
    assert log_likelihood_estimate(ps) == pytest.approx(T * math.log(c), rel=1e-14)


def test_extended_precision_product():
    rng = np.random.default_rng(4)
    for _ in range(20):
        T, N = 30, 7
        lw = rng.normal(scale=3.0, size=(T, N))
        ps = ParticleSystem.from_log_weights(np.zeros((T, N)), np.zeros((T - 1, N), dtype=np.int64), lw)
        w = np.exp(lw.astype(np.longdouble))
        naive = np.sum(np.log(w.sum(axis=1) / N))
        assert log_likelihood_estimate(ps) == pytest.approx(float(naive), rel=1e-12)


def test_degenerate_weights_raise():
    # y^2 overflows, so every observation density underflows to zero at t=1
    y = np.array([0.0, 1e200, 0.0])
    for engine in ("numba", "numpy"):
        with pytest.raises(DegenerateWeightsError) as e:
            run_smc(SV, TH, y, 5, draw_inputs(new_stream(0), 3, 5), engine=engine)
        assert e.value.t == 1


def test_input_shape_mismatch():
    with pytest.raises(ValueError):
        run_smc(SV, TH, np.zeros(5), 4, draw_inputs(new_stream(0), 5, 3))
    with pytest.raises(ValueError):
        run_smc(SV, TH, np.zeros(5), 3, draw_inputs(new_stream(0), 4, 3))


def test_lg_likelihood_unbiased():
    lg = LinearGaussianModel(LgParams(0.8, 0.5, 1.0))
    y = lg.simulate(50, new_stream(20))[1]
    exact = kalman_oracle(lg.params, y).log_likelihood
    s = new_stream(21)
    r = np.exp([run_smc(lg, lg.params, y, 50, draw_inputs(s.substream(str(i)), 50, 50)).log_z_hat - exact
                for i in range(1000)])
    assert abs(r.mean() - 1.0) < 3 * r.std(ddof=1) / math.sqrt(len(r))


def test_bivariate_states_use_hilbert_sort():
    m = BivariateAR()
    y = new_stream(30).normal(40)
    inp = draw_inputs(new_stream(31), 40, 64, state_dim=2)
    a = run_smc(m, None, y, 64, inp)
    b = run_smc(m, None, y, 64, inp.copy())
    assert a.system.x.shape == (40, 64, 2)
    assert a.log_z_hat == b.log_z_hat
    c = run_smc(m, None, y, 64, inp, sort=False)
    assert not np.array_equal(a.system.a, c.system.a)
    with pytest.raises(ValueError):
        run_smc(m, None, y, 64, inp, engine="numba")
