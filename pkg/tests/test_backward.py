from itertools import product

import numpy as np
import pytest

from pmmhpg.backward import backward_simulate, categorical
from pmmhpg.errors import DegenerateWeightsError
from pmmhpg.models.discrete import DiscreteToyModel, ToyParams
from pmmhpg.models.linear_gaussian import LgParams, LinearGaussianModel
from pmmhpg.rng import draw_inputs, new_stream
from pmmhpg.smc import run_smc
from pmmhpg.ssm import ParticleSystem

from conftest import binomial_z

LG = LinearGaussianModel(LgParams(0.8, 0.5, 1.0))


def _system(x, log_w):
    T, N = x.shape
    return ParticleSystem.from_log_weights(np.asarray(x, float), np.zeros((T - 1, N), dtype=np.int64),
                                           np.asarray(log_w, float))


def test_categorical():
    assert categorical(np.log([0.25, 0.25, 0.5]), 0.3) == 1
    assert categorical(np.log([0.25, 0.25, 0.5]), 0.5) == 1
    assert categorical(np.log([0.25, 0.25, 0.5]), 0.51) == 2
    assert categorical(np.array([-np.inf, -np.inf]), 0.5) == -1


@pytest.mark.parametrize("engine", ["numba", "numpy"])
def test_single_particle(engine):
    y = new_stream(0).normal(20)
    run = run_smc(LG, LG.params, y, 1, draw_inputs(new_stream(1), 20, 1))
    tr = backward_simulate(run.system, LG, LG.params, y, new_stream(2), engine=engine)
    assert tr.j.tolist() == [0] * 20


@pytest.mark.parametrize("engine", ["numba", "numpy"])
def test_single_time_is_categorical(engine):
    w = np.array([0.1, 0.6, 0.3])
    sysm = _system(np.array([[0.0, 1.0, 2.0]]), np.log(w)[None])
    s = new_stream(3)
    reps = 20000
    counts = np.bincount([backward_simulate(sysm, LG, LG.params, np.zeros(1), s, engine=engine).j[0]
                          for _ in range(reps)], minlength=3)
    assert np.all(np.abs(binomial_z(counts, reps, w)) < 4)


def _backward_law(x, log_w, model, th, y):
    """P(j_{1:T}) as the product of the normalized backward conditionals."""
    T, N = x.shape
    law = {}
    for j in product(range(N), repeat=T):
        wT = np.exp(log_w[T - 1] - log_w[T - 1].max())
        p = wT[j[-1]] / wT.sum()
        for t in range(T - 2, -1, -1):
            lw = log_w[t] + model.log_transition(th, np.full(N, x[t + 1, j[t + 1]]), x[t], y[t])
            w = np.exp(lw - lw.max())
            p *= w[j[t]] / w.sum()
        law[j] = p
    return law


@pytest.mark.parametrize("engine", ["numba", "numpy"])
def test_backward_law_matches_product_formula(engine):
    x = np.array([[-0.8, 0.1, 0.9], [-0.5, 0.4, 1.2], [-1.0, 0.0, 0.7]])
    log_w = np.log(np.array([[0.2, 0.5, 0.3], [0.6, 0.1, 0.3], [0.25, 0.25, 0.5]]))
    y = np.zeros(3)
    law = _backward_law(x, log_w, LG, LG.params, y)
    assert sum(law.values()) == pytest.approx(1.0)
    sysm = _system(x, log_w)
    s = new_stream(4)
    reps = 10**5
    counts = dict.fromkeys(law, 0)
    for _ in range(reps):
        counts[tuple(backward_simulate(sysm, LG, LG.params, y, s, engine=engine).j.tolist())] += 1
    keys = list(law)
    z = binomial_z([counts[k] for k in keys], reps, [law[k] for k in keys])
    assert np.all(np.abs(z) < 4)


def test_engines_agree():
    y = new_stream(5).normal(50)
    run = run_smc(LG, LG.params, y, 30, draw_inputs(new_stream(6), 50, 30))
    for seed in range(10):
        a = backward_simulate(run.system, LG, LG.params, y, new_stream(seed), engine="numba")
        b = backward_simulate(run.system, LG, LG.params, y, new_stream(seed), engine="numpy")
        assert np.array_equal(a.j, b.j)
        assert np.array_equal(a.x_path, run.system.x[np.arange(50), a.j])


def test_consumes_exactly_T_uniforms():
    y = new_stream(5).normal(12)
    run = run_smc(LG, LG.params, y, 8, draw_inputs(new_stream(6), 12, 8))
    s = new_stream(7)
    backward_simulate(run.system, LG, LG.params, y, s)
    assert s.position == 12


@pytest.mark.parametrize("engine", ["numba", "numpy"])
def test_degenerate_backward_weights(engine):
    # with stay = 1 the only weighted particle at t=0 cannot reach the chosen state
    toy = DiscreteToyModel()
    th = ToyParams(1.0, 0.6)
    x = np.array([[0.0, 1.0], [1.0, 1.0]])
    log_w = np.array([[0.0, -np.inf], [0.0, 0.0]])
    sysm = _system(x, log_w)
    with pytest.raises(DegenerateWeightsError) as e:
        backward_simulate(sysm, toy, th, np.zeros(2), new_stream(0), engine=engine)
    assert e.value.t == 0
