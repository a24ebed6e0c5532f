import json
import math

import numpy as np
import pytest

from pmmhpg.diagnostics import (
    EfficiencyReport,
    UndefinedIactError,
    autocorrelation,
    iact,
    summarize,
    with_baseline,
)
from pmmhpg.rng import new_stream
from pmmhpg.sampler import DrawMatrix


def _ar1(phi, n, seed):
    z = new_stream(seed).normal(n)
    x = np.empty(n)
    x[0] = z[0] / math.sqrt(1 - phi**2)
    for t in range(1, n):
        x[t] = phi * x[t - 1] + z[t]
    return x


def test_autocorrelation_lag_zero_and_direct_sum():
    x = new_stream(1).normal(300)
    rho = autocorrelation(x)
    xc = x - x.mean()
    assert rho[0] == 1.0
    for k in (1, 5, 50):
        assert rho[k] == pytest.approx(np.dot(xc[:-k], xc[k:]) / np.dot(xc, xc), abs=1e-12)


def test_iact_of_independent_draws():
    assert 0.9 <= iact(new_stream(2).normal(10**5)) <= 1.1


def test_iact_of_ar1():
    # (1 + phi) / (1 - phi) for an AR(1) chain
    assert iact(_ar1(0.9, 2 * 10**5, 3)) == pytest.approx(19.0, rel=0.1)


def test_iact_errors():
    with pytest.raises(UndefinedIactError):
        iact(np.full(500, 2.5))
    with pytest.raises(ValueError):
        iact(np.zeros(10))


def _draws(cols, ct=0.01, names=None):
    cols = np.column_stack(cols)
    names = names or [f"p{i}" for i in range(cols.shape[1])]
    return DrawMatrix(names, np.arange(len(cols)), cols, seconds_per_sweep=ct)


def test_single_parameter_summary():
    rep = summarize(_draws([_ar1(0.5, 5000, 4)]))
    assert rep.iact_max == rep.iact_mean == rep.iact["p0"]
    assert rep.tnv_max == pytest.approx(rep.iact_max * 0.01)


def test_summary_arithmetic():
    a, b = _ar1(0.2, 20000, 5), _ar1(0.8, 20000, 6)
    rep = summarize(_draws([a, b]), ct=0.5)
    ia, ib = iact(a), iact(b)
    assert rep.iact_max == max(ia, ib)
    assert rep.iact_mean == pytest.approx((ia + ib) / 2)
    assert rep.tnv_mean == pytest.approx(0.5 * (ia + ib) / 2)
    assert rep.tnv == {"p0": ia * 0.5, "p1": ib * 0.5}


def test_self_comparison_is_one():
    rep = summarize(_draws([_ar1(0.7, 5000, 7), _ar1(0.3, 5000, 8)]))
    other = summarize(_draws([_ar1(0.7, 5000, 7), _ar1(0.3, 5000, 8)]))
    with_baseline(rep, other)
    assert rep.rtnv_max == 1.0 and rep.rtnv_mean == 1.0
    assert all(v == 1.0 for v in rep.rtnv.values())


def test_rtnv_ratio():
    def report(name, tnv):
        return EfficiencyReport(name, ["a"], {"a": tnv}, 1.0, tnv, tnv, tnv, tnv)

    rep = with_baseline(report("new", 17.21), report("base", 5.93))
    assert round(rep.rtnv_max, 2) == 2.90
    assert rep.baseline == "base"


def test_states_summary():
    dm = _draws([_ar1(0.5, 2000, 9)])
    dm.states = np.column_stack([_ar1(0.9, 2000, 10), np.ones(2000), _ar1(0.1, 2000, 11)])
    rep = summarize(dm)
    # the constant column has no IACT and is skipped
    assert rep.state_iact_min < rep.state_iact_mean < rep.state_iact_max


def test_json_round_trip():
    rep = summarize(_draws([_ar1(0.6, 3000, 12), _ar1(0.2, 3000, 13)]), name="x")
    back = EfficiencyReport.from_dict(json.loads(rep.to_json()))
    assert back == rep
    assert "IACT_MAX" in rep.to_text()
