"""Integrated autocorrelation times and time-normalised variances."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np


class UndefinedIactError(ValueError):
    pass


def autocorrelation(x) -> np.ndarray:
    """Sample autocorrelations at all lags (FFT, biased autocovariance)."""
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    xc = x - x.mean()
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[:n] / n
    if not acov[0] > 0.0:
        raise UndefinedIactError("chain has zero variance")
    return acov / acov[0]


def iact(chain, min_length=100) -> float:
    """IACT = 1 + 2 sum_k rho_k, truncated by the initial monotone positive sequence.

    Lag pairs ``rho_{2m} + rho_{2m+1}`` are summed while positive and forced to
    be non-increasing.

    Raises:
        UndefinedIactError: the chain is constant.
        ValueError: fewer than ``min_length`` draws.
    """
    x = np.asarray(chain, dtype=np.float64).ravel()
    if len(x) < min_length:
        raise ValueError(f"need at least {min_length} draws, got {len(x)}")
    rho = autocorrelation(x)
    n_pairs = len(rho) // 2
    pairs = rho[: 2 * n_pairs : 2] + rho[1 : 2 * n_pairs : 2]
    total = 0.0
    prev = np.inf
    for g in pairs:
        if not g > 0.0:
            break
        g = min(g, prev)
        total += g
        prev = g
    return float(2.0 * total - 1.0)


@dataclass
class EfficiencyReport:
    """IACT and TNV summaries for one run; RTNV is filled in against a baseline."""

    name: str
    names: list
    iact: dict
    ct: float
    iact_max: float
    iact_mean: float
    tnv_max: float
    tnv_mean: float
    state_iact_min: float | None = None
    state_iact_mean: float | None = None
    state_iact_max: float | None = None
    baseline: str | None = None
    rtnv_max: float | None = None
    rtnv_mean: float | None = None
    rtnv: dict = field(default_factory=dict)

    @property
    def tnv(self) -> dict:
        return {k: v * self.ct for k, v in self.iact.items()}

    def to_dict(self) -> dict:
        d = asdict(self)
        d["tnv"] = self.tnv
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d) -> "EfficiencyReport":
        d = dict(d)
        d.pop("tnv", None)
        return cls(**d)

    def to_text(self) -> str:
        rows = [f"run: {self.name}  CT = {self.ct:.6g} s/sweep"]
        rows.append(f"{'parameter':<14}{'IACT':>12}{'TNV':>12}" + (f"{'RTNV':>10}" if self.rtnv else ""))
        for n in self.names:
            line = f"{n:<14}{self.iact[n]:>12.2f}{self.iact[n] * self.ct:>12.4g}"
            if self.rtnv:
                line += f"{self.rtnv[n]:>10.2f}"
            rows.append(line)
        rows.append(f"{'IACT_MAX':<14}{self.iact_max:>12.2f}")
        rows.append(f"{'IACT_MEAN':<14}{self.iact_mean:>12.2f}")
        rows.append(f"{'TNV_MAX':<14}{self.tnv_max:>12.4g}")
        rows.append(f"{'TNV_MEAN':<14}{self.tnv_mean:>12.4g}")
        if self.rtnv_max is not None:
            rows.append(f"{'RTNV_MAX':<14}{self.rtnv_max:>12.2f}   (baseline: {self.baseline})")
            rows.append(f"{'RTNV_MEAN':<14}{self.rtnv_mean:>12.2f}")
        if self.state_iact_mean is not None:
            rows.append(f"states IACT min/mean/max: {self.state_iact_min:.2f} / "
                        f"{self.state_iact_mean:.2f} / {self.state_iact_max:.2f}")
        return "\n".join(rows)


def with_baseline(report: EfficiencyReport, baseline: EfficiencyReport) -> EfficiencyReport:
    """RTNV = TNV(report) / TNV(baseline), per parameter and for the max / mean."""
    report.baseline = baseline.name
    report.rtnv_max = report.tnv_max / baseline.tnv_max
    report.rtnv_mean = report.tnv_mean / baseline.tnv_mean
    btnv = baseline.tnv
    report.rtnv = {n: report.tnv[n] / btnv[n] for n in report.names if n in btnv}
    return report


def summarize(draws, ct=None, baseline: EfficiencyReport | None = None, name="run") -> EfficiencyReport:
    """Efficiency report for a :class:`~pmmhpg.sampler.DrawMatrix`.

    ``ct`` defaults to the measured seconds per post-burn-in sweep.
    """
    ct = draws.seconds_per_sweep if ct is None else float(ct)
    vals = {n: iact(draws.theta[:, i]) for i, n in enumerate(draws.names)}
    arr = np.array(list(vals.values()))
    rep = EfficiencyReport(name, list(draws.names), vals, ct, float(arr.max()), float(arr.mean()),
                           float(arr.max() * ct), float(arr.mean() * ct))
    if draws.states is not None and draws.states.size:
        s = []
        for j in range(draws.states.shape[1]):
            try:
                s.append(iact(draws.states[:, j]))
            except UndefinedIactError:
                pass
        if s:
            rep.state_iact_min, rep.state_iact_mean, rep.state_iact_max = (
                float(np.min(s)), float(np.mean(s)), float(np.max(s)))
    if baseline is not None:
        with_baseline(rep, baseline)
    return rep
