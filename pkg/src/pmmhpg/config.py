"""Run configuration: a YAML file plus command-line overrides."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

import yaml

from .errors import ConfigError

MODELS = ("sv-leverage", "factor-sv", "linear-gaussian")


@dataclass
class RunConfig:
    model: str = "sv-leverage"
    data: str | None = None
    mode: str = "log-returns"
    N: int = 20
    sweeps: int = 11000
    burn_in: int = 1000
    seed: int = 0
    # "default", "pgbs", "pmmh" or {"pmmh": [[names]], "pg": [[names]]}
    blocking: object = "default"
    K: int = 1
    out: str = "out"
    thin: int = 10
    record_states: bool = False
    checkpoint_every: int = 0
    progress_every: int = 0
    threads: int = 1
    engine: str = "auto"
    interweave: bool = True
    identify: bool = True
    params: dict = field(default_factory=dict)

    def validate(self) -> "RunConfig":
        if self.model not in MODELS:
            raise ConfigError(f"model: expected one of {MODELS}, got {self.model!r}")
        if self.mode not in ("prices", "log-returns"):
            raise ConfigError(f"mode: expected 'prices' or 'log-returns', got {self.mode!r}")
        for name in ("N", "sweeps", "K", "thin", "threads"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ConfigError(f"{name}: must be a positive integer, got {v!r}")
        for name in ("burn_in", "checkpoint_every", "progress_every"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 0:
                raise ConfigError(f"{name}: must be a non-negative integer, got {v!r}")
        if not self.burn_in < self.sweeps:
            raise ConfigError(f"burn_in: must be smaller than sweeps ({self.burn_in} >= {self.sweeps})")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed: must be an unsigned 64-bit integer, got {self.seed!r}")
        if self.engine not in ("auto", "numba", "numpy"):
            raise ConfigError(f"engine: unknown engine {self.engine!r}")
        if self.model == "factor-sv" and self.blocking not in ("default", "pgbs"):
            raise ConfigError("blocking: the factor model supports 'default' or 'pgbs'")
        if self.model == "linear-gaussian":
            for k in ("phi", "sigma"):
                if k not in self.params:
                    raise ConfigError(f"params.{k}: required for the linear-gaussian model")
        if not (isinstance(self.blocking, (str, dict))):
            raise ConfigError("blocking: must be a name or a mapping with 'pmmh' and 'pg' lists")
        return self

    def to_dict(self) -> dict:
        return asdict(self)


def load_config(path=None, overrides=None) -> RunConfig:
    """Read ``path`` (YAML mapping), apply non-None ``overrides`` and validate."""
    data = {}
    if path:
        try:
            with open(path) as fh:
                data = yaml.safe_load(fh) or {}
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        except yaml.YAMLError as e:
            raise ConfigError(f"config {path} is not valid YAML: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError("config file must contain a mapping")
    known = {f.name for f in fields(RunConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    data.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return RunConfig(**data).validate()


def dump_config(cfg: RunConfig, path):
    with open(path, "w") as fh:
        yaml.safe_dump(cfg.to_dict(), fh, sort_keys=True)
