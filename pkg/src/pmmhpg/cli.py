"""Command-line interface: ``pmmhpg {simulate,fit,diagnose,compare,kalman}``.

Exit codes: 0 success, 2 configuration error, 3 numeric error, 4 data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np
import yaml

from .config import RunConfig, dump_config, load_config
from .errors import ConfigError, DataError, PmcmcError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_DATA = 0, 2, 3, 4
SCHEMA_VERSION = 1


def _common(p):
    p.add_argument("--config", help="YAML run configuration")
    p.add_argument("--seed", type=int)
    p.add_argument("--particles", type=int, dest="N")
    p.add_argument("--sweeps", type=int)
    p.add_argument("--burn-in", type=int, dest="burn_in")
    p.add_argument("--threads", type=int)
    p.add_argument("--out")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pmmhpg", description="Particle MCMC for state-space models")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a synthetic data set")
    _common(p)
    p.add_argument("--model", choices=["sv-leverage", "factor-sv", "linear-gaussian"])
    p.add_argument("--params", help="true parameters as JSON (or 'params' in the config)")
    p.add_argument("--T", type=int, default=1000)
    p.add_argument("--S", type=int, default=1)
    p.add_argument("--K", type=int, default=1)

    p = sub.add_parser("fit", help="run the sampler")
    _common(p)
    p.add_argument("--data")
    p.add_argument("--model", choices=["sv-leverage", "factor-sv", "linear-gaussian"])
    p.add_argument("--blocking", help="'default', 'pgbs' or 'pmmh'")
    p.add_argument("--resume", help="checkpoint to continue from")

    p = sub.add_parser("diagnose", help="IACT / TNV report for a fit")
    p.add_argument("run", help="output directory of a fit")
    p.add_argument("--ct", type=float, help="seconds per sweep (default: measured)")
    p.add_argument("--out", help="report path (default: <run>/report.json)")

    p = sub.add_parser("compare", help="RTNV of one report against a baseline")
    p.add_argument("report")
    p.add_argument("baseline")
    p.add_argument("--out")

    p = sub.add_parser("kalman", help="exact likelihood and smoother for the linear-Gaussian model")
    p.add_argument("--config")
    p.add_argument("--data", required=False)
    p.add_argument("--phi", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--obs-sd", type=float, dest="obs_sd")
    p.add_argument("--out")
    return ap


def _overrides(args, *names):
    return {n: getattr(args, n, None) for n in names}


def _ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path


def _load_y(cfg: RunConfig) -> tuple:
    from .io import load_returns_csv

    if not cfg.data:
        raise ConfigError("data: a data path is required")
    table = load_returns_csv(cfg.data, cfg.mode)
    return table.returns(), table.names


def cmd_simulate(args) -> int:
    from .io import write_matrix_csv
    from .simulate import simulate

    ov = _overrides(args, "seed", "out", "model")
    if args.params:
        try:
            ov["params"] = json.loads(args.params)
        except json.JSONDecodeError as e:
            raise ConfigError(f"params: not valid JSON: {e}") from e
    cfg = load_config(args.config, ov)
    params = cfg.params
    if not params:
        raise ConfigError("params: true parameters are required for simulation")
    try:
        res = simulate(cfg.model, params, args.T, cfg.seed, args.S, args.K)
    except (TypeError, KeyError, ValueError) as e:
        raise ConfigError(f"params: {e}") from e
    out = _ensure_dir(cfg.out)
    y = res["y"]
    names = [f"y{s}" for s in range(y.shape[1])]
    write_matrix_csv(os.path.join(out, "data.csv"), names, y, index=np.arange(len(y)), index_name="date")
    st = res["states"]
    write_matrix_csv(os.path.join(out, "states.csv"), [f"x{j}" for j in range(st.shape[1])], st,
                     index=np.arange(len(st)))
    with open(os.path.join(out, "truth.json"), "w") as fh:
        json.dump({"model": cfg.model, "params": params, "T": args.T, "seed": cfg.seed}, fh, indent=2)
    print(os.path.join(out, "data.csv"))
    return EXIT_OK


def _plan(model, blocking):
    from .sampler import BlockingPlan

    base = model.default_plan()
    if blocking in (None, "default"):
        return base
    if blocking == "pgbs":
        return base.with_p1(0)
    if blocking == "pmmh":
        return base.with_p1(len(base.blocks))
    if isinstance(blocking, dict):
        try:
            return BlockingPlan.from_lists(blocking.get("pmmh", []), blocking.get("pg", [])).validate(
                model.param_names)
        except ValueError as e:
            raise ConfigError(f"blocking: {e}") from e
    raise ConfigError(f"blocking: unknown plan {blocking!r}")


def _write_draws(out, dm, extra_schema=None):
    from .io import write_matrix_csv

    cols = list(dm.names)
    mat = dm.theta
    if dm.states is not None and dm.states.size:
        cols += [f"state_{j}" for j in range(dm.states.shape[1])]
        mat = np.hstack([mat, dm.states])
    write_matrix_csv(os.path.join(out, "draws.csv"), cols, mat, index=dm.sweeps, index_name="sweep")
    schema = {"schema_version": SCHEMA_VERSION, "columns": ["sweep"] + cols,
              "parameters": list(dm.names), "state_times": [int(t) for t in dm.state_times],
              "seconds_per_sweep": dm.seconds_per_sweep, "acceptance": dm.acceptance}
    schema.update(extra_schema or {})
    with open(os.path.join(out, "draws.schema.json"), "w") as fh:
        json.dump(schema, fh, indent=2, sort_keys=True)


def cmd_fit(args) -> int:
    from .sampler import load_checkpoint, run_chain

    cfg = load_config(args.config, _overrides(args, "seed", "N", "sweeps", "burn_in", "threads",
                                              "out", "data", "model", "blocking"))
    y, names = _load_y(cfg)
    out = _ensure_dir(cfg.out)
    dump_config(cfg, os.path.join(out, "config.resolved.yaml"))
    if cfg.progress_every:
        logging.basicConfig(level=logging.INFO, stream=sys.stderr, format="%(message)s")
    if cfg.model == "factor-sv":
        return _fit_factor(cfg, y, out)
    if y.shape[1] != 1:
        raise DataError(f"{cfg.model} expects one series, got {y.shape[1]}")
    y = y[:, 0]
    if cfg.model == "sv-leverage":
        from .models.sv import SVModel

        model = SVModel()
    else:
        from .models.linear_gaussian import LgParams, LinearGaussianModel

        model = LinearGaussianModel(LgParams(**cfg.params))
    plan = _plan(model, cfg.blocking)
    resume = load_checkpoint(args.resume) if args.resume else None
    ckpt = os.path.join(out, "checkpoint.pkl")
    dm = run_chain(model, y, plan, cfg.N, cfg.sweeps, cfg.burn_in, cfg.seed,
                   record_states=cfg.record_states, state_thin=cfg.thin, engine=cfg.engine,
                   progress_every=cfg.progress_every, checkpoint_path=ckpt,
                   checkpoint_every=cfg.checkpoint_every or cfg.sweeps, resume=resume)
    _write_draws(out, dm, {"model": cfg.model})
    print(os.path.join(out, "draws.csv"))
    return EXIT_OK


def _fit_factor(cfg, y, out) -> int:
    from .io import write_matrix_csv
    from .models.factor import FactorConfig, postprocess_identification, run_factor_chain

    Y = y.T
    fc = FactorConfig(sweeps=cfg.sweeps, burn_in=cfg.burn_in, seed=cfg.seed,
                      pmmh=cfg.blocking != "pgbs", interweave=cfg.interweave, engine=cfg.engine,
                      threads=cfg.threads, record_states=cfg.record_states, state_thin=cfg.thin)
    res = run_factor_chain(Y, cfg.K, cfg.N, fc)
    _write_draws(out, res.draws, {"model": cfg.model, "S": int(Y.shape[0]), "K": cfg.K})
    if cfg.identify:
        ident, perm, sign = postprocess_identification(res.beta)
        S, K = Y.shape[0], cfg.K
        write_matrix_csv(os.path.join(out, "beta_identified.csv"),
                         [f"beta_{s}_{k}" for s in range(S) for k in range(K)],
                         ident.reshape(len(ident), -1), index=res.draws.sweeps, index_name="sweep")
    print(os.path.join(out, "draws.csv"))
    return EXIT_OK


def _read_draws(run):
    path = os.path.join(run, "draws.csv")
    with open(os.path.join(run, "draws.schema.json")) as fh:
        schema = json.load(fh)
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return schema, data


def cmd_diagnose(args) -> int:
    from .diagnostics import summarize
    from .sampler import DrawMatrix

    try:
        schema, data = _read_draws(args.run)
    except (OSError, ValueError) as e:
        raise DataError(f"cannot read draws in {args.run}: {e}") from e
    params = schema["parameters"]
    p = len(params)
    dm = DrawMatrix(params, data[:, 0].astype(np.int64), data[:, 1:1 + p],
                    np.array(schema.get("state_times", []), dtype=np.int64),
                    data[:, 1 + p:] if data.shape[1] > 1 + p else None,
                    schema.get("seconds_per_sweep", float("nan")))
    rep = summarize(dm, ct=args.ct, name=os.path.basename(os.path.normpath(args.run)))
    out = args.out or os.path.join(args.run, "report.json")
    with open(out, "w") as fh:
        fh.write(rep.to_json())
    print(rep.to_text())
    return EXIT_OK


def cmd_compare(args) -> int:
    from .diagnostics import EfficiencyReport, with_baseline

    try:
        with open(args.report) as fh:
            rep = EfficiencyReport.from_dict(json.load(fh))
        with open(args.baseline) as fh:
            base = EfficiencyReport.from_dict(json.load(fh))
    except (OSError, ValueError, TypeError) as e:
        raise DataError(f"cannot read report: {e}") from e
    with_baseline(rep, base)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(rep.to_json())
    print(rep.to_text())
    return EXIT_OK


def cmd_kalman(args) -> int:
    from .io import load_returns_csv, write_matrix_csv
    from .kalman import kalman_oracle
    from .models.linear_gaussian import LgParams

    params = {}
    data = args.data
    if args.config:
        cfg = load_config(args.config)
        params = dict(cfg.params)
        data = data or cfg.data
    for k in ("phi", "sigma", "obs_sd"):
        if getattr(args, k) is not None:
            params[k] = getattr(args, k)
    if "phi" not in params or "sigma" not in params:
        raise ConfigError("params.phi and params.sigma are required")
    if not data:
        raise ConfigError("data: a data path is required")
    y = load_returns_csv(data, "log-returns", min_t=1).values[:, 0]
    res = kalman_oracle(LgParams(**params), y)
    if args.out:
        _ensure_dir(args.out)
        write_matrix_csv(os.path.join(args.out, "smoothed.csv"), ["mean", "var"],
                         np.column_stack([res.smoothed_mean, res.smoothed_var]), index=np.arange(len(y)))
    print(json.dumps({"log_likelihood": res.log_likelihood, "T": len(y)}))
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "diagnose": cmd_diagnose,
            "compare": cmd_compare, "kalman": cmd_kalman}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (PmcmcError, FloatingPointError, np.linalg.LinAlgError) as e:
        print(f"numeric error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except yaml.YAMLError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
