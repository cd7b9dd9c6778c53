"""Batch command line: ``regime-price simulate|estimate|price|experiment``.

Configuration is one JSON document with the sections ``model``, ``market``,
``estimation``, ``solver``, ``experiment`` and ``output_dir``.  Defaults:

  estimation.alpha        0.3      (must lie in (0, 1/2))
  estimation.seed         0
  solver.delta_t          0.002
  solver.s_max            8 * strike
  solver.delta_s          0.004
  solver.theta_scheme     0.5      (Crank-Nicolson)
  solver.rannacher_steps  2
  experiment.tau_schedule 100 250 500 1000 2000 4000 8000
  experiment.rate_interval 4       (rate norms on [0, 4])
  experiment.spot_interval [0, 5]  (price norms on s in [0, 5])
  experiment.kinds        ["rate", "price"]
  output_dir              "out"

Exit codes: 0 success, 2 configuration/input error, 3 runtime error.
States are numbered from 1 in every file.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import jsonschema

log = logging.getLogger("regime_price")

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_VEC = {"type": "array", "items": _NUM, "minItems": 1}
_LAW = {
    "type": "object",
    "properties": {
        "family": {"enum": ["gamma", "exponential", "weibull"]},
        "shape": _POS,
        "rate": _POS,
        "scale": _POS,
    },
    "required": ["family"],
    "additionalProperties": False,
}
_SCHEDULE = {"type": "array", "items": _POS, "minItems": 1}

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "model": {
            "type": "object",
            "properties": {
                "num_states": {"type": "integer", "minimum": 1},
                "transition_matrix": {"type": "array", "items": _VEC},
                "holding_law": {"oneOf": [_LAW, {"type": "array", "items": _LAW}]},
                "initial_distribution": _VEC,
            },
            "required": ["num_states", "transition_matrix", "holding_law"],
            "additionalProperties": False,
        },
        "market": {
            "type": "object",
            "properties": {
                "rates": _VEC,
                "volatilities": {"type": "array", "items": _POS, "minItems": 1},
                "drifts": _VEC,
                "strike": {"type": "number", "minimum": 0},
                "maturity": _POS,
                "spot": _POS,
            },
            "required": ["rates", "volatilities", "strike", "maturity"],
            "additionalProperties": False,
        },
        "estimation": {
            "type": "object",
            "properties": {
                "alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 0.5},
                "tau": _POS,
                "tau_schedule": _SCHEDULE,
                "seed": {"type": "integer", "minimum": 0},
            },
            "additionalProperties": False,
        },
        "solver": {
            "type": "object",
            "properties": {
                "delta_t": _POS,
                "s_max": _POS,
                "delta_s": _POS,
                "theta_scheme": {"type": "number", "minimum": 0.5, "maximum": 1},
                "rannacher_steps": {"type": "integer", "minimum": 0},
                "store_stride": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "experiment": {
            "type": "object",
            "properties": {
                "tau_schedule": _SCHEDULE,
                "seeds": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                "rate_interval": _POS,
                "spot_interval": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
                "kinds": {"type": "array", "items": {"enum": ["rate", "price"]}},
                "nested": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
        "output_dir": {"type": "string"},
    },
    "additionalProperties": False,
}


class ConfigError(Exception):
    """Bad configuration or input file (exit code 2)."""


def load_config(path) -> dict:
    try:
        cfg = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> None:
    validator = jsonschema.Draft7Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        where = ".".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {err.message}")


def _section(cfg, name):
    if name not in cfg:
        raise ConfigError(f"config lacks the '{name}' section")
    return cfg[name]


def _model(cfg):
    from .semi_markov import SemiMarkovModel

    try:
        return SemiMarkovModel.from_dict(_section(cfg, "model"))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"config error at model: {exc}") from exc


def _market(cfg):
    from .semi_markov import MarketParams

    try:
        return MarketParams.from_dict(_section(cfg, "market"))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"config error at market: {exc}") from exc


def _alpha(cfg):
    from .estimation import DEFAULT_ALPHA

    return cfg.get("estimation", {}).get("alpha", DEFAULT_ALPHA)


def _seed(cfg, args):
    if args.seed is not None:
        return args.seed
    return cfg.get("estimation", {}).get("seed", 0)


def _solver(cfg, market) -> dict:
    s = dict(cfg.get("solver", {}))
    s.setdefault("delta_t", 1 / 500)
    s.setdefault("s_max", 8.0 * market.strike if market.strike > 0 else 8.0)
    s.setdefault("delta_s", 0.004)
    s.setdefault("theta_scheme", 0.5)
    return s


def _price_grid(solver: dict, market):
    from .pricing import PriceGrid

    extra = {k: solver[k] for k in ("rannacher_steps", "store_stride") if k in solver}
    try:
        return PriceGrid.from_steps(market.maturity, solver["delta_t"], solver["s_max"], solver["delta_s"],
                                    theta=solver["theta_scheme"], **extra)
    except ValueError as exc:
        raise ConfigError(f"config error at solver: {exc}") from exc


def _outdir(cfg, args) -> Path:
    return Path(args.out or cfg.get("output_dir", "out"))


def _claim(paths, force: bool):
    existing = [str(p) for p in paths if Path(p).exists()]
    if existing and not force:
        raise ConfigError(f"refusing to overwrite {', '.join(existing)} (use --force)")
    for p in paths:
        Path(p).parent.mkdir(parents=True, exist_ok=True)


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(cfg, args) -> list:
    from .semi_markov import simulate_history, write_history

    model = _model(cfg)
    tau = cfg.get("estimation", {}).get("tau")
    if tau is None:
        raise ConfigError("config error at estimation.tau: required for simulate")
    out = _outdir(cfg, args) / "history.csv"
    _claim([out], args.force)
    hist = simulate_history(model, float(tau), _seed(cfg, args))
    write_history(hist, out)
    return [out]


def cmd_estimate(cfg, args) -> list:
    from .estimation import build_grid, estimate_rate, write_estimate
    from .semi_markov import read_history
    from .spline import smooth, validate_tba_conditions, write_smoothed

    if not args.history:
        raise ConfigError("estimate needs --history <file>")
    try:
        hist = read_history(args.history)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot use history file {args.history}: {exc}") from exc
    n = cfg["model"]["num_states"] if "model" in cfg else int(hist.states.max()) + 1
    if hist.states.max() >= n:
        raise ConfigError("history visits a state beyond model.num_states")
    horizon = float(cfg["market"]["maturity"]) if "market" in cfg else 1.0
    out = _outdir(cfg, args)
    targets = [out / "estimate.csv", out / "smoothed.csv", out / "tba.json"]
    _claim(targets, args.force)
    grid = build_grid(hist.horizon, _alpha(cfg))
    est = estimate_rate(hist, grid, n)
    smoothed = smooth(est, min(horizon, hist.horizon))
    write_estimate(est, targets[0])
    write_smoothed(smoothed, targets[1])
    validate_tba_conditions(smoothed).write_json(targets[2])
    return targets


def cmd_price(cfg, args) -> list:
    from .estimation import read_estimate
    from .pricing import solve_pde, write_solver_config
    from .semi_markov import hazard_from_model
    from .spline import smooth

    market = _market(cfg)
    grid = _price_grid(_solver(cfg, market), market)
    if args.rate == "true":
        rate = hazard_from_model(_model(cfg))
    else:
        if not args.rate_file:
            raise ConfigError("--rate estimated needs --rate-file <estimate.csv>")
        try:
            est = read_estimate(args.rate_file)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot use rate file {args.rate_file}: {exc}") from exc
        if est.grid.horizon < market.maturity:
            raise ConfigError("estimate horizon is shorter than the option maturity")
        rate = smooth(est, market.maturity)
    if rate.num_states != market.num_states:
        raise ConfigError("rate and market disagree on the number of states")
    out = _outdir(cfg, args)
    targets = [out / "surface.csv", out / "solver.json"]
    _claim(targets, args.force)
    surface = solve_pde(market, rate, grid)
    surface.write_csv(targets[0])
    write_solver_config(grid, targets[1])
    return targets


def cmd_experiment(cfg, args) -> list:
    from .experiment import (DEFAULT_TAU_SCHEDULE, ConvergenceReport, ExperimentPlan, emit_plots,
                             run_price_convergence, run_rate_convergence)

    model, market = _model(cfg), _market(cfg)
    exp = cfg.get("experiment", {})
    schedule = exp.get("tau_schedule") or cfg.get("estimation", {}).get("tau_schedule") or DEFAULT_TAU_SCHEDULE
    out = _outdir(cfg, args)
    if out.exists() and any(out.iterdir()) and not args.force:
        raise ConfigError(f"output directory {out} is not empty (use --force)")
    try:
        plan = ExperimentPlan(
            model, market, tau_schedule=schedule, alpha=_alpha(cfg), seed=_seed(cfg, args),
            seeds=None if args.seed is not None else exp.get("seeds"),
            rate_interval=exp.get("rate_interval", 4.0), spot_interval=tuple(exp.get("spot_interval", (0.0, 5.0))),
            solver=_solver(cfg, market), nested=bool(exp.get("nested", False) or args.nested),
        )
    except ValueError as exc:
        raise ConfigError(f"config error at experiment: {exc}") from exc
    _price_grid(plan.solver, market)
    kinds = exp.get("kinds", ["rate", "price"])
    report = ConvergenceReport()
    if "rate" in kinds:
        report = report.merge(run_rate_convergence(plan))
    if "price" in kinds:
        report = report.merge(run_price_convergence(plan))
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    out.mkdir(parents=True, exist_ok=True)
    report.write_csv(out / "report.csv")
    return [out / "report.csv"] + emit_plots(report, out)


COMMANDS = {"simulate": cmd_simulate, "estimate": cmd_estimate, "price": cmd_price, "experiment": cmd_experiment}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON run configuration")
    common.add_argument("--seed", type=int, help="override every seed in the config")
    common.add_argument("--threads", type=int, help="worker threads (env REGIME_PRICE_THREADS; default: all cores)")
    common.add_argument("--force", action="store_true", help="overwrite existing outputs")
    common.add_argument("--out", help="output directory (overrides output_dir)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="regime-price", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="simulate a censored regime history")
    p = sub.add_parser("estimate", parents=[common], help="step MLE, spline smoothing and existence checks")
    p.add_argument("--history", help="history CSV written by 'simulate'")
    p = sub.add_parser("price", parents=[common], help="solve the pricing system")
    p.add_argument("--rate", choices=["true", "estimated"], default="true")
    p.add_argument("--rate-file", help="estimate CSV written by 'estimate' (for --rate estimated)")
    p = sub.add_parser("experiment", parents=[common], help="convergence sweep over horizons")
    p.add_argument("--nested", action="store_true", help="truncate one long history instead of independent ones")
    return parser


def _set_threads(n) -> None:
    if n is None:
        env = os.environ.get("REGIME_PRICE_THREADS")
        n = int(env) if env else None
    if n is None:
        return
    import numba

    numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load_config(args.config)
        _set_threads(args.threads)
        written = COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        print(f"error: {exc}", file=sys.stderr)
        return 3
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
