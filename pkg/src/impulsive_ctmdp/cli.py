"""Command-line front end.

Subcommands: validate, solve, simulate, epidemic-solve, epidemic-sweep,
dynkin-check.  Options may come from a flat YAML config file; precedence is
flags > file > defaults, and the effective configuration is echoed into
every output record.

Exit codes: 0 ok, 2 parse error, 3 validation failure, 4 non-convergence,
5 improper chain.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Any

import numpy as np
import yaml

from . import io as mio
from .bellman import NonConvergenceError, extract_policy, solve
from .epidemic import (
    CarrierContractionError,
    build_epidemic_model,
    carrier_residual,
    coefficient_monotonicity_violations,
    solve_carrier_equation,
    state_label,
    threshold_policy,
)
from .intervention import ImproperChainError
from .model import validate_model
from .simulate import dynkin_check, estimate_cost, replication_rng, simulate_trajectory

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_VALIDATION = 3
EXIT_NONCONVERGENCE = 4
EXIT_IMPROPER_CHAIN = 5

DEFAULT_SEED = 12345
DEFAULTS: dict[str, Any] = {
    "tol": 1e-10,
    "tail_tol": 1e-8,
    "reps": 10_000,
    "seed": DEFAULT_SEED,
    "threads": 1,
    "t_horizon": 1.0,
    "c_max": None,
    "x0": None,
    "lambdas": None,
    "out": None,
}


def _error(code: int, kind: str, message: str) -> int:
    print(json.dumps({"error": {"code": code, "type": kind, "message": message}}), file=sys.stderr)
    return code


def _effective(args: argparse.Namespace) -> dict[str, Any]:
    """Merge defaults, config file, and explicit flags."""
    cfg = dict(DEFAULTS)
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            loaded = yaml.safe_load(fh.read()) or {}
        if not isinstance(loaded, dict):
            raise mio.ModelParseError(f"{args.config}: config must be a flat mapping")
        for k, v in loaded.items():
            cfg[k.replace("-", "_")] = v
    for key in cfg:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    for key in ("model", "params"):
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    cfg["command"] = args.command
    return cfg


def _emit(cfg: dict[str, Any], meta: dict[str, Any], tables: dict[str, str]) -> None:
    """Write the run record and tables; stdout when no output directory given."""
    record = {"config": {k: v for k, v in cfg.items() if v is not None}, "result": meta}
    text = mio.dump_meta(record)
    out = cfg.get("out")
    if out:
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, "report.yaml"), "w", encoding="utf-8") as fh:
            fh.write(text)
        for name, content in tables.items():
            with open(os.path.join(out, name), "w", encoding="utf-8") as fh:
                fh.write(content)
    else:
        sys.stdout.write(text)
        for name, content in tables.items():
            sys.stdout.write(f"--- {name}\n{content}")


def _load_valid_model(cfg: dict[str, Any]):
    model = mio.load_model(cfg["model"])
    report = validate_model(model)
    if report:
        raise _ValidationFailure(report)
    return model


class _ValidationFailure(Exception):
    def __init__(self, report):
        super().__init__("model validation failed")
        self.report = report


def _cmd_validate(cfg: dict[str, Any]) -> int:
    model = mio.load_model(cfg["model"])
    report = validate_model(model)
    meta = {"violations": [str(v) for v in report], "valid": not report}
    _emit(cfg, meta, {})
    return EXIT_OK if not report else EXIT_VALIDATION


def _solve_and_policy(model, tol: float):
    report = solve(model, tol=tol)
    policy = extract_policy(model, report.V)
    return report, policy


def _cmd_solve(cfg: dict[str, Any]) -> int:
    model = _load_valid_model(cfg)
    report, policy = _solve_and_policy(model, float(cfg["tol"]))
    _emit(cfg, mio.solve_report_meta(report),
          {"values.csv": mio.solve_report_table(model, report, policy)})
    return EXIT_OK


def _cmd_simulate(cfg: dict[str, Any]) -> int:
    model = _load_valid_model(cfg)
    report, policy = _solve_and_policy(model, float(cfg["tol"]))
    x0 = cfg.get("x0") or model.states.labels[0]
    est = estimate_cost(model, policy, x0, int(cfg["reps"]), int(cfg["seed"]),
                        tail_tol=float(cfg["tail_tol"]), threads=int(cfg["threads"]))
    sample = simulate_trajectory(model, policy, x0, replication_rng(int(cfg["seed"]), 0),
                                 tail_tol=float(cfg["tail_tol"]))
    meta = {
        "x0": x0,
        "mean": est.mean,
        "std_error": est.std_error,
        "n_replications": est.n_replications,
        "solved_value_at_x0": report.V[model.states.index[x0]],
        "truncation_time": sample.truncation_time,
    }
    return _finish(cfg, meta, {"trajectory0.csv": mio.trajectory_csv(sample)})


def _finish(cfg, meta, tables) -> int:
    _emit(cfg, meta, tables)
    return EXIT_OK


def _load_params(cfg: dict[str, Any]):
    c_max = cfg.get("c_max")
    return mio.load_epidemic_params(cfg["params"], c_max_override=int(c_max) if c_max else None)


def _cmd_epidemic_solve(cfg: dict[str, Any]) -> int:
    params = _load_params(cfg)
    cv = solve_carrier_equation(params, tol=float(cfg["tol"]))
    meta = {
        "c_star": cv.c_star,
        "lambda_star": cv.lambda_star,
        "carrier_residual": carrier_residual(params, cv),
        "monotonicity_warnings": coefficient_monotonicity_violations(params),
    }
    import csv as _csv
    import io as _sio
    buf = _sio.StringIO()
    w = _csv.writer(buf, lineterminator="\n")
    w.writerow(["c", "v"])
    for c, val in enumerate(cv.v):
        w.writerow([c, repr(float(val))])
    return _finish(cfg, meta, {"carrier_value.csv": buf.getvalue()})


def _cmd_epidemic_sweep(cfg: dict[str, Any]) -> int:
    params = _load_params(cfg)
    if cfg.get("lambdas"):
        raw = cfg["lambdas"]
        lams = [float(x) for x in (raw.split(",") if isinstance(raw, str) else raw)]
    else:
        from .epidemic import lambda_star as _ls
        top = _ls(params)
        lams = [round(f * top, 12) for f in
                (0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 1.0, 1.05, 1.25, 1.5)]
        lams = [l for l in lams if l > 0] or [0.1]
    import csv as _csv
    import io as _sio
    from dataclasses import replace as _replace
    buf = _sio.StringIO()
    w = _csv.writer(buf, lineterminator="\n")
    w.writerow(["lambda", "c_star", "lambda_star", "v_residual"])
    for lam in lams:
        p = _replace(params, immunization_cost=lam)
        cv = solve_carrier_equation(p, tol=float(cfg["tol"]))
        w.writerow([repr(lam), "" if cv.c_star is None else cv.c_star,
                    repr(cv.lambda_star), repr(carrier_residual(p, cv))])
    return _finish(cfg, {"n_lambdas": len(lams)}, {"sweep.csv": buf.getvalue()})


def _cmd_dynkin(cfg: dict[str, Any]) -> int:
    model = _load_valid_model(cfg)
    report, policy = _solve_and_policy(model, float(cfg["tol"]))
    x0 = cfg.get("x0") or model.states.labels[0]
    res = dynkin_check(model, policy, report.V, x0, float(cfg["t_horizon"]),
                       int(cfg["reps"]), int(cfg["seed"]))
    meta = {
        "x0": x0,
        "lhs": res.lhs,
        "rhs": res.rhs,
        "diff": res.diff,
        "std_error": res.std_error,
        "within_3_sigma": abs(res.diff) <= 3.0 * res.std_error + 1e-12,
    }
    return _finish(cfg, meta, {})


COMMANDS = {
    "validate": _cmd_validate,
    "solve": _cmd_solve,
    "simulate": _cmd_simulate,
    "epidemic-solve": _cmd_epidemic_solve,
    "epidemic-sweep": _cmd_epidemic_sweep,
    "dynkin-check": _cmd_dynkin,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="impulsive-ctmdp",
        description="Solve and simulate discounted CTMDPs with gradual and impulsive controls. "
                    "Exit codes: 0 ok, 2 parse, 3 validation, 4 non-convergence, 5 improper chain.",
    )
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="flat YAML config file; flags override its entries")
        sp.add_argument("--model", help="model document path")
        sp.add_argument("--params", help="epidemic parameter document path")
        sp.add_argument("--tol", type=float, help="solver tolerance (default 1e-10)")
        sp.add_argument("--tail-tol", dest="tail_tol", type=float,
                        help="discounted-tail truncation bound (default 1e-8)")
        sp.add_argument("--reps", type=int, help="Monte Carlo replications (default 10000)")
        sp.add_argument("--seed", type=int, help=f"master seed (default {DEFAULT_SEED})")
        sp.add_argument("--threads", type=int, help="worker process cap for simulation (default 1)")
        sp.add_argument("--out", help="output directory; stdout when omitted")
        sp.add_argument("--c-max", dest="c_max", type=int, help="carrier truncation override")
        sp.add_argument("--x0", help="initial state label (default: first state)")
        sp.add_argument("--t-horizon", dest="t_horizon", type=float,
                        help="horizon for dynkin-check (default 1.0)")
        sp.add_argument("--lambdas", help="comma-separated immunization prices for epidemic-sweep")
    return p


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _effective(args)
        needs_model = args.command in ("validate", "solve", "simulate", "dynkin-check")
        if needs_model and not cfg.get("model"):
            return _error(EXIT_PARSE, "usage", f"{args.command} requires --model")
        if args.command.startswith("epidemic") and not cfg.get("params"):
            return _error(EXIT_PARSE, "usage", f"{args.command} requires --params")
        return COMMANDS[args.command](cfg)
    except (mio.ModelParseError, FileNotFoundError, yaml.YAMLError) as exc:
        return _error(EXIT_PARSE, "parse", str(exc))
    except (_ValidationFailure,) as exc:
        for v in exc.report:
            print(str(v), file=sys.stderr)
        return _error(EXIT_VALIDATION, "validation", "model validation failed")
    except (CarrierContractionError, ValueError) as exc:
        return _error(EXIT_VALIDATION, "validation", str(exc))
    except NonConvergenceError as exc:
        return _error(EXIT_NONCONVERGENCE, "non-convergence", str(exc))
    except ImproperChainError as exc:
        return _error(EXIT_IMPROPER_CHAIN, "improper-chain", str(exc))


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
