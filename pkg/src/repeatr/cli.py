"""Command line front end.

Four subcommands: ``estimate`` and ``test`` consume a long-format CSV
panel, ``simulate`` runs a power experiment from a TOML config, and
``theory`` tabulates the closed-form curves.  No numerical logic lives
here; every number is produced by a library call.

Exit codes: 0 on success, 1 for validation errors (bad files, bad
arguments, bad configs), 2 for compute errors.  Errors are emitted as a
one-line JSON object on stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import estimators, simulate, theory
from .core import load_measurements
from .errors import ComputeError, ConfigError, RepeatrError, ValidationError
from .estimators import MultiBatchStrategy, all_strategies
from .metrics import METRICS, pairwise_distances
from .permtest import (
    F_TEST_NAME,
    parametric_f_test,
    parse_statistic,
    permutation_test,
    statistic_name,
)


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as validation errors."""

    def error(self, message):
        raise ConfigError(message)


def _default_threads() -> int:
    raw = os.environ.get("REPEATR_THREADS", "1")
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"REPEATR_THREADS must be an integer, got {raw!r}") from None
    if value < 1:
        raise ConfigError(f"REPEATR_THREADS must be at least 1, got {value}")
    return value


def _json_safe(x):
    if isinstance(x, dict):
        return {k: _json_safe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_safe(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (float, np.floating)):
        f = float(x)
        return f if math.isfinite(f) else None
    if isinstance(x, (int, np.integer)):
        return int(x)
    return x


def _emit_json(payload: dict) -> None:
    print(json.dumps(_json_safe(payload)))


def _all_stats(n: int, s: int, l: int) -> list:
    stats: list = ["dhat", "dtilde"]
    if s == 2:
        stats += ["drs", "fingerprint"]
    else:
        stats += [st.name for st in all_strategies()]
    if l == 1:
        stats.append("icc")
    else:
        stats.append("pca-icc")
    stats.append("i2c2")
    return stats


def _estimate_one(spec, ms, dm) -> estimators.RepeatabilityEstimate:
    spec = parse_statistic(spec)
    if isinstance(spec, MultiBatchStrategy):
        return estimators.multibatch_estimate(ms, spec, metric=dm.metric)
    if spec == "dhat":
        return estimators.sample_discriminability(dm)
    if spec == "dtilde":
        return estimators.rank_discriminability(dm)
    if spec == "drs":
        return estimators.ranksum_discriminability(dm, 0, 1)
    if spec == "fingerprint":
        return estimators.fingerprint_index(dm, 0, 1)
    if spec == "icc":
        return estimators.icc_anova(ms)
    if spec == "pca-icc":
        return estimators.pca_icc(ms)
    if spec == "i2c2":
        return estimators.i2c2_moments(ms)
    raise ConfigError(f"unknown statistic {spec!r}")


def cmd_estimate(args) -> int:
    ms = load_measurements(args.input)
    if args.pca:
        ms = estimators.pca_first_component(ms)
    if args.stats.strip().lower() == "all":
        stats = _all_stats(ms.n, ms.s, ms.l)
    else:
        stats = [s for s in args.stats.split(",") if s.strip()]
        if not stats:
            raise ConfigError("empty --stats list")
    dm = pairwise_distances(ms, args.metric)
    estimates = [_estimate_one(spec, ms, dm) for spec in stats]
    if args.out == "json":
        _emit_json(
            {
                "command": "estimate",
                "input": str(args.input),
                "metric": args.metric,
                "pca": bool(args.pca),
                "n": ms.n,
                "s": ms.s,
                "l": ms.l,
                "estimates": {
                    e.kind: {"value": e.value, "detail": e.detail} for e in estimates
                },
            }
        )
    else:
        print("statistic,value")
        for e in estimates:
            print(f"{e.kind},{e.value!r}")
    return 0


def cmd_test(args) -> int:
    ms = load_measurements(args.input)
    if args.pca:
        ms = estimators.pca_first_component(ms)
    name = args.stat.strip().lower()
    payload = {
        "command": "test",
        "input": str(args.input),
        "statistic": None,
        "metric": args.metric,
        "alpha": args.alpha,
    }
    if name == F_TEST_NAME:
        p = parametric_f_test(ms)
        payload.update(
            statistic=F_TEST_NAME,
            observed=estimators.icc_anova(ms).detail["f_stat"],
            p_value=p,
            reject=p <= args.alpha,
        )
    else:
        res = permutation_test(ms, name, B=args.B, seed=args.seed, metric=args.metric)
        payload.update(
            statistic=statistic_name(name),
            observed=res.observed,
            p_value=res.p_value,
            B=res.B,
            seed=res.seed,
            reject=res.reject(args.alpha),
        )
    _emit_json(payload)
    return 0


def cmd_simulate(args) -> int:
    config = simulate.ExperimentConfig.from_toml(args.config)
    result = config.run(threads=args.threads)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = out_dir / "power.json"
    csv_path = out_dir / "power.csv"
    cfg_path = out_dir / "config_resolved.toml"
    json_path.write_text(result.to_json() + "\n", encoding="utf-8")
    csv_path.write_text(result.to_csv(), encoding="utf-8")
    cfg_path.write_text(config.to_toml(), encoding="utf-8")
    _emit_json(
        {
            "command": "simulate",
            "config": str(args.config),
            "out": str(out_dir),
            "files": [json_path.name, csv_path.name, cfg_path.name],
            "seed": result.seed,
            "threads": args.threads,
            "cells": len(result.cells),
        }
    )
    return 0


def _parse_grid(text: str) -> list[float]:
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigError(f"grid must be start:stop:step, got {text!r}")
    try:
        start, stop, step = (float(p) for p in parts)
    except ValueError:
        raise ConfigError(f"grid must be numeric start:stop:step, got {text!r}") from None
    if step <= 0 or stop < start:
        raise ConfigError(f"grid needs step > 0 and stop >= start, got {text!r}")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    values = []
    for i in range(count):
        v = start + i * step
        if abs(v - stop) <= step * 1e-6:
            v = stop
        values.append(v)
    return values


def cmd_theory(args) -> int:
    rows: list[str] = []
    if args.curve == "d-icc":
        rows.append("icc,discr")
        for icc in _parse_grid(args.grid or "0:1:0.01"):
            rows.append(f"{icc!r},{theory.discr_from_icc(icc)!r}")
    elif args.curve == "manova-approx":
        rows.append("sigma_sq,lambda_tr,discr_approx")
        for sigma_sq in _parse_grid(args.sigma_sq_grid or "3:300:3"):
            pop = theory.ManovaPopulation.compound_symmetry(
                sigma_sq, args.sigma_mu_sq, args.rho, args.l
            )
            rows.append(f"{sigma_sq!r},{pop.lambda_tr!r},{theory.discr_approx_manova(pop)!r}")
    elif args.curve == "bounds":
        h1 = args.dispersion
        h2 = args.dispersion2 if args.dispersion2 is not None else h1
        rows.append("lambda_tr,lower,upper")
        for lam in _parse_grid(args.grid or "0:0.95:0.05"):
            lo, hi = theory.discr_bounds(lam, h1, h2)
            rows.append(f"{lam!r},{lo!r},{hi!r}")
    else:  # fingerprint
        rows.append("n,fingerprint")
        for n in range(2, args.n_max + 1):
            rows.append(f"{n},{theory.fingerprint_from_discr(args.d, args.rho, n)!r}")
    print("\n".join(rows))
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="repeatr", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_est = sub.add_parser("estimate", help="estimate repeatability statistics from a CSV panel")
    p_est.add_argument("input", help="long-format CSV: subject,session,f1,...,fl")
    p_est.add_argument("--metric", choices=METRICS, default="euclidean")
    p_est.add_argument(
        "--stats",
        default="all",
        help="comma-separated statistics, base:pairing names allowed, or 'all'",
    )
    p_est.add_argument("--pca", action="store_true", help="project onto the first principal component first")
    p_est.add_argument("--out", choices=("json", "csv"), default="json")
    p_est.set_defaults(func=cmd_estimate)

    p_test = sub.add_parser("test", help="test the no-repeatability null")
    p_test.add_argument("input")
    p_test.add_argument("--stat", required=True, help="statistic to test, or f-test")
    p_test.add_argument("--metric", choices=METRICS, default="euclidean")
    p_test.add_argument("-B", type=int, default=200, help="permutation replicates")
    p_test.add_argument("--seed", type=int, default=0)
    p_test.add_argument("--alpha", type=float, default=0.05)
    p_test.add_argument("--pca", action="store_true")
    p_test.set_defaults(func=cmd_test)

    p_sim = sub.add_parser("simulate", help="run a power experiment from a TOML config")
    p_sim.add_argument("config")
    p_sim.add_argument("--out", required=True, help="output directory")
    p_sim.add_argument(
        "--threads",
        type=int,
        default=None,
        help="worker threads (default: REPEATR_THREADS or 1); results do not depend on it",
    )
    p_sim.set_defaults(func=cmd_simulate)

    p_th = sub.add_parser("theory", help="tabulate closed-form curves as CSV")
    p_th.add_argument(
        "--curve",
        required=True,
        choices=("d-icc", "manova-approx", "bounds", "fingerprint"),
    )
    p_th.add_argument("--grid", help="start:stop:step for the x axis")
    p_th.add_argument("--l", type=int, default=1)
    p_th.add_argument("--rho", type=float, default=0.0)
    p_th.add_argument("--sigma-mu-sq", type=float, default=1.0)
    p_th.add_argument("--sigma-sq-grid", help="start:stop:step over sigma_sq")
    p_th.add_argument("--dispersion", type=float, default=1.0, help="degrees of freedom h1")
    p_th.add_argument("--dispersion2", type=float, default=None, help="h2, defaults to h1")
    p_th.add_argument("--d", type=float, default=0.7, help="discriminability for the fingerprint curve")
    p_th.add_argument("--n-max", type=int, default=40)
    p_th.set_defaults(func=cmd_theory)
    return parser


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "command", None) == "simulate" and args.threads is None:
            args.threads = _default_threads()
        return args.func(args)
    except ValidationError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    except ComputeError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 2
    except OSError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    except RepeatrError as exc:  # safety net: treat unclassified as validation
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
