"""Command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import evaluation as ev
from . import randomization as rz
from . import simulation as sim
from .data import DataError, FeatureSchema, ingest_csv, write_csv
from .estimators import (ForestParams, NumericalError, ate_dr, ate_ipw, ate_naive,
                         fit_causal_forest, fit_outcome_models, fit_two_model)
from .harness import ConfigError, ExperimentConfig, build_ground_truth, run_experiment, write_report

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _schema_path(data: str, schema) -> str:
    return schema or str(Path(data).with_suffix("")) + ".schema.json"


def _load_config(args) -> ExperimentConfig:
    doc = {}
    if args.config:
        doc = ExperimentConfig.load(args.config).to_dict()
    if args.seed is not None:
        doc["master_seed"] = args.seed
    if getattr(args, "sigma", None) is not None:
        doc["oracle_sigma"] = args.sigma
    return ExperimentConfig.from_dict(doc)


def _load_data(args):
    if not args.data:
        raise ConfigError("--data is required")
    schema = FeatureSchema.load(_schema_path(args.data, args.schema))
    return ingest_csv(args.data, schema, args.target)


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    if not args.out:
        raise ConfigError("--out PATH is required")
    ds = build_ground_truth(cfg)
    write_csv(ds, args.out)
    with open(_schema_path(args.out, None), "w", encoding="utf-8") as fh:
        json.dump(ds.schema.to_dict(), fh, indent=1)
    print(f"wrote {ds.n} rows to {args.out} (mean ite {ds.truth.ite.mean():.6f})")
    return EXIT_OK


def cmd_assign(args) -> int:
    ds = _load_data(args)
    if not args.out:
        raise ConfigError("--out PATH is required")
    seed = 0 if args.seed is None else args.seed
    scores = None
    if args.scheme.startswith("supervised"):
        sigma = 0.025 if args.sigma is None else args.sigma
        scores = sim.oracle_scores(ds, sim.NoisyOracle(sigma, seed), args.repetition)
    try:
        scheme = rz.parse_scheme(args.scheme, seed, scores, binning=args.binning)
    except ValueError as e:
        if isinstance(e, DataError):
            raise
        raise ConfigError(str(e)) from None
    out = rz.assign(ds, scheme, args.repetition)
    write_csv(out, args.out)
    if args.out != args.data:
        with open(_schema_path(args.out, None), "w", encoding="utf-8") as fh:
            json.dump(out.schema.to_dict(), fh, indent=1)
    frac, conv = ev.campaign_stats(out)
    print(f"{args.scheme}: targeted fraction {frac:.4f}, conversion rate {conv:.4f}")
    return EXIT_OK


def cmd_estimate(args) -> int:
    ds = _load_data(args)
    g1, g0 = fit_outcome_models(ds)
    doc = {"n": ds.n, "ate": {"naive": ate_naive(ds).value, "ipw": ate_ipw(ds).value,
                              "dr": ate_dr(ds, g1, g0).value}, "models": {}}
    seed = 0 if args.seed is None else args.seed
    for name in args.models.split(","):
        if name == "two_model":
            model = fit_two_model(ds)
        elif name == "causal_forest":
            model = fit_causal_forest(ds, ForestParams(trees=args.trees, seed=seed))
        else:
            raise ConfigError(f"unknown model {name!r}")
        tau_hat = model.predict(ds)
        cell = {"mean_tau_hat": float(tau_hat.mean()), "sd_tau_hat": float(tau_hat.std())}
        if ds.truth is not None:
            cell["mae_in_sample"] = ev.mae_ite(tau_hat, ds.truth.ite)
        doc["models"][name] = cell
    if ds.truth is not None:
        doc["true_ate"] = float(ds.truth.ite.mean())
    text = json.dumps(doc, indent=1, sort_keys=True)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    print(text)
    return EXIT_OK


def cmd_report(args) -> int:
    cfg = _load_config(args)
    if not args.out:
        raise ConfigError("--out DIR is required")
    report = run_experiment(cfg, threads=args.threads)
    paths = write_report(report, args.out)
    for p in paths:
        print(p)
    return EXIT_OK


def cmd_selftest(args) -> int:
    from .selftest import run_all

    results = run_all()
    for c in results:
        print(f"{'PASS' if c.ok else 'FAIL'}  {c.name}: {c.detail}")
    failed = sum(not c.ok for c in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_NUMERICAL


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="suprand", description="Supervised randomization simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, data=False):
        sp.add_argument("--out", help="output file (directory for report)")
        sp.add_argument("--seed", type=int, help="master seed override")
        if data:
            sp.add_argument("--data", help="input CSV")
            sp.add_argument("--schema", help="schema JSON (default: <data>.schema.json)")
            sp.add_argument("--target", help="target column of a plain CSV")
        return sp

    sp = common(sub.add_parser("simulate", help="write a ground-truth dataset"))
    sp.add_argument("--config")
    sp.add_argument("--sigma", type=float)
    sp.set_defaults(func=cmd_simulate)

    sp = common(sub.add_parser("assign", help="assign treatments to a ground-truth CSV"), data=True)
    sp.add_argument("--scheme", required=True, help="full[:E] or supervised[:K]")
    sp.add_argument("--sigma", type=float, help="oracle noise sd for supervised scoring")
    sp.add_argument("--repetition", type=int, default=0)
    sp.add_argument("--binning", choices=("width", "quantile"), default="quantile")
    sp.set_defaults(func=cmd_assign)

    sp = common(sub.add_parser("estimate", help="ATE estimates and uplift fits on an assigned CSV"), data=True)
    sp.add_argument("--models", default="two_model,causal_forest")
    sp.add_argument("--trees", type=int, default=ForestParams.trees)
    sp.set_defaults(func=cmd_estimate)

    sp = common(sub.add_parser("report", help="full Monte Carlo run"))
    sp.add_argument("--config")
    sp.add_argument("--threads", type=int, default=1)
    sp.add_argument("--sigma", type=float)
    sp.set_defaults(func=cmd_report)

    sp = sub.add_parser("selftest", help="oracle and invariant checks")
    sp.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except ConfigError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, FloatingPointError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
