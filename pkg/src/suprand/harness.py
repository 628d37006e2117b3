"""Monte Carlo study: repeated coupled assignment, estimation and evaluation.

Ground truth is built once per master seed. Each repetition ``r`` is a pair
(holdout fold, assignment draw). Within a repetition every scheme assigns
the training rows from the same per-row uniforms, the models are fitted on
the assigned training rows and evaluated on the holdout fold.
"""

from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import io
import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np
from joblib import Parallel, delayed

from . import __version__, _rng
from . import evaluation as ev
from . import randomization as rz
from . import simulation as sim
from .data import DataError, Dataset, FeatureSchema, ingest_csv, split_folds
from .estimators import (ForestParams, NumericalError, ate_dr, ate_ipw, ate_naive,
                         fit_causal_forest, fit_outcome_models, fit_two_model)

log = logging.getLogger(__name__)

MODELS = ("two_model", "causal_forest")
DEFAULT_GRID = (10, 15, 20, 25, 30, 35, 40, 45, 50)


class ConfigError(ValueError):
    """Invalid experiment configuration or command-line usage."""


def derive_seed(master: int, *tags) -> int:
    """Child seed for one purpose, a pure function of the master seed and tags."""
    return int(_rng._key(master, *tags)) >> 1


_SEED_TAGS = {"data": 11, "tau": 12, "base": 13, "outcome": 14, "folds": 15,
              "oracle": 16, "assign": 17, "forest": 18, "flip": 19}


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a run depends on. ``from_dict`` accepts the JSON layout of ``to_dict``."""

    data_source: dict = field(default_factory=lambda: {"kind": "synthetic", "n": 45211})
    tau: dict = field(default_factory=dict)
    oracle_sigma: float = 0.025
    schemes: tuple = ("full:0.5", "full:0.666", "supervised:10")
    binning: str = "quantile"
    folds: int = 4
    draws_per_fold: int = 50
    models: tuple = MODELS
    ipw_weighting: bool = True
    forest: dict = field(default_factory=dict)
    profit_grid: tuple = DEFAULT_GRID
    contact_cost: float = 1.0
    master_seed: int = 0

    def __post_init__(self):
        src = dict(self.data_source)
        kind = src.get("kind", "synthetic")
        if kind == "synthetic":
            src.setdefault("n", 45211)
            src.setdefault("base_rate", 0.109)
            src.setdefault("logit_sd", 1.0)
            src.setdefault("base_columns", list(sim.BANK_BASE_COLUMNS))
            src.setdefault("hidden", list(sim.BANK_HIDDEN))
            src.setdefault("columns", None)
            if int(src["n"]) < 2:
                raise ConfigError("synthetic n must be at least 2")
            if not float(src["logit_sd"]) > 0:
                raise ConfigError("synthetic logit_sd must be positive")
        elif kind == "csv":
            for key in ("path", "schema"):
                if key not in src:
                    raise ConfigError(f"csv data source needs {key!r}")
            src.setdefault("target_column", None)
        else:
            raise ConfigError(f"unknown data source kind {kind!r}")
        src["kind"] = kind
        object.__setattr__(self, "data_source", src)

        tau = {"seed": None, "columns": list(sim.BANK_TAU_COLUMNS), "ate": 0.05, "sd": 0.04}
        unknown = set(self.tau) - set(tau)
        if unknown:
            raise ConfigError(f"unknown tau keys {sorted(unknown)}")
        tau.update(self.tau)
        object.__setattr__(self, "tau", tau)

        fp = {f.name: f.default for f in fields(ForestParams) if f.name != "seed"}
        unknown = set(self.forest) - set(fp)
        if unknown:
            raise ConfigError(f"unknown forest keys {sorted(unknown)}")
        fp.update(self.forest)
        object.__setattr__(self, "forest", fp)
        try:
            ForestParams(**fp).check(4 * fp["min_node"])
        except ValueError as e:
            raise ConfigError(f"forest: {e}") from None

        for name in ("schemes", "models", "profit_grid"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.folds < 2:
            raise ConfigError("folds must be at least 2")
        if self.draws_per_fold < 1:
            raise ConfigError("draws_per_fold must be at least 1")
        if not self.schemes:
            raise ConfigError("at least one scheme is required")
        if len(set(self.schemes)) != len(self.schemes):
            raise ConfigError("duplicate scheme labels")
        for s in self.schemes:
            _check_scheme(s)
        for m in self.models:
            if m not in MODELS:
                raise ConfigError(f"unknown model {m!r}; choose from {MODELS}")
        if self.binning not in ("width", "quantile"):
            raise ConfigError("binning must be 'width' or 'quantile'")
        if self.oracle_sigma < 0:
            raise ConfigError("oracle_sigma must be non-negative")
        if not self.profit_grid or any(not v > 0 for v in self.profit_grid):
            raise ConfigError("profit grid values must be positive")
        if not self.contact_cost > 0:
            raise ConfigError("contact_cost must be positive")

    @property
    def repetitions(self) -> int:
        return self.folds * self.draws_per_fold

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("schemes", "models", "profit_grid"):
            d[k] = list(d[k])
        return d

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as e:
            raise ConfigError(str(e)) from None

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"{path}: config file not found") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e})") from None
        return cls.from_dict(doc)

    def seeds(self) -> dict:
        return {k: derive_seed(self.master_seed, v) for k, v in _SEED_TAGS.items()}


def _check_scheme(text: str) -> None:
    name, _, param = text.partition(":")
    try:
        if name == "full":
            e = float(param) if param else 0.5
            if not 0 < e < 1:
                raise ValueError
        elif name == "supervised":
            if param and int(param) < 1:
                raise ValueError
        else:
            raise ValueError
    except ValueError:
        raise ConfigError(f"invalid scheme {text!r}; use full[:E] or supervised[:K]") from None


def build_ground_truth(cfg: ExperimentConfig) -> Dataset:
    """Covariates plus both potential outcomes and the true effect per row."""
    s = cfg.seeds()
    src = cfg.data_source
    tau_seed = s["tau"] if cfg.tau["seed"] is None else int(cfg.tau["seed"])
    if src["kind"] == "synthetic":
        columns = src["columns"] or sim.BANK_COLUMNS
        ds = sim.generate_covariates(columns, int(src["n"]), s["data"], src["hidden"])
        tau = sim.simulate_tau(ds, cfg.tau["columns"], tau_seed, cfg.tau["ate"], cfg.tau["sd"])
        beta = sim.calibrate_base_rate(ds, src["base_columns"], s["base"], src["base_rate"],
                                     float(src["logit_sd"]))
        return sim.make_potential_outcomes_synthetic(ds, tau, beta, s["outcome"])
    schema = FeatureSchema.load(src["schema"])
    ds = ingest_csv(src["path"], schema, src["target_column"])
    tau = sim.simulate_tau(ds, cfg.tau["columns"], tau_seed, cfg.tau["ate"], cfg.tau["sd"])
    return sim.make_potential_outcomes_flip(ds, tau, s["flip"])


def holdout_assignment(ds: Dataset, seed: int, repetition: int) -> Dataset:
    """Balanced A/B draw on holdout rows, used only to evaluate Qini."""
    u = _rng.row_uniforms(seed, _rng.HOLDOUT, repetition, ds.row_ids)
    return ds.with_assignment((u < 0.5).astype(np.int64), np.full(ds.n, 0.5))


def _fit(model: str, ds: Dataset, cfg: ExperimentConfig, seed: int):
    if model == "two_model":
        return fit_two_model(ds, ipw_weighting=cfg.ipw_weighting)
    params = ForestParams(seed=seed, **cfg.forest)
    return fit_causal_forest(ds, params, ipw_weighting=cfg.ipw_weighting, keep_indices=False)


def run_repetition(truth: Dataset, folds: list, cfg: ExperimentConfig, r: int) -> dict:
    """All schemes, estimators and metrics for repetition ``r``."""
    s = cfg.seeds()
    fold, draw = divmod(r, cfg.draws_per_fold)
    train_idx = np.concatenate([f for i, f in enumerate(folds) if i != fold])
    train = truth.subset(train_idx)
    hold = truth.subset(folds[fold])
    hold_ab = holdout_assignment(hold, s["assign"], r)
    settings = [ev.ProfitSetting(v, cfg.contact_cost) for v in cfg.profit_grid]
    scores = sim.oracle_scores(train, sim.NoisyOracle(cfg.oracle_sigma, s["oracle"]), r)
    forest_seed = derive_seed(s["forest"], r)

    out = {"repetition": r, "fold": fold, "draw": draw,
           "true_ate_train": float(train.truth.ite.mean()),
           "true_ate_holdout": float(hold.truth.ite.mean()),
           # realized mean of y1 - y0 on the training rows: the design-based target
           "sample_ate_train": float(np.mean(train.truth.y1 - train.truth.y0)),
           "reference": {"none": [0.0, float(train.truth.y0.mean())],
                         "all": [1.0, float(train.truth.y1.mean())]},
           "schemes": {}}
    for label in cfg.schemes:
        stage = "assignment"
        try:
            scheme = rz.parse_scheme(label, s["assign"], scores, binning=cfg.binning)
            a = rz.assign(train, scheme, r)
            stage = "ate"
            frac, conv = ev.campaign_stats(a)
            g1, g0 = fit_outcome_models(a)
            ate = {"naive": ate_naive(a).value, "ipw": ate_ipw(a).value, "dr": ate_dr(a, g1, g0).value}
            res = {"targeted_fraction": frac, "conversion_rate": conv, "ate": ate,
                   "experiment_profit": [ev.campaign_profit(frac, conv, st) for st in settings],
                   "models": {"ate": {"mae": ev.mae_ite(np.full(hold.n, ate["ipw"]), hold.truth.ite)}}}
            for model in cfg.models:
                stage = model
                tau_hat = _fit(model, a, cfg, forest_seed).predict(hold)
                res["models"][model] = {
                    "mae": ev.mae_ite(tau_hat, hold.truth.ite),
                    "qini": ev.qini(tau_hat, hold_ab).coefficient,
                    "policy_profit": [ev.policy_profit(tau_hat, hold, st) for st in settings],
                }
        except (DataError, NumericalError) as e:
            raise type(e)(f"scheme {label}, fold {fold}, draw {draw} ({stage}): {e}") from e
        out["schemes"][label] = res
    return out


def _summary(values) -> dict:
    v = np.asarray(values, dtype=float)
    return {"mean": float(v.mean()), "sd": float(v.std(ddof=1)) if v.size > 1 else 0.0, "n": int(v.size)}


def _supervised_label(cfg: ExperimentConfig) -> Optional[str]:
    sup = [s for s in cfg.schemes if s.startswith("supervised")]
    return sup[0] if sup else None


def aggregate(cfg: ExperimentConfig, reps: list) -> dict:
    """Mean and sd over repetitions for every reported cell plus the scheme tests."""
    reps = sorted(reps, key=lambda x: x["repetition"])
    grid = list(cfg.profit_grid)
    ref = {}
    for name in ("none", "all"):
        fr = [x["reference"][name][0] for x in reps]
        cv = [x["reference"][name][1] for x in reps]
        ref[name] = {"targeted_fraction": _summary(fr), "conversion_rate": _summary(cv),
                     "experiment_profit": [_summary([ev.campaign_profit(f, c, ev.ProfitSetting(v, cfg.contact_cost))
                                                     for f, c in zip(fr, cv)]) for v in grid]}
    schemes = {}
    for label in cfg.schemes:
        rows = [x["schemes"][label] for x in reps]
        models = {}
        for model in ("ate",) + tuple(cfg.models):
            cell = {"mae": _summary([r_["models"][model]["mae"] for r_ in rows])}
            if model == "ate":
                cell["qini"] = None
            else:
                cell["qini"] = _summary([r_["models"][model]["qini"] for r_ in rows])
                cell["policy_profit"] = [_summary([r_["models"][model]["policy_profit"][i] for r_ in rows])
                                         for i in range(len(grid))]
            models[model] = cell
        schemes[label] = {
            "targeted_fraction": _summary([r_["targeted_fraction"] for r_ in rows]),
            "conversion_rate": _summary([r_["conversion_rate"] for r_ in rows]),
            "experiment_profit": [_summary([r_["experiment_profit"][i] for r_ in rows]) for i in range(len(grid))],
            "ate": {m: _summary([r_["ate"][m] for r_ in rows]) for m in ("naive", "ipw", "dr")},
            "models": models,
        }
    return {"reference": ref, "schemes": schemes, "tests": scheme_tests(cfg, reps)}


def scheme_tests(cfg: ExperimentConfig, reps: list) -> dict:
    """Kruskal-Wallis over the corrected ATE vectors and Levene IPW vs DR.

    The rank test compares the IPW estimates of every scheme plus the DR
    estimates of the supervised scheme; Levene compares IPW and DR under the
    supervised scheme (the last scheme if none is supervised).
    """
    vec = lambda label, m: [x["schemes"][label]["ate"][m] for x in reps]
    sup = _supervised_label(cfg) or cfg.schemes[-1]
    groups = [(f"{label}/ipw", vec(label, "ipw")) for label in cfg.schemes]
    groups.append((f"{sup}/dr", vec(sup, "dr")))
    out = {"kruskal_wallis": None, "levene": None}
    if len(reps) >= 1:
        kw = ev.kruskal_wallis([g for _, g in groups])
        out["kruskal_wallis"] = {"groups": [n for n, _ in groups], "h": kw.h, "df": kw.df,
                                 "p_value": kw.p_value, "degenerate": kw.degenerate}
    if len(reps) >= 2:
        ipw, dr = np.asarray(vec(sup, "ipw")), np.asarray(vec(sup, "dr"))
        try:
            lv = ev.levene([ipw, dr])
            out["levene"] = {"scheme": sup, "f": lv.f, "df1": lv.df1, "df2": lv.df2, "p_value": lv.p_value,
                             "var_ipw": float(ipw.var(ddof=1)), "var_dr": float(dr.var(ddof=1))}
        except ValueError as e:
            out["levene"] = {"scheme": sup, "error": str(e)}
    return out


@dataclass
class RunReport:
    config: ExperimentConfig
    repetitions: list
    summary: dict
    seeds: dict
    started: str = ""
    finished: str = ""

    def to_dict(self) -> dict:
        """Deterministic content; timestamps live in ``run_info`` only."""
        return {"config": self.config.to_dict(), "config_hash": self.config.hash(),
                "seeds": self.seeds, "version": __version__,
                "n_repetitions": len(self.repetitions), "summary": self.summary,
                "repetitions": self.repetitions}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1, allow_nan=False) + "\n"

    def ate_vector(self, scheme: str, method: str) -> np.ndarray:
        return np.array([x["schemes"][scheme]["ate"][method] for x in self.repetitions])

    def metric_vector(self, scheme: str, model: str, metric: str) -> np.ndarray:
        return np.array([x["schemes"][scheme]["models"][model][metric] for x in self.repetitions])


def run_experiment(cfg: ExperimentConfig, threads: int = 1, truth: Optional[Dataset] = None) -> RunReport:
    """Run every repetition (in parallel when ``threads > 1``) and aggregate.

    Results are stored by repetition index, so scheduling cannot change
    the report.
    """
    started = _dt.datetime.now(_dt.timezone.utc).isoformat()
    if truth is None:
        truth = build_ground_truth(cfg)
    if truth.n < 2 * cfg.folds:
        raise DataError(f"{truth.n} rows are too few for {cfg.folds} folds")
    folds = split_folds(truth, cfg.folds, cfg.seeds()["folds"])
    log.info("running %d repetitions on %d rows", cfg.repetitions, truth.n)
    if threads > 1:
        reps = Parallel(n_jobs=threads)(
            delayed(run_repetition)(truth, folds, cfg, r) for r in range(cfg.repetitions))
    else:
        reps = [run_repetition(truth, folds, cfg, r) for r in range(cfg.repetitions)]
    reps = sorted(reps, key=lambda x: x["repetition"])
    report = RunReport(cfg, reps, aggregate(cfg, reps), cfg.seeds(), started)
    report.finished = _dt.datetime.now(_dt.timezone.utc).isoformat()
    return report


def _num(v) -> str:
    return "-" if v is None else format(float(v), ".10g")


def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def report_tables(report: RunReport) -> dict:
    """CSV text for each output table, keyed by file name."""
    cfg, s = report.config, report.summary
    grid = list(cfg.profit_grid)
    ref, sch = s["reference"], s["schemes"]

    t2 = [["none", _num(ref["none"]["targeted_fraction"]["mean"]), _num(ref["none"]["conversion_rate"]["mean"])]]
    t2 += [[lb, _num(sch[lb]["targeted_fraction"]["mean"]), _num(sch[lb]["conversion_rate"]["mean"])]
           for lb in cfg.schemes]
    t2.append(["all", _num(ref["all"]["targeted_fraction"]["mean"]), _num(ref["all"]["conversion_rate"]["mean"])])

    t3 = []
    for lb in cfg.schemes:
        for model in ("ate",) + tuple(cfg.models):
            cell = sch[lb]["models"][model]
            q = cell["qini"]
            t3.append([lb, model, _num(cell["mae"]["mean"]), _num(cell["mae"]["sd"]),
                       _num(None if q is None else q["mean"]), _num(None if q is None else q["sd"])])

    t4, t5 = [], []
    for i, v in enumerate(grid):
        t4.append([_num(v), "none", _num(ref["none"]["experiment_profit"][i]["mean"])])
        t4 += [[_num(v), lb, _num(sch[lb]["experiment_profit"][i]["mean"])] for lb in cfg.schemes]
        t4.append([_num(v), "all", _num(ref["all"]["experiment_profit"][i]["mean"])])
        for model in cfg.models:
            t5 += [[_num(v), model, lb, _num(sch[lb]["models"][model]["policy_profit"][i]["mean"])]
                   for lb in cfg.schemes]

    ate = [[lb, m, str(x["repetition"]), _num(x["schemes"][lb]["ate"][m])]
           for lb in cfg.schemes for m in ("naive", "ipw", "dr") for x in report.repetitions]
    return {
        "table2.csv": _csv(t2, ["scheme", "targeted_fraction", "conversion_rate"]),
        "table3.csv": _csv(t3, ["scheme", "model", "mae", "mae_sd", "qini", "qini_sd"]),
        "table4.csv": _csv(t4, ["V", "scheme", "profit"]),
        "table5.csv": _csv(t5, ["V", "model", "scheme", "profit"]),
        "ate_estimates.csv": _csv(ate, ["scheme", "method", "repetition", "value"]),
    }


def write_report(report: RunReport, out_dir) -> list:
    """Write tables, ``report.json``, the resolved config and ``run_info.json``."""
    os.makedirs(out_dir, exist_ok=True)
    files = dict(report_tables(report))
    files["report.json"] = report.to_json()
    files["config.json"] = json.dumps(report.config.to_dict(), sort_keys=True, indent=1) + "\n"
    files["run_info.json"] = json.dumps({"started": report.started, "finished": report.finished,
                                         "config_hash": report.config.hash(), "version": __version__},
                                        sort_keys=True, indent=1) + "\n"
    paths = []
    for name, text in files.items():
        path = os.path.join(out_dir, name)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        paths.append(path)
    return paths
