"""Semi-synthetic and synthetic ground truth for targeting experiments.

The treatment effect is a random one-hidden-layer sigmoid network of a
column subset, affinely recalibrated to a target mean and standard
deviation. Potential outcomes are either built from a logistic base rate
(synthetic mode) or by flipping observed treated outcomes (flip mode).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit

from . import _rng
from .data import Column, DataError, Dataset, FeatureSchema, Truth, from_matrix

P_MIN, P_MAX = 0.001, 0.999

# A bank-marketing-like covariate layout: 16 columns, independent marginals.
BANK_COLUMNS = [
    {"name": "age", "kind": "numeric", "dist": ["normal", 41.0, 10.6, 18, 95]},
    {"name": "job", "kind": "categorical",
     "levels": ["blue-collar", "management", "technician", "admin.", "services", "retired",
                "self-employed", "entrepreneur", "unemployed", "housemaid", "student", "unknown"],
     "probs": [0.215, 0.209, 0.168, 0.114, 0.092, 0.050, 0.035, 0.033, 0.029, 0.027, 0.021, 0.007]},
    {"name": "marital", "kind": "categorical", "levels": ["married", "single", "divorced"],
     "probs": [0.602, 0.283, 0.115]},
    {"name": "education", "kind": "categorical",
     "levels": ["secondary", "tertiary", "primary", "unknown"],
     "probs": [0.513, 0.294, 0.152, 0.041]},
    {"name": "default", "kind": "categorical", "levels": ["no", "yes"], "probs": [0.982, 0.018]},
    {"name": "balance", "kind": "numeric", "dist": ["lognormal", 6.6, 1.3, -300]},
    {"name": "housing", "kind": "categorical", "levels": ["yes", "no"], "probs": [0.556, 0.444]},
    {"name": "loan", "kind": "categorical", "levels": ["no", "yes"], "probs": [0.840, 0.160]},
    {"name": "contact", "kind": "categorical", "levels": ["cellular", "unknown", "telephone"],
     "probs": [0.648, 0.288, 0.064]},
    {"name": "day", "kind": "numeric", "dist": ["randint", 1, 31]},
    {"name": "month", "kind": "categorical",
     "levels": ["may", "jul", "aug", "jun", "nov", "apr", "feb", "jan", "oct", "sep", "mar", "dec"],
     "probs": [0.304, 0.153, 0.138, 0.118, 0.088, 0.065, 0.059, 0.031, 0.016, 0.013, 0.011, 0.004]},
    {"name": "duration", "kind": "numeric", "dist": ["exponential", 258.0]},
    {"name": "campaign", "kind": "numeric", "dist": ["poisson", 1.76, 1]},
    {"name": "pdays", "kind": "numeric", "dist": ["inflated", 0.817, -1.0, ["randint", 1, 871]]},
    {"name": "previous", "kind": "numeric", "dist": ["inflated", 0.817, 0.0, ["poisson", 2.0, 1]]},
    {"name": "poutcome", "kind": "categorical", "levels": ["unknown", "failure", "other", "success"],
     "probs": [0.817, 0.108, 0.041, 0.034]},
]
BANK_TAU_COLUMNS = ["age", "job", "marital", "education", "default", "balance", "housing",
                    "loan", "contact", "day", "month", "campaign"]
BANK_BASE_COLUMNS = ["duration", "pdays", "previous", "poutcome"]
BANK_HIDDEN = ["age", "marital"]


def _draw(dist, n, rng):
    kind, *args = dist
    if kind == "normal":
        mean, sd, lo, hi = args
        return np.round(np.clip(rng.normal(mean, sd, n), lo, hi))
    if kind == "lognormal":
        mu, sigma, shift = args
        return np.round(np.exp(rng.normal(mu, sigma, n)) + shift)
    if kind == "exponential":
        return np.round(rng.exponential(args[0], n))
    if kind == "poisson":
        lam, shift = args
        return (rng.poisson(lam, n) + shift).astype(np.float64)
    if kind == "randint":
        lo, hi = args
        return rng.integers(lo, hi + 1, n).astype(np.float64)
    if kind == "inflated":
        p, value, inner = args
        out = _draw(inner, n, rng)
        out[rng.random(n) < p] = value
        return out
    raise ValueError(f"unknown distribution {kind!r}")


def generate_covariates(columns: Sequence[dict], n: int, seed: int,
                        hidden: Sequence[str] = ()) -> Dataset:
    """Draw ``n`` rows with independent marginals from column specs.

    Each spec is ``{"name", "kind", "levels", "probs"}`` for categoricals or
    ``{"name", "kind": "numeric", "dist": [...]}`` for numerics.
    """
    rng = _rng.generator(seed, 17)
    cols, blocks = [], []
    for spec in columns:
        if spec.get("kind", "numeric") == "categorical":
            levels = tuple(spec["levels"])
            probs = np.asarray(spec.get("probs", np.ones(len(levels))), dtype=float)
            codes = rng.choice(len(levels), size=n, p=probs / probs.sum())
            blocks.append(np.eye(len(levels))[codes])
            cols.append(Column(spec["name"], "categorical", levels))
        else:
            blocks.append(_draw(spec["dist"], n, rng)[:, None])
            cols.append(Column(spec["name"]))
    schema = FeatureSchema(tuple(cols)).with_hidden(hidden)
    return from_matrix(schema, np.hstack(blocks))


def _standardize(x):
    mean = x.mean(axis=0)
    sd = x.std(axis=0)
    sd[sd == 0] = 1.0
    return mean, sd


@dataclass
class TauNetwork:
    """One-hidden-layer sigmoid network mapping selected columns to an effect."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: float
    input_columns: list
    target_ate: float = 0.05
    target_sd: float = 0.04
    in_mean: np.ndarray = None
    in_sd: np.ndarray = None
    scale: float = 1.0
    shift: float = 0.0

    def raw(self, ds: Dataset) -> np.ndarray:
        idx = ds.schema.encoded_indices(self.input_columns)
        z = (ds.x[:, idx] - self.in_mean) / self.in_sd
        return expit(z @ self.w1.T + self.b1) @ self.w2 + self.b2

    def predict(self, ds: Dataset) -> np.ndarray:
        return self.scale * self.raw(ds) + self.shift

    @classmethod
    def draw(cls, ds: Dataset, columns: Sequence[str], seed: int,
             target_ate: float = 0.05, target_sd: float = 0.04) -> "TauNetwork":
        """Draw standard-Gaussian weights and calibrate to ``(target_ate, target_sd)`` on ``ds``."""
        if target_sd < 0:
            raise ValueError("target_sd must be non-negative")
        columns = list(columns)
        idx = ds.schema.encoded_indices(columns)
        k = len(idx)
        rng = _rng.generator(seed, 29)
        net = cls(w1=rng.standard_normal((k, k)), b1=rng.standard_normal(k),
                  w2=rng.standard_normal(k), b2=float(rng.standard_normal()),
                  input_columns=columns, target_ate=target_ate, target_sd=target_sd)
        net.in_mean, net.in_sd = _standardize(ds.x[:, idx])
        g = net.raw(ds)
        sd_g = g.std(ddof=1) if len(g) > 1 else 0.0
        if target_sd == 0:
            net.scale, net.shift = 0.0, float(target_ate)
            return net
        if not sd_g > 1e-12 * max(1.0, abs(float(g.mean()))):
            raise DataError("network output has zero variance on this dataset; cannot rescale")
        net.scale = float(target_sd / sd_g)
        net.shift = float(target_ate - net.scale * g.mean())
        # second pass absorbs rounding in the affine map
        tau = net.predict(ds)
        net.scale *= float(target_sd / tau.std(ddof=1))
        net.shift = float(target_ate - net.scale * g.mean())
        return net

    def to_dict(self) -> dict:
        return {
            "w1": self.w1.tolist(), "b1": self.b1.tolist(), "w2": self.w2.tolist(),
            "b2": self.b2, "input_columns": self.input_columns,
            "target_ate": self.target_ate, "target_sd": self.target_sd,
            "in_mean": self.in_mean.tolist(), "in_sd": self.in_sd.tolist(),
            "scale": self.scale, "shift": self.shift,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TauNetwork":
        arr = {k: np.asarray(d[k], dtype=float) for k in ("w1", "b1", "w2", "in_mean", "in_sd")}
        return cls(b2=float(d["b2"]), input_columns=list(d["input_columns"]),
                   target_ate=d["target_ate"], target_sd=d["target_sd"],
                   scale=d["scale"], shift=d["shift"], **arr)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def simulate_tau(ds: Dataset, column_subset: Sequence[str], seed: int,
                 target_ate: float = 0.05, target_sd: float = 0.04) -> np.ndarray:
    """Per-row treatment effect from a freshly drawn, calibrated network."""
    return TauNetwork.draw(ds, column_subset, seed, target_ate, target_sd).predict(ds)


def calibrate_base_rate(ds: Dataset, columns: Sequence[str], seed: int,
                        base_rate: float = 0.109, logit_sd: float = 1.0) -> np.ndarray:
    """Logistic coefficients (intercept first) for the untreated conversion probability.

    Slopes act on the standardized ``columns`` with Gaussian weights scaled to
    a linear-predictor sd of ``logit_sd``; the intercept is solved so that the
    clipped mean probability equals ``base_rate``.
    """
    idx = ds.schema.encoded_indices(columns)
    mean, sd = _standardize(ds.x[:, idx])
    rng = _rng.generator(seed, 31)
    w = rng.standard_normal(len(idx))
    lin = ((ds.x[:, idx] - mean) / sd) @ w
    if lin.std() > 0:
        w *= logit_sd / lin.std()
        lin *= logit_sd / lin.std()

    def gap(b0):
        return np.clip(expit(b0 + lin), P_MIN, P_MAX).mean() - base_rate

    b0 = brentq(gap, -30.0, 30.0, xtol=1e-14)
    beta = np.zeros(ds.d + 1)
    beta[1 + idx] = w / sd
    beta[0] = b0 - np.sum(w * mean / sd)
    return beta


def make_potential_outcomes_synthetic(ds: Dataset, tau, base_model, seed: int) -> Dataset:
    """Couple both potential outcomes through one shared uniform per row.

    ``base_model`` holds logistic coefficients with the intercept first.
    """
    beta = np.asarray(base_model, dtype=float)
    tau = np.asarray(tau, dtype=float)
    if beta.shape != (ds.d + 1,):
        raise DataError(f"base model has {beta.size} coefficients, expected {ds.d + 1}")
    if tau.shape != (ds.n,):
        raise DataError("tau length does not match the dataset")
    p0 = np.clip(expit(beta[0] + ds.x @ beta[1:]), P_MIN, P_MAX)
    p1 = np.clip(p0 + tau, P_MIN, P_MAX)
    u = _rng.row_uniforms(seed, _rng.OUTCOME, 0, ds.row_ids)
    y0 = (u < p0).astype(np.int64)
    y1 = (u < p1).astype(np.int64)
    return ds.with_truth(Truth(p1 - p0, y1, y0))


def make_potential_outcomes_flip(ds_all_treated: Dataset, tau, seed: int,
                                 p1_hat=None, ridge: float = 1.0) -> Dataset:
    """Derive Y(0) from observed treated outcomes by effect-proportional label flips.

    A row with ``tau >= 0`` and ``y1 = 1`` flips to ``y0 = 0`` with probability
    ``min(1, tau / p1_hat)``; a row with ``tau < 0`` and ``y1 = 0`` flips to
    ``y0 = 1`` with probability ``min(1, -tau / (1 - p1_hat))``. The stored
    effect is the conditional flip effect, ``min(p1_hat, tau)`` or
    ``max(tau, p1_hat - 1)``.
    """
    from .estimators.logistic import fit_logistic

    ds = ds_all_treated
    tau = np.asarray(tau, dtype=float)
    if tau.shape != (ds.n,):
        raise DataError("tau length does not match the dataset")
    y1 = ds.outcome.astype(np.int64)
    if p1_hat is None:
        x = ds.observed_x()
        p1_hat = fit_logistic(x, y1, ridge=ridge).predict_proba(x)
    p1_hat = np.asarray(p1_hat, dtype=float)
    if not np.all((p1_hat > 0) & (p1_hat < 1)):
        raise DataError("auxiliary outcome model must predict strictly inside (0, 1)")

    pos = tau >= 0
    flip_p = np.where(pos, np.minimum(1.0, np.abs(tau) / p1_hat),
                      np.minimum(1.0, np.abs(tau) / (1.0 - p1_hat)))
    eligible = np.where(pos, y1 == 1, y1 == 0)
    u = _rng.row_uniforms(seed, _rng.FLIP, 0, ds.row_ids)
    flip = eligible & (u < flip_p)
    y0 = np.where(flip, 1 - y1, y1)
    ite = np.where(pos, np.minimum(p1_hat, tau), np.maximum(tau, p1_hat - 1.0))
    return ds.with_truth(Truth(ite, y1, y0))


@dataclass(frozen=True)
class NoisyOracle:
    """Existing scoring model: true effect plus Gaussian noise of sd ``sigma``."""

    sigma: float = 0.025
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")


def oracle_scores(ds: Dataset, oracle: NoisyOracle, repetition: int = 0) -> np.ndarray:
    if ds.truth is None:
        raise DataError("oracle scores need ground-truth effects")
    if oracle.sigma == 0:
        return ds.truth.ite.copy()
    eps = _rng.row_normals(oracle.seed, _rng.ORACLE, repetition, ds.row_ids)
    return ds.truth.ite + oracle.sigma * eps
