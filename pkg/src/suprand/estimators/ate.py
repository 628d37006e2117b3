"""Average treatment effect estimators consuming logged propensities."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..data import DataError, Dataset
from .logistic import fit_logistic


@dataclass(frozen=True)
class AteEstimate:
    method: str
    value: float
    n: int

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise ArithmeticError(f"{self.method} estimate is not finite")


def _arms(ds: Dataset):
    d = ds.treated.astype(np.float64)
    e = ds.propensity
    if np.any(e <= 0) or np.any(e >= 1):
        raise DataError("propensities must lie strictly inside (0, 1)")
    return d, ds.outcome.astype(np.float64), e


def ate_naive(ds: Dataset) -> AteEstimate:
    """Difference in observed conversion rates, ignoring assignment probabilities."""
    t = ds.treated
    if t.all() or not t.any():
        raise DataError("both arms must be non-empty")
    y = ds.outcome
    return AteEstimate("naive", float(y[t].mean() - y[~t].mean()), ds.n)


def ate_ipw(ds: Dataset) -> AteEstimate:
    """Horvitz-Thompson style IPW estimate normalized by the total row count."""
    d, y, e = _arms(ds)
    total = np.sum(d * y / e) - np.sum((1 - d) * y / (1 - e))
    return AteEstimate("ipw", float(total / ds.n), ds.n)


def _predict(g, ds: Dataset) -> np.ndarray:
    if hasattr(g, "predict_proba"):
        return g.predict_proba(ds.observed_x())
    g = np.asarray(g, dtype=np.float64)
    if g.ndim == 0:
        return np.full(ds.n, float(g))
    if g.shape != (ds.n,):
        raise ValueError("outcome-model predictions must have one value per row")
    return g


def ate_dr(ds: Dataset, g1, g0) -> AteEstimate:
    """Doubly robust (augmented IPW) estimate.

    ``g1`` and ``g0`` are outcome models for the treated and control arm:
    fitted models with ``predict_proba`` over the observed covariates, or
    per-row prediction arrays, or scalars.
    """
    d, y, e = _arms(ds)
    m1 = _predict(g1, ds)
    m0 = _predict(g0, ds)
    treated = (d * y - (d - e) * m1) / e
    control = ((1 - d) * y + (d - e) * m0) / (1 - e)
    return AteEstimate("dr", float(np.sum(treated) / ds.n - np.sum(control) / ds.n), ds.n)


def fit_outcome_models(ds: Dataset, ridge: float = 1e-6):
    """Per-arm logistic outcome models on the observed covariates."""
    x = ds.observed_x()
    t = ds.treated
    if t.all() or not t.any():
        raise DataError("both arms must be non-empty")
    g1 = fit_logistic(x[t], ds.outcome[t], ridge=ridge)
    g0 = fit_logistic(x[~t], ds.outcome[~t], ridge=ridge)
    return g1, g0


def ipw_leaf_effect(rows, ds: Dataset) -> float:
    """IPW effect restricted to ``rows``, normalized by the subset size."""
    rows = np.asarray(rows)
    if rows.size == 0:
        raise ValueError("rows must be non-empty")
    d = ds.treated[rows].astype(np.float64)
    y = ds.outcome[rows].astype(np.float64)
    e = ds.propensity[rows]
    return float((np.sum(d * y / e) - np.sum((1 - d) * y / (1 - e))) / rows.size)
