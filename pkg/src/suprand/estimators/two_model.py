"""Two-model uplift learner: separate logistic fits per arm."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..data import DataError, Dataset
from .logistic import LogisticModel, fit_logistic

MIN_ARM = 25


@dataclass(frozen=True)
class TwoModel:
    model_1: LogisticModel
    model_0: LogisticModel
    columns: np.ndarray
    ipw_weighting: bool

    kind = "two_model"

    def predict_x(self, x) -> np.ndarray:
        return self.model_1.predict_proba(x) - self.model_0.predict_proba(x)

    def predict(self, ds: Dataset) -> np.ndarray:
        return self.predict_x(ds.x[:, self.columns])

    def to_dict(self) -> dict:
        return {"kind": self.kind, "ipw_weighting": self.ipw_weighting,
                "columns": self.columns.tolist(),
                "model_1": self.model_1.to_dict(), "model_0": self.model_0.to_dict()}


def fit_two_model(ds: Dataset, ipw_weighting: bool = True, ridge: float = 1e-6) -> TwoModel:
    """Fit P(Y=1 | x, treated) and P(Y=1 | x, control) on the observed covariates.

    With ``ipw_weighting`` treated rows carry weight ``1/e`` and control
    rows ``1/(1-e)``.
    """
    t = ds.treated
    n1, n0 = int(t.sum()), int((~t).sum())
    if min(n1, n0) < MIN_ARM:
        raise DataError(f"each arm needs at least {MIN_ARM} rows (treated={n1}, control={n0})")
    cols = ds.schema.observed_indices()
    x = ds.x[:, cols]
    y = ds.outcome
    e = ds.propensity
    w1 = 1.0 / e[t] if ipw_weighting else None
    w0 = 1.0 / (1.0 - e[~t]) if ipw_weighting else None
    m1 = fit_logistic(x[t], y[t], w1, ridge=ridge)
    m0 = fit_logistic(x[~t], y[~t], w0, ridge=ridge)
    return TwoModel(m1, m0, cols, ipw_weighting)
