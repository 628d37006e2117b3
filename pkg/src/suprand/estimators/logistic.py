"""Ridge-penalized weighted logistic regression fitted by IRLS."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.special import expit, log_expit

_EPS = 1e-12


class NumericalError(ArithmeticError):
    """An inner linear solve or iteration failed."""


@dataclass(frozen=True)
class LogisticModel:
    coefficients: np.ndarray  # intercept first
    ridge: float
    converged: bool
    iterations: int

    def decision_function(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return self.coefficients[0] + x @ self.coefficients[1:]

    def predict_proba(self, x) -> np.ndarray:
        return np.clip(expit(self.decision_function(x)), _EPS, 1.0 - _EPS)

    def to_dict(self) -> dict:
        return {"coefficients": self.coefficients.tolist(), "ridge": self.ridge,
                "converged": self.converged, "iterations": self.iterations}


def _penalized_ll(eta, y, w, beta, ridge):
    ll = np.sum(w * (y * log_expit(eta) + (1 - y) * log_expit(-eta)))
    return ll - 0.5 * ridge * np.sum(beta[1:] ** 2)


def fit_logistic(x, y, weights=None, ridge: float = 1e-6, tol: float = 1e-8,
                 max_iter: int = 100) -> LogisticModel:
    """Maximize the weighted, ridge-penalized log-likelihood by Newton/IRLS.

    Columns are centered and scaled internally so the penalty is
    scale-free; the intercept is never penalized. Weights are rescaled to
    mean one, which makes the fit invariant to their overall scale.
    Coefficients are returned on the original column scale. Columns that
    are constant on the fitted rows get a zero slope. Iteration stops once
    either the coefficients or the linear predictor move less than ``tol``.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, d = x.shape
    if y.shape != (n,):
        raise ValueError("y length does not match x")
    if ridge < 0:
        raise ValueError("ridge must be non-negative")
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    if w.shape != (n,) or np.any(w < 0) or not np.any(w > 0):
        raise ValueError("weights must be non-negative with at least one positive entry")
    w = w / w.mean()
    if ridge == 0 and (np.all(y[w > 0] == 1) or np.all(y[w > 0] == 0)):
        raise NumericalError("single-class outcome without ridge has no finite maximizer")

    mean = x.mean(axis=0) if n else np.zeros(d)
    sd = x.std(axis=0) if n else np.ones(d)
    active = np.flatnonzero(sd > 0)
    mean, sd = mean[active], sd[active]
    z = np.hstack([np.ones((n, 1)), (x[:, active] - mean) / sd])
    k = active.size

    penalty = np.full(k + 1, ridge)
    penalty[0] = 0.0
    beta = np.zeros(k + 1)
    ybar = np.average(y, weights=w)
    beta[0] = np.log(np.clip(ybar, 1e-6, 1 - 1e-6) / np.clip(1 - ybar, 1e-6, 1 - 1e-6))

    eta = z @ beta
    obj = _penalized_ll(eta, y, w, beta, ridge)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        p = expit(eta)
        grad = z.T @ (w * (y - p)) - penalty * beta
        hess = (z * (w * p * (1 - p))[:, None]).T @ z + np.diag(penalty)
        try:
            step = linalg.solve(hess, grad, assume_a="pos")
        except (linalg.LinAlgError, ValueError) as exc:
            cond = np.linalg.cond(hess)
            raise NumericalError(f"IRLS solve failed at iteration {it} (condition {cond:.3g}): {exc}") from exc
        # step halving keeps the penalized likelihood monotone
        t = 1.0
        while True:
            cand = beta + t * step
            eta_c = z @ cand
            obj_c = _penalized_ll(eta_c, y, w, cand, ridge)
            if obj_c >= obj - 1e-12 * abs(obj) or t < 1e-10:
                break
            t *= 0.5
        # one-hot blocks are collinear with the intercept, so beta can drift
        # along a near-null direction after the fitted values have settled
        delta = min(np.max(np.abs(cand - beta)), np.max(np.abs(eta_c - eta)))
        beta, eta, obj = cand, eta_c, obj_c
        if not np.all(np.isfinite(beta)):
            raise NumericalError(f"non-finite coefficients at iteration {it}")
        if delta < tol:
            converged = True
            break

    coef = np.zeros(d + 1)
    coef[1 + active] = beta[1:] / sd
    coef[0] = beta[0] - np.sum(beta[1:] * mean / sd)
    return LogisticModel(coef, float(ridge), converged, it)
