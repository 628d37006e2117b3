"""Treatment assignment: full (A/B) and supervised randomization.

Supervised randomization maps an existing model score to a per-customer
treatment probability through a piecewise-constant mapping and draws the
treatment from it. The probability used for each draw is logged on the
dataset so downstream estimators can reweight exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
import numpy as np

from . import _rng
from .data import DataError, Dataset


@dataclass(frozen=True)
class PropensityMapping:
    """Score bins ``theta[k-1] < s <= theta[k]`` with one treatment probability per bin.

    Scores below the first or above the last threshold fall into the
    extreme bins.
    """

    thresholds: tuple
    probabilities: tuple

    def __post_init__(self):
        th = tuple(float(t) for t in self.thresholds)
        pr = tuple(float(p) for p in self.probabilities)
        object.__setattr__(self, "thresholds", th)
        object.__setattr__(self, "probabilities", pr)
        if len(pr) != len(th) + 1:
            raise ValueError("need exactly one more probability than thresholds")
        if any(b <= a for a, b in zip(th, th[1:])):
            raise ValueError("thresholds must be strictly increasing")
        if not all(np.isfinite(th)):
            raise ValueError("thresholds must be finite")
        if not all(0.0 < p < 1.0 for p in pr):
            raise ValueError("bin probabilities must lie strictly inside (0, 1)")

    @property
    def k(self) -> int:
        return len(self.probabilities)

    def bins(self, scores) -> np.ndarray:
        return np.searchsorted(np.asarray(self.thresholds), np.asarray(scores, dtype=float), side="left")

    def __call__(self, scores) -> np.ndarray:
        return np.asarray(self.probabilities)[self.bins(scores)]

    @classmethod
    def constant(cls, e: float) -> "PropensityMapping":
        return cls((), (e,))

    def to_dict(self) -> dict:
        return {"thresholds": list(self.thresholds), "probabilities": list(self.probabilities)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "PropensityMapping":
        return cls(tuple(d["thresholds"]), tuple(d["probabilities"]))


def build_linear_mapping(train_scores, k: int = 10, e_lo: float = 0.05,
                         e_hi: float = 0.95, binning: str = "width") -> PropensityMapping:
    """Linearly increasing probabilities from ``e_lo`` to ``e_hi`` over ``k`` score bins.

    ``binning="width"`` cuts ``[min, max]`` of the training scores into
    equal-width intervals; ``binning="quantile"`` uses equal-mass intervals
    (training-score quantiles), which keeps the mean treatment probability
    at ``(e_lo + e_hi) / 2`` whatever the score distribution.
    """
    s = np.asarray(train_scores, dtype=float)
    if k < 1:
        raise ValueError("k must be at least 1")
    if not 0.0 < e_lo <= e_hi < 1.0:
        raise ValueError("need 0 < e_lo <= e_hi < 1")
    lo, hi = float(np.min(s)), float(np.max(s))
    if not lo < hi:
        raise DataError("training scores have a degenerate range")
    if binning == "width":
        thresholds = tuple(lo + (hi - lo) * j / k for j in range(1, k))
    elif binning == "quantile":
        thresholds = tuple(float(q) for q in np.quantile(s, np.arange(1, k) / k))
        if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
            raise DataError("tied training scores give coinciding quantile thresholds")
    else:
        raise ValueError(f"unknown binning {binning!r}")
    if k == 1:
        probs = (e_lo,)
    else:
        probs = tuple(e_lo + (j - 1) * (e_hi - e_lo) / (k - 1) for j in range(1, k + 1))
    return PropensityMapping(thresholds, probs)


@dataclass(frozen=True)
class FullRandomization:
    """Constant treatment probability ``e`` (A/B test, possibly imbalanced)."""

    e: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.e < 1.0:
            raise ValueError("e must lie strictly inside (0, 1)")

    def probabilities(self, ds: Dataset) -> np.ndarray:
        return np.full(ds.n, float(self.e))


@dataclass(frozen=True)
class SupervisedRandomization:
    """Treatment probability from a score-to-probability mapping."""

    mapping: PropensityMapping
    scores: np.ndarray
    seed: int = 0

    def probabilities(self, ds: Dataset) -> np.ndarray:
        scores = np.asarray(self.scores, dtype=float)
        if scores.shape != (ds.n,):
            raise DataError(f"need one score per row ({ds.n}), got {scores.shape}")
        return self.mapping(scores)


def assign(ds: Dataset, scheme, repetition: int = 0) -> Dataset:
    """Draw treatments under ``scheme`` and realize outcomes from ground truth.

    Row ``i`` is treated iff ``u_i < e_i`` where ``u_i`` comes from the
    per-row stream keyed on ``(scheme.seed, repetition, row_id)``. Schemes
    sharing a seed therefore use the same uniforms row by row.
    """
    e = np.asarray(scheme.probabilities(ds), dtype=float)
    if not np.all((e > 0.0) & (e < 1.0)):
        raise DataError("assignment probabilities must lie strictly inside (0, 1)")
    u = _rng.row_uniforms(scheme.seed, _rng.ASSIGNMENT, repetition, ds.row_ids)
    treatment = (u < e).astype(np.int64)
    return ds.with_assignment(treatment, e)


def deterministic_policy(scores, threshold: float) -> np.ndarray:
    """Target (1) exactly the rows scoring strictly above ``threshold``."""
    return (np.asarray(scores, dtype=float) > threshold).astype(np.int64)


def parse_scheme(text: str, seed: int = 0, scores=None, train_scores=None,
                 k: int = 10, binning: str = "quantile"):
    """Build a scheme from ``full[:E]`` or ``supervised[:K]``."""
    name, _, param = text.partition(":")
    if name == "full":
        return FullRandomization(float(param) if param else 0.5, seed)
    if name == "supervised":
        if scores is None:
            raise ValueError("supervised randomization needs scores")
        bins = int(param) if param else k
        ref = scores if train_scores is None else train_scores
        return SupervisedRandomization(build_linear_mapping(ref, bins, binning=binning), np.asarray(scores), seed)
    raise ValueError(f"unknown scheme {text!r}")
