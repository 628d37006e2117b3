"""Uplift and business metrics plus the rank and variance tests used to
compare randomization schemes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .data import DataError, Dataset


@dataclass(frozen=True)
class ProfitSetting:
    """Gross profit per conversion ``V`` (margin times deposit) and contact cost ``c``."""

    conversion_value: float
    contact_cost: float = 1.0

    def __post_init__(self):
        for v in (self.conversion_value, self.contact_cost):
            if not (np.isfinite(v) and v > 0):
                raise ValueError("conversion value and contact cost must be finite and positive")


@dataclass(frozen=True)
class QiniResult:
    coefficient: float
    curve: np.ndarray  # rows of (fraction targeted, incremental conversions / N)


def mae_ite(predictions, truth) -> float:
    p = np.asarray(predictions, dtype=float)
    t = np.asarray(truth, dtype=float)
    if p.shape != t.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {t.shape}")
    return float(np.mean(np.abs(p - t)))


def qini(predictions, ds: Dataset, weighted: bool = False) -> QiniResult:
    """Qini curve and coefficient on an assigned dataset.

    Rows are ranked by predicted effect (descending, ties by row position)
    and the curve is evaluated at the end of each block of tied scores, so a
    constant score yields the straight line and a zero coefficient. The
    incremental gain after the first k rows is
    ``Y_T(k) - Y_C(k) * N_T(k) / N_C(k)``; with ``weighted`` the counts and
    outcome sums use inverse-propensity weights.
    """
    s = np.asarray(predictions, dtype=float)
    n = ds.n
    if s.shape != (n,):
        raise ValueError("need one prediction per row")
    t = ds.treated
    if t.all() or not t.any():
        raise DataError("both arms must be non-empty")
    order = np.lexsort((np.arange(n), -s))
    t = t[order]
    y = ds.outcome[order].astype(float)
    if weighted:
        e = ds.propensity[order]
        wt = np.where(t, 1.0 / e, 0.0)
        wc = np.where(t, 0.0, 1.0 / (1.0 - e))
    else:
        wt = t.astype(float)
        wc = 1.0 - wt
    nt = np.cumsum(wt)
    nc = np.cumsum(wc)
    yt = np.cumsum(wt * y)
    yc = np.cumsum(wc * y)

    ss = s[order]
    ends = np.flatnonzero(np.append(ss[1:] != ss[:-1], True))
    ratio = np.divide(nt[ends], nc[ends], out=np.zeros(ends.size), where=nc[ends] > 0)
    gain = yt[ends] - yc[ends] * ratio

    frac = np.concatenate([[0.0], (ends + 1) / n])
    g = np.concatenate([[0.0], gain / n])
    area = np.sum((frac[1:] - frac[:-1]) * (g[1:] + g[:-1]) / 2.0)
    chord = 0.5 * g[-1] * frac[-1]
    return QiniResult(float(area - chord), np.column_stack([frac, g]))


def campaign_stats(ds: Dataset):
    """(targeted fraction, conversion rate) of an assigned dataset."""
    return float(np.mean(ds.treatment > 0)), float(np.mean(ds.outcome))


def policy_stats(ds: Dataset, treat):
    """(targeted fraction, conversion rate) if rows flagged in ``treat`` were treated."""
    if ds.truth is None:
        raise DataError("policy evaluation needs ground truth")
    treat = np.asarray(treat) > 0
    return float(treat.mean()), float(np.mean(np.where(treat, ds.truth.y1, ds.truth.y0)))


def campaign_profit(targeted_fraction: float, conversion_rate: float,
                    setting: ProfitSetting) -> float:
    return conversion_rate * setting.conversion_value - targeted_fraction * setting.contact_cost


def experiment_profit(ds: Dataset, setting: ProfitSetting) -> float:
    """Per-customer profit of running the experiment itself."""
    return campaign_profit(*campaign_stats(ds), setting)


def policy_profit(predictions, ds_truth: Dataset, setting: ProfitSetting) -> float:
    """Per-customer profit when targeting rows with ``tau_hat * V > c``."""
    if ds_truth.truth is None:
        raise DataError("policy profit needs ground truth")
    p = np.asarray(predictions, dtype=float)
    if p.shape != (ds_truth.n,):
        raise ValueError("need one prediction per row")
    v, c = setting.conversion_value, setting.contact_cost
    y1 = ds_truth.truth.y1.astype(float)
    y0 = ds_truth.truth.y0.astype(float)
    target = p * v > c
    return float(np.mean(y0 * v + np.where(target, (y1 - y0) * v - c, 0.0)))


def midranks(values) -> np.ndarray:
    """1-based ranks with ties sharing their average rank."""
    v = np.asarray(values, dtype=float)
    order = np.argsort(v, kind="mergesort")
    sv = v[order]
    starts = np.flatnonzero(np.concatenate([[True], sv[1:] != sv[:-1]]))
    ends = np.append(starts[1:], sv.size)
    avg = (starts + ends + 1) / 2.0
    ranks = np.empty(v.size)
    ranks[order] = np.repeat(avg, ends - starts)
    return ranks


@dataclass(frozen=True)
class KruskalResult:
    h: float
    df: int
    p_value: float
    degenerate: bool = False


def kruskal_wallis(groups) -> KruskalResult:
    """Kruskal-Wallis H with mid-ranks and the usual tie correction."""
    groups = [np.asarray(g, dtype=float).ravel() for g in groups]
    if len(groups) < 2 or any(g.size == 0 for g in groups):
        raise ValueError("need at least two non-empty groups")
    df = len(groups) - 1
    allv = np.concatenate(groups)
    n = allv.size
    if np.all(allv == allv[0]):
        return KruskalResult(0.0, df, 1.0, degenerate=True)
    ranks = midranks(allv)
    h, pos = 0.0, 0
    for g in groups:
        r = ranks[pos:pos + g.size]
        h += r.sum() ** 2 / g.size
        pos += g.size
    h = 12.0 / (n * (n + 1)) * h - 3.0 * (n + 1)
    _, counts = np.unique(allv, return_counts=True)
    tie = 1.0 - np.sum(counts ** 3 - counts) / (n ** 3 - n)
    h /= tie
    return KruskalResult(float(h), df, float(stats.chi2.sf(h, df)))


@dataclass(frozen=True)
class LeveneResult:
    f: float
    df1: int
    df2: int
    p_value: float


def levene(groups, center: str = "mean") -> LeveneResult:
    """Levene test: one-way ANOVA on absolute deviations from each group's center."""
    groups = [np.asarray(g, dtype=float).ravel() for g in groups]
    if len(groups) < 2 or any(g.size < 2 for g in groups):
        raise ValueError("need at least two groups of size >= 2")
    if center == "mean":
        zs = [np.abs(g - g.mean()) for g in groups]
    elif center == "median":
        zs = [np.abs(g - np.median(g)) for g in groups]
    else:
        raise ValueError("center must be 'mean' or 'median'")
    if all(np.all(z == 0) for z in zs):
        raise ValueError("zero deviation from the center in every group")
    k = len(zs)
    n = sum(z.size for z in zs)
    grand = np.concatenate(zs).mean()
    between = sum(z.size * (z.mean() - grand) ** 2 for z in zs)
    within = sum(np.sum((z - z.mean()) ** 2) for z in zs)
    df1, df2 = k - 1, n - k
    if between == 0:
        f = 0.0
    elif within == 0:
        f = float("inf")
    else:
        f = (between / df1) / (within / df2)
    return LeveneResult(float(f), df1, df2, float(stats.f.sf(f, df1, df2)))
