"""Brute-force oracle checks and invariant checks, runnable without pytest."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import evaluation as ev
from . import randomization as rz
from . import simulation as sim
from .data import Column, Dataset, FeatureSchema, Truth, from_matrix
from .estimators import (ForestParams, ate_dr, ate_ipw, fit_causal_forest, fit_logistic,
                         ipw_leaf_effect)


@dataclass(frozen=True)
class Check:
    name: str
    ok: bool
    detail: str


def _numeric_schema(d: int) -> FeatureSchema:
    return FeatureSchema(tuple(Column(f"x{j}") for j in range(d)))


def fixture(n: int, rng, d: int = 2, e=None) -> Dataset:
    """Random assigned dataset with ground truth, for arithmetic checks."""
    x = rng.normal(size=(n, d))
    y0 = rng.integers(0, 2, n)
    y1 = rng.integers(0, 2, n)
    t = np.zeros(n, dtype=np.int64)
    t[: n // 2] = 1
    rng.shuffle(t)
    e = rng.uniform(0.05, 0.95, n) if e is None else np.broadcast_to(e, (n,))
    ds = from_matrix(_numeric_schema(d), x).with_truth(Truth(y1 - y0.astype(float), y1, y0))
    return ds.with_assignment(t, e)


def _hand_dataset(treatment, outcome, propensity) -> Dataset:
    n = len(treatment)
    return Dataset(_numeric_schema(1), np.zeros((n, 1)), np.asarray(treatment),
                   np.asarray(outcome), np.asarray(propensity, dtype=float))


def _close(a, b, tol):
    return abs(a - b) <= tol


def check_ipw_fixtures():
    a = ate_ipw(_hand_dataset([1, 0], [1, 1], [0.2, 0.8])).value
    b = ate_ipw(_hand_dataset([1, 1, 0, 0], [1, 1, 0, 0], [0.5] * 4)).value
    # five rows with mixed propensities, summed term by term
    t, y, e = [1, 1, 0, 0, 1], [1, 0, 1, 1, 1], [0.2, 0.5, 0.3, 0.9, 0.75]
    hand = (1 / 0.2 + 1 / 0.75 - 1 / 0.7 - 1 / 0.1) / 5
    c = ate_ipw(_hand_dataset(t, y, e)).value
    ok = _close(a, 0.0, 1e-12) and _close(b, 1.0, 1e-12) and _close(c, hand, 1e-12)
    return Check("ipw hand fixtures", ok, f"{a!r}, {b!r}, {c!r} vs {hand!r}")


def check_leaf_effect():
    ds = _hand_dataset([1, 1, 0, 0], [1, 0, 0, 0], [0.5] * 4)
    v = ipw_leaf_effect(np.arange(4), ds)
    return Check("ipw leaf effect fixture", _close(v, 0.5, 1e-12), repr(v))


def check_dr_collapse(n_fixtures: int = 100, seed: int = 0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_fixtures):
        ds = fixture(int(rng.integers(4, 60)), rng)
        worst = max(worst, abs(ate_dr(ds, 0.0, 0.0).value - ate_ipw(ds).value))
    return Check("dr with zero outcome models equals ipw", worst <= 1e-12, f"max diff {worst:.3g}")


def check_kruskal(n_fixtures: int = 20, seed: int = 1):
    h = ev.kruskal_wallis([[1, 2, 3], [4, 5, 6]]).h
    ok = _close(h, 27.0 / 7.0, 1e-12)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_fixtures):
        k = int(rng.integers(2, 5))
        groups = [np.round(rng.normal(size=int(rng.integers(2, 12))), 1) for _ in range(k)]
        ours = ev.kruskal_wallis(groups)
        ref = stats.kruskal(*groups)
        worst = max(worst, abs(ours.h - ref.statistic), abs(ours.p_value - ref.pvalue))
    return Check("kruskal-wallis vs reference", ok and worst <= 1e-10, f"H={h!r}, max diff {worst:.3g}")


def check_levene(n_fixtures: int = 20, seed: int = 2):
    # deviations {1,1,1,3} vs {0,0,0,0}: between 4.5, within 3, F = 4.5 / (3/6) = 9
    f = ev.levene([[0, 0, 0, 4], [1, 1, 1, 1]]).f
    ok = _close(f, 9.0, 1e-12)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_fixtures):
        k = int(rng.integers(2, 5))
        groups = [rng.normal(scale=rng.uniform(0.5, 2), size=int(rng.integers(3, 15))) for _ in range(k)]
        for center in ("mean", "median"):
            ours = ev.levene(groups, center)
            ref = stats.levene(*groups, center=center)
            worst = max(worst, abs(ours.f - ref.statistic), abs(ours.p_value - ref.pvalue))
    return Check("levene vs reference", ok and worst <= 1e-10, f"F={f!r}, max diff {worst:.3g}")


def check_qini_constant(seed: int = 3):
    ds = fixture(200, np.random.default_rng(seed), e=0.5)
    q = ev.qini(np.full(ds.n, 0.3), ds).coefficient
    return Check("qini of a constant score", q == 0.0, repr(q))


def check_constant_mapping(seed: int = 4):
    rng = np.random.default_rng(seed)
    ds = fixture(500, rng)
    scores = rng.normal(size=ds.n)
    full = rz.assign(ds, rz.FullRandomization(0.3, seed=9), repetition=2)
    sup = rz.assign(ds, rz.SupervisedRandomization(rz.PropensityMapping.constant(0.3), scores, seed=9),
                    repetition=2)
    ok = np.array_equal(full.treatment, sup.treatment) and np.array_equal(full.propensity, sup.propensity)
    return Check("constant mapping reduces to full randomization", ok, "bitwise")


def check_mapping_example():
    m = rz.build_linear_mapping(np.linspace(0, 1, 11), 10)
    ok = np.allclose(m.probabilities, np.linspace(0.05, 0.95, 10), atol=1e-12, rtol=0)
    m2 = rz.build_linear_mapping([0.0, 1.0], 2, 0.2, 0.8)
    ok = ok and m2([0.25, 0.75]).tolist() == [0.2, 0.8]
    return Check("linear mapping probabilities", bool(ok), str(m.probabilities))


def check_depth_zero_tree(seed: int = 5):
    rng = np.random.default_rng(seed)
    ds = fixture(400, rng, d=3)
    forest = fit_causal_forest(ds, ForestParams(trees=1, max_depth=0, seed=seed))
    tree = forest.trees[0]
    ref = ipw_leaf_effect(tree.estimation_rows, ds)
    pred = forest.predict(ds)
    worst = float(np.max(np.abs(pred - ref)))
    honest = np.intersect1d(tree.structure_rows, tree.estimation_rows).size == 0
    return Check("depth-0 tree equals estimation-half ipw", worst <= 1e-12 and honest, f"max diff {worst:.3g}")


def check_flip_example():
    schema = _numeric_schema(1)
    ds = Dataset(schema, np.zeros((1, 1)), np.ones(1, dtype=np.int64), np.ones(1, dtype=np.int64), np.full(1, 0.5))
    out = sim.make_potential_outcomes_flip(ds, np.array([0.25]), seed=0, p1_hat=np.array([0.5]))
    return Check("flip example implanted effect", _close(out.truth.ite[0], 0.25, 1e-15), repr(out.truth.ite[0]))


def check_logistic_closed_form():
    y = np.array([1, 0] * 50)
    m = fit_logistic(np.ones((100, 1)), y, ridge=0.0)
    p = m.predict_proba(np.ones((1, 1)))[0]
    return Check("logistic recovers the base rate", m.converged and _close(p, 0.5, 1e-9), repr(p))


def check_profit_identity():
    s10 = ev.ProfitSetting(10.0)
    ok = _close(ev.campaign_profit(0.5, 0.135, s10), 0.85, 1e-12)
    ok = ok and _close(ev.campaign_profit(0.0, 0.109, s10), 1.09, 1e-12)
    return Check("experiment profit identity", ok, "0.135*10-0.5, 0.109*10")


ALL_CHECKS = (check_ipw_fixtures, check_leaf_effect, check_dr_collapse, check_kruskal, check_levene,
              check_qini_constant, check_constant_mapping, check_mapping_example, check_depth_zero_tree,
              check_flip_example, check_logistic_closed_form, check_profit_identity)


def run_all() -> list:
    out = []
    for fn in ALL_CHECKS:
        try:
            c = fn()
            out.append(Check(c.name, bool(c.ok), c.detail))
        except Exception as e:  # a crashing check is a failed check
            out.append(Check(fn.__name__, False, f"{type(e).__name__}: {e}"))
    return out
