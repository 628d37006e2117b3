import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from suprand import evaluation as ev
from suprand import randomization as rz
from suprand import simulation as sim
from suprand.data import DataError


def test_linear_mapping_default_probabilities():
    m = rz.build_linear_mapping(np.linspace(0, 1, 101), 10, 0.05, 0.95)
    assert np.allclose(m.probabilities, [0.05, 0.15, 0.25, 0.35, 0.45, 0.55, 0.65, 0.75, 0.85, 0.95])
    assert np.allclose(m.thresholds, np.arange(1, 10) / 10)


def test_single_bin():
    m = rz.build_linear_mapping([0.0, 2.0], 1, 0.3, 0.9)
    assert m.k == 1 and np.all(m([-5, 0.5, 10]) == 0.3)


def test_two_bins_at_quartiles():
    m = rz.build_linear_mapping([0.0, 1.0], 2, 0.2, 0.8)
    assert m([0.25]).tolist() == [0.2] and m([0.75]).tolist() == [0.8]


def test_out_of_range_scores_clamp():
    m = rz.build_linear_mapping([0.0, 1.0], 10)
    assert m([-3.0, 7.0]).tolist() == [0.05, 0.95]


def test_bin_edges_are_right_closed():
    m = rz.PropensityMapping((0.5,), (0.1, 0.9))
    assert m([0.5, 0.5000001]).tolist() == [0.1, 0.9]


def test_degenerate_range_rejected():
    with pytest.raises(DataError):
        rz.build_linear_mapping([1.0, 1.0], 10)


def test_quantile_binning_balances_mass():
    s = np.random.default_rng(0).exponential(size=10000)
    m = rz.build_linear_mapping(s, 10, binning="quantile")
    assert abs(m(s).mean() - 0.5) < 1e-3
    assert np.all(np.bincount(m.bins(s), minlength=10) == 1000)


def test_mapping_validation_and_json():
    with pytest.raises(ValueError):
        rz.PropensityMapping((1.0, 0.5), (0.1, 0.2, 0.3))
    with pytest.raises(ValueError):
        rz.PropensityMapping((0.5,), (0.0, 0.5))
    m = rz.build_linear_mapping([0, 1], 4)
    assert rz.PropensityMapping.from_dict(json.loads(m.to_json())) == m


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-10, 10, allow_nan=False), min_size=2, max_size=50, unique=True),
       st.integers(1, 12))
def test_default_mapping_bounds_and_monotone(scores, k):
    m = rz.build_linear_mapping(scores, k)
    p = np.asarray(m.probabilities)
    assert np.all((p >= 0.05 - 1e-15) & (p <= 0.95 + 1e-15))
    assert np.all(np.diff(p) >= 0)
    s = np.sort(scores)
    assert np.all(np.diff(m(s)) >= 0)


def test_full_randomization_fraction(truth_40k):
    a = rz.assign(truth_40k, rz.FullRandomization(0.5, seed=1))
    assert abs(a.treated.mean() - 0.5) <= 0.01
    b = rz.assign(truth_40k, rz.FullRandomization(0.666, seed=1))
    assert abs(b.treated.mean() - 0.666) <= 0.01


def test_assignment_realizes_outcomes(truth_small):
    a = rz.assign(truth_small, rz.FullRandomization(0.5, seed=1))
    assert np.array_equal(a.outcome, np.where(a.treated, a.truth.y1, a.truth.y0))


def test_assignment_deterministic_and_repetition_keyed(truth_small):
    sch = rz.FullRandomization(0.5, seed=4)
    a, b = rz.assign(truth_small, sch, 1), rz.assign(truth_small, sch, 1)
    c = rz.assign(truth_small, sch, 2)
    assert np.array_equal(a.treatment, b.treatment)
    assert not np.array_equal(a.treatment, c.treatment)


def test_assignment_independent_of_row_order(truth_small):
    sch = rz.FullRandomization(0.5, seed=4)
    idx = np.random.default_rng(0).permutation(truth_small.n)
    a = rz.assign(truth_small, sch)
    b = rz.assign(truth_small.subset(idx), sch)
    assert np.array_equal(a.treatment[idx], b.treatment)


def test_supervised_matches_table2_direction(truth_40k):
    scores = sim.oracle_scores(truth_40k, sim.NoisyOracle(0.025, 3))
    m = rz.build_linear_mapping(scores, 10, binning="quantile")
    sup = rz.assign(truth_40k, rz.SupervisedRandomization(m, scores, seed=3))
    full = rz.assign(truth_40k, rz.FullRandomization(0.5, seed=3))
    f_s, c_s = ev.campaign_stats(sup)
    f_f, c_f = ev.campaign_stats(full)
    assert abs(f_s - 0.5) <= 0.02
    assert c_s - c_f >= 0.004


def test_logged_propensity_is_the_draw_probability(truth_small):
    scores = sim.oracle_scores(truth_small, sim.NoisyOracle(0.025, 0))
    m = rz.build_linear_mapping(scores, 10)
    a = rz.assign(truth_small, rz.SupervisedRandomization(m, scores, seed=0))
    assert np.array_equal(a.propensity, m(scores))
    assert np.all((a.propensity >= 0.05) & (a.propensity <= 0.95))


def test_monotone_targeting_across_deciles(truth_40k):
    scores = sim.oracle_scores(truth_40k, sim.NoisyOracle(0.025, 5))
    m = rz.build_linear_mapping(scores, 10)
    a = rz.assign(truth_40k, rz.SupervisedRandomization(m, scores, seed=5))
    dec = np.searchsorted(np.quantile(scores, np.arange(1, 10) / 10), scores)
    mean_e = [a.propensity[dec == k].mean() for k in range(10)]
    assert np.all(np.diff(mean_e) >= 0)
    # realized fractions follow up to sampling noise (sd of a decile difference ~ 0.011)
    frac = [a.treated[dec == k].mean() for k in range(10)]
    assert np.all(np.diff(frac) >= -0.035)
    assert frac[-1] - frac[0] > 0.3


@pytest.mark.parametrize("e", [0.1, 0.5, 0.666])
def test_constant_mapping_equals_full_bitwise(truth_small, e):
    scores = np.random.default_rng(1).normal(size=truth_small.n)
    full = rz.assign(truth_small, rz.FullRandomization(e, seed=8), 3)
    sup = rz.assign(truth_small, rz.SupervisedRandomization(rz.PropensityMapping.constant(e), scores, seed=8), 3)
    assert np.array_equal(full.treatment, sup.treatment)
    assert np.array_equal(full.propensity, sup.propensity)


def test_supervised_needs_one_score_per_row(truth_small):
    sch = rz.SupervisedRandomization(rz.PropensityMapping.constant(0.5), np.zeros(3))
    with pytest.raises(DataError):
        rz.assign(truth_small, sch)


def test_full_rejects_bad_probability():
    with pytest.raises(ValueError):
        rz.FullRandomization(1.0)


def test_deterministic_policy():
    s = np.array([0.04, -1.0, 0.5])
    assert rz.deterministic_policy(s, np.inf).tolist() == [0, 0, 0]
    assert rz.deterministic_policy(s, -np.inf).tolist() == [1, 1, 1]
    assert rz.deterministic_policy([0.04], 1 / 30)[0] == 1


def test_parse_scheme():
    s = np.linspace(0, 1, 50)
    assert rz.parse_scheme("full:0.666").e == 0.666
    assert rz.parse_scheme("full").e == 0.5
    sup = rz.parse_scheme("supervised:5", scores=s)
    assert sup.mapping.k == 5
    with pytest.raises(ValueError):
        rz.parse_scheme("bandit")
    with pytest.raises(ValueError):
        rz.parse_scheme("supervised")
