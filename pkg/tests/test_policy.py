import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fairrisk.distributions import EmpiricalDist, disc_new, sample
from fairrisk.errors import DomainError
from fairrisk.metrics import Records, ScoredPopulation
from fairrisk.policy import (CostBenefit, GroupThresholdRule, anti_classification_check, apply_rule,
                             expected_utility, load_rule, optimal_threshold, pretrial_costs)

costs = st.tuples(*[st.floats(0, 10)] * 4).filter(lambda c: sum(c) > 1e-3)


def test_symmetric_costs():
    assert optimal_threshold(CostBenefit(1, 1, 1, 1)) == 0.5


@pytest.mark.parametrize("c_det,b_crime,t", [(1, 4, 0.25), (1, 2, 0.5), (0, 1, 0.0)])
def test_pretrial_thresholds(c_det, b_crime, t):
    cb = pretrial_costs(c_det, b_crime)
    assert (cb.b00, cb.b11, cb.c01, cb.c10) == (0, b_crime - c_det, 0, c_det)
    assert optimal_threshold(cb) == t


def test_cost_validation():
    with pytest.raises(DomainError):
        CostBenefit(0, 0, 0, 0)
    with pytest.raises(DomainError):
        CostBenefit(-1, 1, 1, 1)


def test_pretrial_flags_never_beneficial_detention():
    with pytest.warns(UserWarning):
        pretrial_costs(2, 1)


@given(costs, st.floats(0.01, 100))
def test_threshold_scale_invariant(c, lam):
    cb = CostBenefit(*c)
    assert optimal_threshold(cb.scaled(lam)) == pytest.approx(optimal_threshold(cb), abs=1e-12)


def test_utility_when_everyone_has_zero_risk():
    cb = CostBenefit(2, 1, 1, 1)
    assert expected_utility(EmpiricalDist.point_mass(0.0), 0.5, cb) == 2.0


@given(costs)
def test_indifference_at_threshold(c):
    cb = CostBenefit(*c)
    t = optimal_threshold(cb)
    assert float(cb.u0(t)) == pytest.approx(float(cb.u1(t)), abs=1e-9)


def test_pretrial_threshold_optimal_on_grid():
    d, cb = disc_new(0.21, 0.76), pretrial_costs(1, 4)
    best = expected_utility(d, 0.25, cb)
    for t in np.linspace(0, 1, 101):
        assert best >= expected_utility(d, t, cb) - 1e-12


def test_empirical_utility_converges_to_analytic():
    d, cb = disc_new(0.21, 0.76), pretrial_costs(1, 4)
    r, y = sample(d, 400_000, seed=8)
    recs = Records.from_arrays(r, y)
    u = np.where(r >= 0.25, cb.u1(r), cb.u0(r))
    se = u.std(ddof=1) / np.sqrt(u.size)
    assert abs(expected_utility(recs, 0.25, cb) - expected_utility(d, 0.25, cb)) <= 3 * se


# ---------------------------------------------------------------- rules

def pop_of(**scores):
    return ScoredPopulation({g: Records.from_arrays(s, [0] * len(s)) for g, s in scores.items()})


def test_apply_single_threshold():
    out = apply_rule(pop_of(a=[0.4, 0.6]), GroupThresholdRule.single(0.5))
    assert out["a"].tolist() == [0, 1]


def test_apply_group_thresholds():
    out = apply_rule(pop_of(black=[0.25], white=[0.25]), GroupThresholdRule({"black": 0.17, "white": 0.31}))
    assert (out["black"].tolist(), out["white"].tolist()) == ([1], [0])


def test_apply_empty_and_uncovered():
    assert apply_rule(ScoredPopulation({}), GroupThresholdRule.single(0.5)) == {}
    with pytest.raises(DomainError):
        apply_rule(pop_of(c=[0.2]), GroupThresholdRule({"a": 0.3}))


def test_rule_flags_and_validation():
    assert GroupThresholdRule({"a": 0.3, "b": 0.3}).single_threshold
    assert not GroupThresholdRule({"a": 0.3}, default=0.4).single_threshold
    with pytest.raises(DomainError):
        GroupThresholdRule({"a": float("nan")})


def test_rule_json(tmp_path):
    p = tmp_path / "rule.json"
    p.write_text(json.dumps({"thresholds": {"a": 0.2}, "default": 0.3}))
    rule = load_rule(p)
    assert rule.threshold_for("a") == 0.2 and rule.threshold_for("zzz") == 0.3
    assert GroupThresholdRule.from_dict(rule.to_dict()) == rule


# ---------------------------------------------------------------- anti-classification

def test_anti_classification_pass():
    assert anti_classification_check(GroupThresholdRule({"A": 0.3, "B": 0.3})).passed
    assert anti_classification_check(GroupThresholdRule.single(0.25)).passed


def test_anti_classification_witness():
    res = anti_classification_check(GroupThresholdRule({"A": 0.17, "B": 0.31}))
    assert not res.passed
    w = res.witness
    assert w["score"] == pytest.approx(0.24)
    assert 0.17 < w["score"] < 0.31
    assert (w["positive_group"], w["negative_group"]) == ("A", "B")


@given(st.dictionaries(st.sampled_from("abcd"), st.sampled_from([0.1, 0.2, 0.3]), min_size=1))
@settings(max_examples=50)
def test_anti_classification_iff_single_threshold(th):
    rule = GroupThresholdRule(th)
    res = anti_classification_check(rule)
    assert res.passed == (max(th.values()) - min(th.values()) == 0)
    if not res.passed:
        s = res.witness["score"]
        assert s >= rule.threshold_for(res.witness["positive_group"])
        assert s < rule.threshold_for(res.witness["negative_group"])
