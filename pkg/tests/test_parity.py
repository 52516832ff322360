import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fairrisk.distributions import EmpiricalDist, disc_new
from fairrisk.errors import DomainError, InfeasibleConstraintError
from fairrisk.metrics import analytic_rates
from fairrisk.parity import (ConstraintKind, GroupCurve, ParityConstraint, groups_to_dict, load_groups, solve,
                             utility_cost_of_parity)
from fairrisk.policy import CostBenefit, pretrial_costs

BROWARD = {"black": disc_new(0.21, 0.76), "white": disc_new(0.12, 0.75)}
HALF = {"black": 0.5, "white": 0.5}
CB = pretrial_costs(1, 4)


@pytest.fixture(scope="module")
def broward():
    return {k: solve(BROWARD, HALF, CB, ParityConstraint(k)) for k in ("fpr", "demographic")}


def test_unconstrained_is_common_optimal_threshold():
    res = solve(BROWARD, HALF, CB)
    assert res.rule.thresholds == {"black": 0.25, "white": 0.25}
    assert utility_cost_of_parity(res)["aggregate"] == 0


@pytest.mark.parametrize("kind", ["demographic", "fpr", "ppv"])
def test_identical_groups_need_no_adjustment(kind):
    d = disc_new(0.3, 0.7)
    res = solve({"a": d, "b": d}, {"a": 0.4, "b": 0.6}, CB, ParityConstraint(kind))
    for t in res.rule.thresholds.values():
        assert abs(t - 0.25) < 1e-6
    cost = utility_cost_of_parity(res)
    assert abs(cost["aggregate"]) < 1e-9 and all(abs(v) < 1e-9 for v in cost["groups"].values())


def test_broward_matches_frozen_grid_oracle(broward, frozen):
    cases = {c["constraint"]: c for c in frozen["parity_grid"]["results"] if c["name"] == "broward"}
    for kind, res in broward.items():
        for g, t in cases[kind]["thresholds"].items():
            assert abs(res.rule.thresholds[g] - t) <= 0.002
        assert res.utility >= cases[kind]["utility"] - 1e-9
        assert res.residual <= 1e-3


def test_broward_ordering_follows_the_fpr_gap(broward):
    # at the common threshold black FPR is far above white FPR, so parity raises
    # the black threshold and lowers the white one
    for res in broward.values():
        t = res.rule.thresholds
        assert t["white"] < 0.25 < t["black"]
    assert broward["demographic"].rule.thresholds["black"] >= broward["fpr"].rule.thresholds["black"]


def test_black_below_white_threshold_cannot_equalize_fpr():
    # FPR is nonincreasing in t: any t_b <= 0.25 <= t_w leaves a gap of at least this much
    fb = analytic_rates(BROWARD["black"], 0.25).fpr
    fw = analytic_rates(BROWARD["white"], 0.25).fpr
    assert fb - fw > 0.15
    for tb in np.linspace(0.05, 0.25, 9):
        for tw in np.linspace(0.25, 0.6, 9):
            gap = analytic_rates(BROWARD["black"], tb).fpr - analytic_rates(BROWARD["white"], tw).fpr
            assert gap >= fb - fw - 1e-12


def test_broward_parity_hurts_both_groups(broward):
    cost = utility_cost_of_parity(broward["fpr"])
    assert cost["aggregate"] > 0
    assert all(v > 0 for v in cost["groups"].values())


def test_cost_scales_with_cost_benefit():
    a = solve(BROWARD, HALF, CB, ParityConstraint("fpr"))
    b = solve(BROWARD, HALF, CB.scaled(3.0), ParityConstraint("fpr"))
    ca, cb = utility_cost_of_parity(a), utility_cost_of_parity(b)
    assert cb["aggregate"] == pytest.approx(3 * ca["aggregate"], rel=1e-6)
    for g in ca["groups"]:
        assert cb["groups"][g] == pytest.approx(3 * ca["groups"][g], rel=1e-6)


@given(st.floats(0.05, 0.6), st.floats(0.55, 0.9), st.floats(0.05, 0.6), st.floats(0.55, 0.9),
       st.sampled_from(["demographic", "fpr", "ppv"]))
@settings(max_examples=6, deadline=None)
def test_feasible_and_dominated(m1, a1, m2, a2, kind):
    dists = {"a": disc_new(m1, a1), "b": disc_new(m2, a2)}
    try:
        res = solve(dists, {"a": 0.5, "b": 0.5}, CB, ParityConstraint(kind))
    except InfeasibleConstraintError:
        return
    assert res.residual <= 1e-3
    assert res.utility <= res.baseline_utility + 1e-9


def test_golden_and_grid_agree():
    g = solve(BROWARD, HALF, CB, ParityConstraint("fpr"), method="golden")
    d = solve(BROWARD, HALF, CB, ParityConstraint("fpr"), method="grid")
    for k in g.rule.thresholds:
        assert abs(g.rule.thresholds[k] - d.rule.thresholds[k]) < 2e-3
    # the grid picks from discrete thresholds and may spend part of the tolerance
    assert abs(g.utility - d.utility) < 1e-5
    assert g.residual <= 1e-9 and d.residual <= 1e-3


def test_empirical_groups():
    rng = np.random.default_rng(0)
    dists = {"a": EmpiricalDist.from_atoms(rng.beta(2, 6, 2000)), "b": EmpiricalDist.from_atoms(rng.beta(2, 9, 2000))}
    res = solve(dists, {"a": 0.5, "b": 0.5}, CB, ParityConstraint("demographic"))
    assert res.residual <= 1e-3


def test_ppv_infeasible_names_groups():
    dists = {"low": EmpiricalDist.from_atoms([0.1, 0.2]), "high": EmpiricalDist.from_atoms([0.5, 0.6])}
    with pytest.raises(InfeasibleConstraintError) as info:
        solve(dists, {"low": 0.5, "high": 0.5}, CB, ParityConstraint("ppv"))
    assert set(info.value.groups) == {"low", "high"}
    assert "low" in str(info.value) and "high" in str(info.value)


def test_weights_validated():
    with pytest.raises(DomainError):
        solve(BROWARD, {"black": 0.7, "white": 0.7}, CB)
    with pytest.raises(DomainError):
        solve(BROWARD, {"black": 1.0}, CB)
    with pytest.raises(DomainError):
        ParityConstraint("fpr", tolerance=-1)


def test_metric_curves_monotone():
    c = GroupCurve(BROWARD["black"])
    for kind in (ConstraintKind.DEMOGRAPHIC_PARITY, ConstraintKind.FPR_PARITY, ConstraintKind.PPV_PARITY):
        assert c.is_monotone(kind)
    q = 0.2
    t = c.invert(ConstraintKind.FPR_PARITY, q)
    assert abs(c.metric(ConstraintKind.FPR_PARITY, t) - q) < 1e-9


def test_group_file_round_trip(tmp_path):
    p = tmp_path / "groups.json"
    p.write_text(json.dumps(groups_to_dict(BROWARD, HALF)))
    dists, weights = load_groups(p)
    assert weights == HALF
    assert dists["black"].base_rate == 0.21 and dists["white"].auc == 0.75


def test_result_serializes():
    res = solve(BROWARD, HALF, CostBenefit(0, 3, 0, 1), ParityConstraint("demographic"))
    obj = res.to_dict()
    assert obj["constraint"] == "demographic"
    assert set(obj["thresholds"]) == {"black", "white"}
    assert obj["utility_cost"]["aggregate"] >= 0
