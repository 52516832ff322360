"""Utility-maximal group thresholds under a classification-parity constraint.

For a constraint on a metric ``m`` (positive rate, FPR or PPV) the search is
reparameterized by the common level ``q`` that every group must attain: each
group's threshold is the one at which its monotone metric curve equals ``q``,
and the weighted aggregate utility is maximized over ``q`` by a coarse grid
followed by golden-section refinement.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import optimize

from .distributions import EmpiricalDist, dist_from_dict, dist_to_dict
from .errors import DomainError, InfeasibleConstraintError
from .policy import CostBenefit, GroupThresholdRule, optimal_threshold, utility_from_tail

COARSE_POINTS = 40
Q_TOL = 1e-10
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class ConstraintKind(str, Enum):
    UNCONSTRAINED = "none"
    DEMOGRAPHIC_PARITY = "demographic"
    FPR_PARITY = "fpr"
    PPV_PARITY = "ppv"


@dataclass(frozen=True)
class ParityConstraint:
    kind: ConstraintKind = ConstraintKind.UNCONSTRAINED
    tolerance: float = 1e-3

    def __post_init__(self):
        object.__setattr__(self, "kind", ConstraintKind(self.kind))
        if self.tolerance < 0:
            raise DomainError("tolerance must be nonnegative")


@dataclass
class SolverResult:
    rule: GroupThresholdRule
    utility: float
    group_utility: dict
    residual: float
    baseline_utility: float
    baseline_group_utility: dict
    constraint: ParityConstraint
    level: float | None = None
    group_metric: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "constraint": self.constraint.kind.value,
            "tolerance": self.constraint.tolerance,
            "thresholds": dict(self.rule.thresholds),
            "level": self.level,
            "utility": self.utility,
            "group_utility": dict(self.group_utility),
            "baseline_utility": self.baseline_utility,
            "baseline_group_utility": dict(self.baseline_group_utility),
            "residual": self.residual,
            "group_metric": dict(self.group_metric),
            "utility_cost": utility_cost_of_parity(self),
        }


class GroupCurve:
    """Metric and utility curves of one group's risk distribution, with a tail cache."""

    def __init__(self, dist):
        self.dist = dist
        self.base_rate = float(dist.mean)
        if not 0.0 < self.base_rate < 1.0:
            raise DomainError(f"group base rate {self.base_rate!r} must lie in (0, 1)")
        self.discrete = isinstance(dist, EmpiricalDist)
        self._cache = {}
        if self.discrete:
            v, w = dist.values, dist.weights
            self.candidates = np.r_[v, np.nextafter(v[-1], np.inf)]
            s0 = np.r_[np.cumsum(w[::-1])[::-1], 0.0]
            s1 = np.r_[np.cumsum((w * v)[::-1])[::-1], 0.0]
            self._cand_tail = (s0, s1)

    def tail(self, t: float):
        t = float(t)
        if t not in self._cache:
            self._cache[t] = self.dist.tail(t)
        return self._cache[t]

    def metric_from_tail(self, kind, s0, s1):
        if kind is ConstraintKind.DEMOGRAPHIC_PARITY:
            return s0
        if kind is ConstraintKind.FPR_PARITY:
            return (s0 - s1) / (1.0 - self.base_rate)
        if kind is ConstraintKind.PPV_PARITY:
            return np.where(s0 > 0, s1 / np.where(s0 > 0, s0, 1.0), np.nan)
        raise DomainError(f"no metric for constraint {kind!r}")

    def metric(self, kind, t):
        return float(self.metric_from_tail(kind, *self.tail(t)))

    def utility(self, t, cb):
        return utility_from_tail(*self.tail(t), self.base_rate, cb)

    def _ppv_top(self) -> float:
        # highest threshold at which some mass remains above it
        if self.discrete:
            return float(self.dist.values[-1])
        return float(self.dist.quantile(1.0 - 1e-9))

    def level_range(self, kind):
        if kind is ConstraintKind.PPV_PARITY:
            return self.base_rate, self.metric(kind, self._ppv_top())
        return 0.0, 1.0

    def increasing(self, kind) -> bool:
        return kind is ConstraintKind.PPV_PARITY

    def is_monotone(self, kind, n=201) -> bool:
        hi = self._ppv_top() if kind is ConstraintKind.PPV_PARITY else 1.0
        m = np.array([self.metric(kind, t) for t in np.linspace(0.0, hi, n)])
        d = np.diff(m)
        return bool(np.all(d >= -1e-12) if self.increasing(kind) else np.all(d <= 1e-12))

    def invert(self, kind, q: float) -> float:
        """Threshold at which this group's metric equals ``q``."""
        if self.discrete:
            m = np.asarray(self.metric_from_tail(kind, *self._cand_tail), dtype=float)
            err = np.abs(np.where(np.isnan(m), np.inf, m - q))
            # ties go to the highest threshold (fewest positive decisions)
            k = int(np.flatnonzero(err == err.min())[-1])
            return float(self.candidates[k])
        if kind is ConstraintKind.PPV_PARITY:
            lo, hi = 0.0, self._ppv_top()
        else:
            lo, hi = 0.0, 1.0
        f = lambda t: self.metric(kind, t) - q
        flo, fhi = f(lo), f(hi)
        if flo == 0.0:
            return lo
        if fhi == 0.0:
            return hi
        if np.sign(flo) == np.sign(fhi):
            return lo if abs(flo) < abs(fhi) else hi
        return float(optimize.brentq(f, lo, hi, xtol=1e-12, rtol=4 * np.finfo(float).eps))

    def grid_select(self, kind, q, cb, grid):
        """Grid fallback: the best-utility grid threshold whose metric is nearest ``q``."""
        m = np.array([self.metric(kind, t) for t in grid])
        err = np.abs(np.where(np.isnan(m), np.inf, m - q))
        near = np.flatnonzero(err <= err.min() + 1e-12)
        return float(grid[max(near, key=lambda i: self.utility(grid[i], cb))])


def _golden_max(f, a, b, tol=Q_TOL):
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    return (c, fc) if fc >= fd else (d, fd)


def _check_weights(dists, weights):
    if set(dists) != set(weights):
        raise DomainError("dists and weights must name the same groups")
    if not dists:
        raise DomainError("need at least one group")
    w = np.array([weights[g] for g in dists], dtype=float)
    if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-9:
        raise DomainError("group weights must be positive and sum to 1")


def solve(dists: dict, weights: dict, cb: CostBenefit, constraint: ParityConstraint = ParityConstraint(),
          method: str = "auto") -> SolverResult:
    """Best group-threshold rule subject to ``constraint``.

    ``method`` is ``"auto"`` (golden-section over the level, falling back to a
    dense grid if some metric curve is not monotone), ``"golden"`` or ``"grid"``.
    """
    _check_weights(dists, weights)
    if isinstance(constraint, (str, ConstraintKind)):
        constraint = ParityConstraint(ConstraintKind(constraint))
    kind = constraint.kind
    groups = list(dists)
    curves = {g: GroupCurve(dists[g]) for g in groups}
    t_star = optimal_threshold(cb)
    base_gu = {g: curves[g].utility(t_star, cb) for g in groups}
    base_u = sum(weights[g] * base_gu[g] for g in groups)

    if kind is ConstraintKind.UNCONSTRAINED:
        return SolverResult(GroupThresholdRule({g: t_star for g in groups}), base_u, dict(base_gu), 0.0,
                            base_u, dict(base_gu), constraint)

    ranges = {g: curves[g].level_range(kind) for g in groups}
    q_lo = max(r[0] for r in ranges.values())
    q_hi = min(r[1] for r in ranges.values())
    if q_lo > q_hi:
        g_lo = max(groups, key=lambda g: ranges[g][0])
        g_hi = min(groups, key=lambda g: ranges[g][1])
        raise InfeasibleConstraintError(
            f"{kind.value} parity infeasible: group {g_lo!r} cannot go below {ranges[g_lo][0]:.4g} "
            f"while group {g_hi!r} cannot exceed {ranges[g_hi][1]:.4g}", (g_lo, g_hi))

    if method == "auto":
        method = "golden" if all(c.is_monotone(kind) for c in curves.values()) else "grid"

    if method == "grid":
        grid = np.linspace(0.0, 1.0, 2001)

        def thresholds_at(q):
            return {g: curves[g].grid_select(kind, q, cb, grid) for g in groups}
    elif method == "golden":
        def thresholds_at(q):
            return {g: curves[g].invert(kind, q) for g in groups}
    else:
        raise DomainError(f"unknown method {method!r}")

    def objective(q):
        ts = thresholds_at(q)
        return sum(weights[g] * curves[g].utility(ts[g], cb) for g in groups)

    n_coarse = 401 if method == "grid" else COARSE_POINTS
    qs = np.linspace(q_lo, q_hi, n_coarse)
    vals = np.array([objective(q) for q in qs])
    i = int(np.argmax(vals))  # first maximum: smallest level wins ties
    best_q, best_u = float(qs[i]), float(vals[i])
    if method == "golden" and q_hi > q_lo:
        a, b = float(qs[max(i - 1, 0)]), float(qs[min(i + 1, qs.size - 1)])
        q, u = _golden_max(objective, a, b)
        if u > best_u + 1e-15 or (abs(u - best_u) <= 1e-15 and q < best_q):
            best_q, best_u = float(q), float(u)

    ts = thresholds_at(best_q)
    gm = {g: curves[g].metric(kind, ts[g]) for g in groups}
    residual = max(gm.values()) - min(gm.values())
    if residual > constraint.tolerance:
        worst = (max(gm, key=gm.get), min(gm, key=gm.get))
        raise InfeasibleConstraintError(
            f"{kind.value} parity residual {residual:.3g} exceeds tolerance {constraint.tolerance:.3g}", worst)
    gu = {g: curves[g].utility(ts[g], cb) for g in groups}
    total = sum(weights[g] * gu[g] for g in groups)
    return SolverResult(GroupThresholdRule(ts), total, gu, residual, base_u, dict(base_gu), constraint,
                        level=best_q, group_metric=gm)


def utility_cost_of_parity(result: SolverResult) -> dict:
    """Utility given up relative to the unconstrained common threshold, overall and per group."""
    groups = {g: result.baseline_group_utility[g] - result.group_utility[g] for g in result.group_utility}
    return {"aggregate": result.baseline_utility - result.utility, "groups": groups}


def load_groups(path):
    """Read ``{"groups": {name: {"weight": w, "distribution": {...}}}}``."""
    with open(path) as fh:
        obj = json.load(fh)
    entries = obj.get("groups", obj)
    dists, weights = {}, {}
    for name, entry in entries.items():
        dists[str(name)] = dist_from_dict(entry["distribution"])
        weights[str(name)] = float(entry.get("weight", 1.0))
    total = sum(weights.values())
    return dists, {g: w / total for g, w in weights.items()}


def groups_to_dict(dists, weights) -> dict:
    return {"groups": {g: {"weight": weights[g], "distribution": dist_to_dict(dists[g])} for g in dists}}
