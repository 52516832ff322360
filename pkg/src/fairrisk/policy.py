"""Cost-benefit utilities, threshold rules and the anti-classification check."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .metrics import Records, ScoredPopulation


@dataclass(frozen=True)
class CostBenefit:
    """Per-decision utilities: b00 (true negative), b11 (true positive),
    c01 (false negative) and c10 (false positive)."""

    b00: float = 0.0
    b11: float = 0.0
    c01: float = 0.0
    c10: float = 0.0
    # set only by pretrial_costs when b_crime < c_det, which makes b11 negative
    allow_negative_b11: bool = field(default=False, compare=False, repr=False)

    def __post_init__(self):
        vals = (self.b00, self.b11, self.c01, self.c10)
        if not all(np.isfinite(v) for v in vals):
            raise DomainError("cost-benefit entries must be finite")
        checked = (self.b00, self.c01, self.c10) if self.allow_negative_b11 else vals
        if any(v < 0 for v in checked):
            raise DomainError(f"cost-benefit entries must be nonnegative: {vals}")
        if self.denominator <= 0:
            raise DomainError("at least one cost-benefit entry must be positive")

    @property
    def denominator(self) -> float:
        return self.b00 + self.b11 + self.c01 + self.c10

    def scaled(self, lam: float) -> "CostBenefit":
        return CostBenefit(lam * self.b00, lam * self.b11, lam * self.c01, lam * self.c10,
                           allow_negative_b11=self.allow_negative_b11)

    def u0(self, r):
        """Expected utility of the negative action at risk ``r``."""
        return self.b00 * (1 - r) - self.c01 * r

    def u1(self, r):
        """Expected utility of the positive action at risk ``r``."""
        return -self.c10 * (1 - r) + self.b11 * r

    def to_dict(self) -> dict:
        return {"b00": self.b00, "b11": self.b11, "c01": self.c01, "c10": self.c10}

    @classmethod
    def from_dict(cls, obj: dict) -> "CostBenefit":
        return cls(float(obj.get("b00", 0.0)), float(obj.get("b11", 0.0)),
                   float(obj.get("c01", 0.0)), float(obj.get("c10", 0.0)))


def optimal_threshold(cb: CostBenefit) -> float:
    """Risk at which the positive action becomes optimal: ``(b00 + c10) / (b00 + b11 + c01 + c10)``."""
    if cb.denominator <= 0:
        raise DomainError("threshold undefined: all cost-benefit entries are zero")
    return (cb.b00 + cb.c10) / cb.denominator


def pretrial_costs(c_det: float, b_crime: float) -> CostBenefit:
    """Detention cost / crime-prevention benefit parameterization.

    True positives are worth ``b_crime - c_det``, false positives cost ``c_det``,
    releases are worth nothing either way; the optimal threshold is ``c_det / b_crime``.
    """
    if c_det < 0 or b_crime < 0:
        raise DomainError("c_det and b_crime must be nonnegative")
    if b_crime < c_det:
        warnings.warn("b_crime < c_det: detention is never beneficial (threshold above 1)", stacklevel=2)
        return CostBenefit(0.0, b_crime - c_det, 0.0, c_det, allow_negative_b11=True)
    return CostBenefit(0.0, b_crime - c_det, 0.0, c_det)


def utility_from_tail(s0: float, s1: float, base_rate: float, cb: CostBenefit) -> float:
    """Per-capita utility of detaining the mass ``s0 = Pr(R >= t)`` whose risk integral is ``s1``."""
    tp = s1
    fp = s0 - s1
    fn = base_rate - s1
    tn = 1.0 - base_rate - fp
    return cb.b00 * tn - cb.c01 * fn - cb.c10 * fp + cb.b11 * tp


def expected_utility(dist, threshold: float, cb: CostBenefit) -> float:
    """Per-capita expected utility of thresholding true risk at ``threshold``.

    ``dist`` is a risk distribution, or ``Records`` whose scores are read as
    risks (the weighted mean of per-record ``u(d)``).
    """
    if isinstance(dist, Records):
        s, w = dist.scores, dist.weights
        u = np.where(s >= threshold, cb.u1(s), cb.u0(s))
        return float(np.dot(u, w) / w.sum())
    s0, s1 = dist.tail(threshold)
    return utility_from_tail(s0, s1, float(dist.mean), cb)


@dataclass(frozen=True)
class GroupThresholdRule:
    """Group-specific thresholds with an optional default for unlisted groups."""

    thresholds: dict = field(default_factory=dict)
    default: float | None = None

    def __post_init__(self):
        vals = list(self.thresholds.values()) + ([self.default] if self.default is not None else [])
        if not all(np.isfinite(v) for v in vals):
            raise DomainError("thresholds must be finite")

    @classmethod
    def single(cls, t: float) -> "GroupThresholdRule":
        return cls({}, float(t))

    @property
    def all_thresholds(self) -> list[float]:
        return list(self.thresholds.values()) + ([self.default] if self.default is not None else [])

    @property
    def single_threshold(self) -> bool:
        vals = self.all_thresholds
        return len(set(vals)) <= 1

    def threshold_for(self, group) -> float:
        if group in self.thresholds:
            return self.thresholds[group]
        if self.default is None:
            raise DomainError(f"rule has no threshold for group {group!r} and no default")
        return self.default

    def to_dict(self) -> dict:
        return {"thresholds": dict(self.thresholds), "default": self.default}

    @classmethod
    def from_dict(cls, obj: dict) -> "GroupThresholdRule":
        default = obj.get("default")
        return cls({str(k): float(v) for k, v in obj.get("thresholds", {}).items()},
                   None if default is None else float(default))


def load_rule(path) -> GroupThresholdRule:
    with open(path) as fh:
        return GroupThresholdRule.from_dict(json.load(fh))


def apply_rule(pop: ScoredPopulation, rule: GroupThresholdRule) -> dict:
    """Per-group 0/1 decisions: 1 iff score >= the group's threshold."""
    return {g: (pop[g].scores >= rule.threshold_for(g)).astype(np.int8) for g in pop}


@dataclass(frozen=True)
class AntiClassificationResult:
    passed: bool
    witness: dict | None = None

    def to_dict(self) -> dict:
        return {"passed": self.passed, "witness": self.witness}


def anti_classification_check(rule: GroupThresholdRule) -> AntiClassificationResult:
    """Pass iff every group faces the same threshold.

    Otherwise the witness is a score at the midpoint of the extreme thresholds,
    which the low-threshold group acts on and the high-threshold group does not.
    """
    entries = dict(rule.thresholds)
    if rule.default is not None:
        entries.setdefault("<default>", rule.default)
    if len(set(entries.values())) <= 1:
        return AntiClassificationResult(True)
    lo_g = min(entries, key=lambda g: (entries[g], str(g)))
    hi_g = max(entries, key=lambda g: (entries[g], str(g)))
    score = 0.5 * (entries[lo_g] + entries[hi_g])
    return AntiClassificationResult(False, {
        "score": score,
        "positive_group": lo_g,
        "positive_group_threshold": entries[lo_g],
        "negative_group": hi_g,
        "negative_group_threshold": entries[hi_g],
    })
