"""Confusion-matrix statistics, AUC, calibration curves and parity gaps.

Empirical metrics work on weighted ``Records``; the ``analytic_*`` functions
compute the same quantities exactly from a risk distribution, treating the risk
as a calibrated score.  Decisions are positive when ``score >= threshold``.
Rates with a zero denominator come back as NaN rather than raising.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass

import numpy as np

from .distributions import atom_auc, disc_new
from .errors import DomainError, UndefinedAUCError

NAN = float("nan")


@dataclass(frozen=True, eq=False)
class Records:
    """Weighted (score, label) records for a single group."""

    scores: np.ndarray
    labels: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        s, y, w = self.scores, self.labels, self.weights
        if not (s.shape == y.shape == w.shape) or s.ndim != 1:
            raise DomainError("scores, labels and weights must be 1-D arrays of equal length")
        if not np.all(np.isin(y, (0, 1))):
            raise DomainError("labels must be 0 or 1")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise DomainError("weights must be finite and nonnegative")
        if not np.all(np.isfinite(s)):
            raise DomainError("scores must be finite")

    @classmethod
    def from_arrays(cls, scores, labels, weights=None) -> "Records":
        s = np.asarray(scores, dtype=float).ravel()
        y = np.asarray(labels).ravel().astype(np.int8)
        w = np.ones_like(s) if weights is None else np.asarray(weights, dtype=float).ravel()
        return cls(s, y, w)

    @classmethod
    def from_risks(cls, scores, risks, weights=None) -> "Records":
        """Expected-outcome records: each item splits into label 1 (weight w*r) and label 0 (weight w*(1-r))."""
        s = np.asarray(scores, dtype=float).ravel()
        r = np.asarray(risks, dtype=float).ravel()
        w = np.ones_like(s) if weights is None else np.asarray(weights, dtype=float).ravel()
        return cls(np.r_[s, s], np.r_[np.ones(s.size, np.int8), np.zeros(s.size, np.int8)], np.r_[w * r, w * (1 - r)])

    def __len__(self):
        return self.scores.size

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())


@dataclass
class ScoredPopulation:
    """Mapping from group identifier to that group's records."""

    groups: dict[str, Records]

    def __post_init__(self):
        for g, rec in self.groups.items():
            if len(rec) == 0:
                raise DomainError(f"group {g!r} has no records")

    def __iter__(self):
        return iter(self.groups)

    def __getitem__(self, g) -> Records:
        return self.groups[g]

    def pooled(self) -> Records:
        recs = list(self.groups.values())
        return Records(np.concatenate([r.scores for r in recs]),
                       np.concatenate([r.labels for r in recs]),
                       np.concatenate([r.weights for r in recs]))


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: float
    fp: float
    tn: float
    fn: float

    @property
    def total(self) -> float:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class RatePanel:
    fpr: float
    fnr: float
    tpr: float
    tnr: float
    ppv: float
    npv: float
    positive_rate: float
    accuracy: float

    def to_dict(self) -> dict:
        return {k: _json_num(v) for k, v in asdict(self).items()}


def _json_num(x):
    return None if x is None or (isinstance(x, float) and math.isnan(x)) else float(x)


def _div(a, b):
    return a / b if b > 0 else NAN


def confusion(records: Records, threshold: float) -> ConfusionMatrix:
    d = records.scores >= threshold
    y = records.labels == 1
    w = records.weights
    return ConfusionMatrix(tp=float(w[d & y].sum()), fp=float(w[d & ~y].sum()),
                           tn=float(w[~d & ~y].sum()), fn=float(w[~d & y].sum()))


def rates(cm: ConfusionMatrix) -> RatePanel:
    tp, fp, tn, fn = cm.tp, cm.fp, cm.tn, cm.fn
    return RatePanel(
        fpr=_div(fp, fp + tn),
        fnr=_div(fn, fn + tp),
        tpr=_div(tp, fn + tp),
        tnr=_div(tn, fp + tn),
        ppv=_div(tp, tp + fp),
        npv=_div(tn, tn + fn),
        positive_rate=_div(tp + fp, cm.total),
        accuracy=_div(tp + tn, cm.total),
    )


def auc_empirical(records: Records) -> float:
    """Weighted rank statistic ``Pr(s+ > s-) + Pr(s+ = s-)/2``."""
    uniq, inv = np.unique(records.scores, return_inverse=True)
    y = records.labels == 1
    pos = np.bincount(inv, records.weights * y, minlength=uniq.size)
    neg = np.bincount(inv, records.weights * ~y, minlength=uniq.size)
    if pos.sum() <= 0 or neg.sum() <= 0:
        raise UndefinedAUCError("AUC needs at least one positive and one negative record")
    return atom_auc(uniq, pos, neg)


def balance_metrics(records: Records) -> tuple[float, float]:
    """Mean score among negatives and among positives (generalized FPR / TPR)."""
    y = records.labels == 1
    w0 = records.weights[~y].sum()
    w1 = records.weights[y].sum()
    if w0 <= 0 or w1 <= 0:
        raise UndefinedAUCError("balance metrics need both outcome classes")
    s, w = records.scores, records.weights
    return float(np.dot(s[~y], w[~y]) / w0), float(np.dot(s[y], w[y]) / w1)


@dataclass(frozen=True)
class CalibrationBin:
    lo: float
    hi: float
    mean_score: float
    positive_rate: float
    weight: float


@dataclass(frozen=True)
class CalibrationCurve:
    bins: tuple[CalibrationBin, ...]

    @property
    def max_error(self) -> float:
        """Largest ``|positive rate - mean score|`` over nonempty bins."""
        errs = [abs(b.positive_rate - b.mean_score) for b in self.bins if b.weight > 0]
        return max(errs) if errs else NAN

    def to_list(self) -> list[dict]:
        return [{k: _json_num(v) for k, v in asdict(b).items()} for b in self.bins]


def quantile_edges(scores, n_bins: int = 10) -> np.ndarray:
    """Strictly increasing bin edges at the score quantiles (deciles by default)."""
    q = np.quantile(np.asarray(scores, dtype=float), np.linspace(0, 1, n_bins + 1))
    return np.unique(q)


def calibration_curve(records: Records, bin_edges=None) -> CalibrationCurve:
    """Per-bin weighted positive rate; bins are ``[lo, hi)`` except the last, which is closed."""
    edges = quantile_edges(records.scores) if bin_edges is None else np.asarray(bin_edges, dtype=float)
    if edges.size < 2 or np.any(np.diff(edges) <= 0):
        raise DomainError("bin edges must be strictly increasing")
    s = records.scores
    if s.min() < edges[0] or s.max() > edges[-1]:
        raise DomainError("bin edges do not cover the score range")
    idx = np.clip(np.searchsorted(edges, s, side="right") - 1, 0, edges.size - 2)
    k = edges.size - 1
    w = np.bincount(idx, records.weights, minlength=k)
    ws = np.bincount(idx, records.weights * s, minlength=k)
    wy = np.bincount(idx, records.weights * (records.labels == 1), minlength=k)
    bins = tuple(
        CalibrationBin(float(edges[i]), float(edges[i + 1]), _div(ws[i], w[i]), _div(wy[i], w[i]), float(w[i]))
        for i in range(k)
    )
    return CalibrationCurve(bins)


PARITY_METRICS = ("positive_rate", "fpr", "fnr", "ppv", "npv", "auc")


def _gap(values) -> float:
    vals = [v for v in values if not math.isnan(v)]
    return max(vals) - min(vals) if len(vals) >= 2 else (0.0 if len(vals) == 1 else NAN)


def group_panels(pop: ScoredPopulation, rule) -> dict[str, dict]:
    out = {}
    for g in pop:
        rec = pop[g]
        panel = rates(confusion(rec, rule.threshold_for(g)))
        try:
            auc = auc_empirical(rec)
        except UndefinedAUCError:
            auc = NAN
        out[g] = {"rates": panel, "auc": auc}
    return out


def parity_gaps(pop: ScoredPopulation, rule) -> dict[str, float]:
    """Max between-group absolute difference of each parity metric under ``rule``."""
    panels = group_panels(pop, rule)
    gaps = {}
    for m in PARITY_METRICS:
        vals = [p["auc"] if m == "auc" else getattr(p["rates"], m) for p in panels.values()]
        gaps[m] = _gap(vals)
    return gaps


def calibration_gap(pop: ScoredPopulation, bin_edges=None, centered: bool = True) -> float:
    """Largest between-group spread of the binned residual ``positive rate - mean score``.

    Subtracting each group's mean score within a bin removes differences in how
    the groups' scores sit inside the bin, so calibrated groups give a gap near 0.
    With ``centered=False`` the spread is of the raw per-bin positive rates.
    """
    edges = quantile_edges(pop.pooled().scores) if bin_edges is None else np.asarray(bin_edges, dtype=float)
    curves = [calibration_curve(pop[g], edges) for g in pop]
    worst = 0.0
    for i in range(edges.size - 1):
        resid = [c.bins[i].positive_rate - (c.bins[i].mean_score if centered else 0.0)
                 for c in curves if c.bins[i].weight > 0]
        if len(resid) >= 2:
            worst = max(worst, max(resid) - min(resid))
    return worst


# ---------------------------------------------------------------- analytic versions

def _base_rate(dist) -> float:
    phi = float(dist.mean)
    if phi <= 0.0 or phi >= 1.0:
        raise UndefinedAUCError(f"degenerate base rate {phi!r}")
    return phi


def analytic_confusion(dist, threshold: float) -> ConfusionMatrix:
    """Expected confusion-matrix fractions for a calibrated score distributed as ``dist``."""
    phi = _base_rate(dist)
    s0, s1 = dist.tail(threshold)
    fp = max(s0 - s1, 0.0)
    return ConfusionMatrix(tp=max(s1, 0.0), fp=fp, tn=max(1.0 - phi - fp, 0.0), fn=max(phi - s1, 0.0))


def analytic_rates(dist, threshold: float) -> RatePanel:
    return rates(analytic_confusion(dist, threshold))


def analytic_balance(dist) -> tuple[float, float]:
    """``E[R | Y=0]`` and ``E[R | Y=1]`` of a calibrated risk distribution."""
    phi = _base_rate(dist)
    m2 = dist.expect(lambda r: r * r)
    return (phi - m2) / (1.0 - phi), m2 / phi


GRID_COLUMNS = ("base_rate", "auc", "threshold", "fpr", "ppv", "positive_rate")
FIG3_BASE_RATES = tuple(round(0.05 * k, 2) for k in range(1, 11))
FIG3_AUCS = (0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9)
FIG3_THRESHOLDS = (0.15, 0.25, 0.35)


def inframarginality_grid(base_rates=FIG3_BASE_RATES, aucs=FIG3_AUCS, thresholds=(0.25,)) -> list[dict]:
    """FPR, PPV and positive rate of discriminant groups over a (base rate, AUC, threshold) grid."""
    if np.isscalar(thresholds):
        thresholds = (float(thresholds),)
    rows = []
    for a in aucs:
        for m in base_rates:
            dist = disc_new(m, a)
            for t in thresholds:
                p = analytic_rates(dist, t)
                rows.append({"base_rate": float(m), "auc": float(a), "threshold": float(t),
                             "fpr": p.fpr, "ppv": p.ppv, "positive_rate": p.positive_rate})
    return rows


def write_rows_csv(rows, path, columns, fmt="{:.10g}"):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt_cell(row[c], fmt) for c in columns])


def _fmt_cell(v, fmt):
    if isinstance(v, str):
        return v
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "nan"
    return fmt.format(v)
