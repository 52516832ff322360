"""Calibrated score constructions that discard information.

``pool_tails`` merges low- and high-risk mass into one cell (progressive
information degradation), ``redline_contract`` pools a central quantile band
(the redlining contraction), and ``coarsen`` bins scores into categories with
group-specific cutpoints.  Every pooled cell is rescored at the mean true risk
of its members, so outputs stay calibrated by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .distributions import DEFAULT_ATOMS, EmpiricalDist, discretize, dist_auc
from .errors import DomainError, InfeasibleConstraintError
from .metrics import NAN, Records, ScoredPopulation, _json_num, analytic_rates

SCHEDULES = ("mean_balanced", "equal_mass")
DEGRADE_TOL = 1e-4
COARSE_TOL = 0.02
_DUST = 1e-14


@dataclass(frozen=True)
class PoolingSchedule:
    """Pooled-mass fraction ``lam`` per tail, in [0, 0.5]; total pooled mass is ``2 * lam``.

    ``kind="mean_balanced"`` splits the pooled mass between the two tails so the
    pooled cell's mean equals the distribution mean; ``"equal_mass"`` takes
    ``lam`` from each tail.
    """

    lam: float
    kind: str = "mean_balanced"

    def __post_init__(self):
        if not (0.0 <= self.lam <= 0.5) or math.isnan(self.lam):
            raise DomainError(f"pooling fraction must lie in [0, 0.5], got {self.lam!r}")
        if self.kind not in SCHEDULES:
            raise DomainError(f"unknown pooling schedule {self.kind!r}; choose from {SCHEDULES}")


@dataclass(frozen=True, eq=False)
class PoolMap:
    """Sub-atoms of the input (true risk, mass) and the score each receives."""

    risks: np.ndarray
    weights: np.ndarray
    scores: np.ndarray

    def to_dist(self) -> EmpiricalDist:
        return EmpiricalDist.from_atoms(self.scores, self.weights)

    def cell_errors(self) -> np.ndarray:
        """Per output score, ``|score - mean true risk of the mass assigned to it|``."""
        uniq, inv = np.unique(self.scores, return_inverse=True)
        w = np.bincount(inv, self.weights)
        wr = np.bincount(inv, self.weights * self.risks)
        return np.abs(wr / w - uniq)

    def as_records(self) -> Records:
        return Records.from_risks(self.scores, self.risks, self.weights)


def _band_take(w, lo, hi):
    """Mass of each atom lying in the cumulative-mass interval ``[lo, hi]``."""
    cw = np.cumsum(w)
    return np.clip(np.minimum(cw, hi) - np.maximum(cw - w, lo), 0.0, None)


def _pool(v, w, take):
    rest = np.clip(w - take, 0.0, None)
    pooled = take.sum()
    keep = rest > _DUST
    if pooled <= _DUST:
        return PoolMap(v[keep], rest[keep], v[keep].copy())
    cell_mean = float(np.dot(take, v) / pooled)
    sel = take > _DUST
    risks = np.r_[v[keep], v[sel]]
    weights = np.r_[rest[keep], take[sel]]
    scores = np.r_[v[keep], np.full(int(sel.sum()), cell_mean)]
    return PoolMap(risks, weights, scores)


def _atoms(dist, n_atoms):
    emp = discretize(dist, n_atoms)
    return emp.values, emp.weights


def pool_tails_map(dist, lam: float, schedule: str = "mean_balanced", n_atoms: int = DEFAULT_ATOMS) -> PoolMap:
    sched = PoolingSchedule(float(lam), schedule)
    v, w = _atoms(dist, n_atoms)
    mass = min(2.0 * sched.lam, 1.0)
    if mass == 0.0:
        return PoolMap(v.copy(), w.copy(), v.copy())
    if mass >= 1.0 - 1e-15:
        return _pool(v, w, w.copy())
    if sched.kind == "equal_mass":
        a = b = sched.lam
    else:
        mu = float(np.dot(v, w))
        lo_take = lambda a: _band_take(w, 0.0, a)
        hi_take = lambda b: _band_take(w, 1.0 - b, 1.0)
        # pooled risk integral is increasing in the high-tail share b
        f = lambda b: float(np.dot(lo_take(mass - b) + hi_take(b), v)) - mass * mu
        fa, fb = f(0.0), f(mass)
        if fa >= 0.0:
            b = 0.0
        elif fb <= 0.0:
            b = mass
        else:
            b = optimize.brentq(f, 0.0, mass, xtol=1e-15, rtol=4 * np.finfo(float).eps)
        a = mass - b
    take = _band_take(w, 0.0, a) + _band_take(w, 1.0 - b, 1.0)
    return _pool(v, w, np.minimum(take, w))


def pool_tails(dist, lam: float, schedule: str = "mean_balanced", n_atoms: int = DEFAULT_ATOMS) -> EmpiricalDist:
    """Merge low- and high-risk mass (``2 * lam`` in total) into one cell scored at its mean risk."""
    return pool_tails_map(dist, lam, schedule, n_atoms).to_dist()


def degradation_curve(dist, threshold: float, lambda_grid, schedule: str = "mean_balanced",
                      n_atoms: int = DEFAULT_ATOMS) -> list[dict]:
    """Rows of (lambda, auc, fpr, positive_rate) for ``pool_tails(dist, lambda)`` at ``threshold``."""
    grid = np.asarray(lambda_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or np.any((grid < 0) | (grid > 0.5)):
        raise DomainError("lambda grid must be a nonempty 1-D array within [0, 0.5]")
    base = discretize(dist, n_atoms)
    rows = []
    for lam in grid:
        pooled = pool_tails(base, float(lam), schedule)
        p = analytic_rates(pooled, threshold)
        rows.append({"lambda": float(lam), "auc": _safe_auc(pooled), "fpr": p.fpr,
                     "positive_rate": p.positive_rate})
    return rows


def _safe_auc(dist) -> float:
    # a point mass has both classes present but no ranking power
    return 0.5 if dist.values.size == 1 else dist_auc(dist)


@dataclass(frozen=True)
class DegradationResult:
    lam: float
    auc: float
    fpr: float
    target_fpr: float

    def to_dict(self) -> dict:
        return {"lambda": self.lam, "auc": self.auc, "fpr": self.fpr, "target_fpr": self.target_fpr}


def find_fpr_parity_degradation(target_fpr: float, dist, threshold: float, tol: float = DEGRADE_TOL,
                                schedule: str = "mean_balanced", n_atoms: int = DEFAULT_ATOMS) -> DegradationResult:
    """Smallest-effort pooling ``lam`` whose FPR at ``threshold`` is within ``tol`` of ``target_fpr``."""
    base = discretize(dist, n_atoms)

    def fpr(lam):
        return analytic_rates(pool_tails(base, lam, schedule), threshold).fpr

    def done(lam):
        pooled = pool_tails(base, lam, schedule)
        return DegradationResult(float(lam), _safe_auc(pooled), analytic_rates(pooled, threshold).fpr, target_fpr)

    f0, f1 = fpr(0.0), fpr(0.5)
    if abs(f0 - target_fpr) <= tol:
        return done(0.0)
    if abs(f1 - target_fpr) <= tol and not (min(f0, f1) < target_fpr < max(f0, f1)):
        return done(0.5)
    if not (min(f0, f1) - tol <= target_fpr <= max(f0, f1) + tol):
        raise InfeasibleConstraintError(
            f"target FPR {target_fpr:.4g} outside the degradation range [{min(f0, f1):.4g}, {max(f0, f1):.4g}]")
    lo, hi, sign = 0.0, 0.5, np.sign(f1 - f0)
    while hi - lo > 1e-13:
        mid = 0.5 * (lo + hi)
        fm = fpr(mid)
        if abs(fm - target_fpr) <= tol:
            return done(mid)
        if sign * (fm - target_fpr) < 0:
            lo = mid
        else:
            hi = mid
    raise InfeasibleConstraintError(
        f"FPR does not pass within {tol:g} of {target_fpr:.4g} (degradation curve is discontinuous here)")


def redline_contract_map(dist, lam: float, n_atoms: int = DEFAULT_ATOMS) -> PoolMap:
    if not (0.0 <= lam <= 1.0):
        raise DomainError(f"contraction intensity must lie in [0, 1], got {lam!r}")
    v, w = _atoms(dist, n_atoms)
    if lam == 0.0:
        return PoolMap(v.copy(), w.copy(), v.copy())
    if lam == 1.0:
        return _pool(v, w, w.copy())
    take = _band_take(w, 0.5 * (1.0 - lam), 0.5 * (1.0 + lam))
    return _pool(v, w, np.minimum(take, w))


def redline_contract(dist, lam: float, n_atoms: int = DEFAULT_ATOMS) -> EmpiricalDist:
    """Pool the symmetric quantile pairs ``(p, 1-p)`` with ``|p - 1/2| <= lam/2`` into one cell at its mean.

    ``lam = 0`` is the identity and ``lam = 1`` a point mass at the mean.
    """
    return redline_contract_map(dist, lam, n_atoms).to_dist()


# ---------------------------------------------------------------- coarse categories

def _default_labels(k):
    return ("low", "medium", "high") if k == 3 else tuple(f"c{i}" for i in range(k))


@dataclass(frozen=True)
class CoarseScheme:
    """Per-group increasing cutpoints; ``K - 1`` cutpoints define ``K`` categories."""

    cutpoints: dict
    labels: tuple = ()

    def __post_init__(self):
        if not self.cutpoints:
            raise DomainError("scheme needs at least one group")
        cuts = {g: tuple(float(c) for c in cs) for g, cs in self.cutpoints.items()}
        sizes = {len(c) for c in cuts.values()}
        if len(sizes) != 1 or 0 in sizes:
            raise DomainError("every group needs the same positive number of cutpoints")
        for g, cs in cuts.items():
            if any(b <= a for a, b in zip(cs, cs[1:])):
                raise DomainError(f"cutpoints for group {g!r} must be strictly increasing")
        object.__setattr__(self, "cutpoints", cuts)
        k = sizes.pop() + 1
        labels = tuple(self.labels) or _default_labels(k)
        if len(labels) != k:
            raise DomainError(f"need {k} category labels, got {len(labels)}")
        object.__setattr__(self, "labels", labels)

    @property
    def n_categories(self) -> int:
        return len(self.labels)

    def categorize(self, group, scores) -> np.ndarray:
        return np.searchsorted(np.asarray(self.cutpoints[group]), scores, side="right").astype(np.int8)

    def to_dict(self) -> dict:
        return {"cutpoints": {g: list(c) for g, c in self.cutpoints.items()}, "labels": list(self.labels)}

    @classmethod
    def from_dict(cls, obj) -> "CoarseScheme":
        return cls(obj["cutpoints"], tuple(obj.get("labels", ())))


@dataclass
class CoarsenReport:
    categories: dict
    table: list
    calibration_gap: float
    top_cutpoint_gap: float
    witness: dict | None = None
    tolerance: float = COARSE_TOL
    scheme: CoarseScheme | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        rows = [{k: (_json_num(v) if isinstance(v, float) else v) for k, v in r.items()} for r in self.table]
        return {"scheme": self.scheme.to_dict() if self.scheme else None, "table": rows,
                "calibration_gap": _json_num(self.calibration_gap), "top_cutpoint_gap": self.top_cutpoint_gap,
                "tolerance": self.tolerance, "witness": self.witness}


def coarsen(pop: ScoredPopulation, scheme: CoarseScheme, tol: float = COARSE_TOL) -> CoarsenReport:
    """Assign categories by group cutpoints and report per-category positive rates.

    The calibration gap is the largest between-group spread of a category's
    positive rate.  When it is within ``tol`` yet the top-category cutpoints
    differ, the report carries a witness score that lands in the top category
    for one group and below it for another.
    """
    if set(pop) != set(scheme.cutpoints):
        missing = sorted(set(pop) ^ set(scheme.cutpoints), key=str)
        raise DomainError(f"scheme and population groups differ: {missing}")
    cats, table = {}, []
    k = scheme.n_categories
    rates = {c: [] for c in range(k)}
    for g in pop:
        rec = pop[g]
        c = scheme.categorize(g, rec.scores)
        cats[g] = c
        w_all = np.bincount(c, rec.weights, minlength=k)
        w_pos = np.bincount(c, rec.weights * (rec.labels == 1), minlength=k)
        w_s = np.bincount(c, rec.weights * rec.scores, minlength=k)
        for i in range(k):
            rate = float(w_pos[i] / w_all[i]) if w_all[i] > 0 else NAN
            table.append({"group": g, "category": scheme.labels[i], "weight": float(w_all[i]),
                          "mean_score": float(w_s[i] / w_all[i]) if w_all[i] > 0 else NAN,
                          "positive_rate": rate})
            if w_all[i] > 0:
                rates[i].append(rate)
    spreads = [max(r) - min(r) for r in rates.values() if len(r) >= 2]
    gap = max(spreads) if spreads else 0.0
    tops = {g: cs[-1] for g, cs in scheme.cutpoints.items()}
    lo_g = min(tops, key=lambda g: (tops[g], str(g)))
    hi_g = max(tops, key=lambda g: (tops[g], str(g)))
    top_gap = tops[hi_g] - tops[lo_g]
    witness = None
    if gap <= tol and top_gap > 0:
        witness = {"score": 0.5 * (tops[lo_g] + tops[hi_g]), "category": scheme.labels[-1],
                   "in_category_group": lo_g, "in_category_cutpoint": tops[lo_g],
                   "below_category_group": hi_g, "below_category_cutpoint": tops[hi_g]}
    return CoarsenReport(cats, table, gap, top_gap, witness, tol, scheme)


def category_means(dist, cuts) -> np.ndarray:
    """``E[R | category]`` of a calibrated risk distribution cut at ``cuts``."""
    edges = [0.0, *cuts]
    tails = [_fast_tail(dist, c) for c in edges] + [(0.0, 0.0)]
    out = []
    for (s0a, s1a), (s0b, s1b) in zip(tails, tails[1:]):
        m = s0a - s0b
        out.append((s1a - s1b) / m if m > 1e-15 else NAN)
    return np.array(out)


def _fast_tail(dist, t):
    # closed-form tail moments where the distribution offers them
    if hasattr(dist, "upper_moment") and 0.0 < t <= 1.0:
        return 1.0 - float(dist.cdf(t)), float(dist.upper_moment(t))
    return dist.tail(t)


def calibrated_cutpoints(ref_dist, ref_cuts, other_dist, grid_points: int = 60) -> tuple:
    """Cutpoints for ``other_dist`` whose category means best match those of ``ref_dist`` at ``ref_cuts``.

    Minimizes the largest absolute difference in category means, by a coarse
    grid over increasing cutpoints followed by Nelder-Mead refinement.
    """
    target = category_means(ref_dist, ref_cuts)
    k = len(ref_cuts)
    grid = np.linspace(0.01, 0.99, grid_points)

    def loss(c):
        c = np.asarray(c, dtype=float)
        if np.any(c <= 0) or np.any(c >= 1) or np.any(np.diff(c) <= 1e-6):
            return np.inf
        d = np.abs(category_means(other_dist, c) - target)
        return np.inf if np.any(np.isnan(d)) else float(d.max())

    if k == 1:
        start = min(grid, key=lambda c: loss([c]))
        seed = [start]
    elif k == 2:
        best = (np.inf, None)
        for i, a in enumerate(grid):
            for b in grid[i + 1:]:
                val = loss([a, b])
                if val < best[0]:
                    best = (val, [a, b])
        seed = best[1]
    else:
        seed = list(np.quantile(grid, np.linspace(0, 1, k + 2)[1:-1]))
    res = optimize.minimize(loss, seed, method="Nelder-Mead",
                            options={"xatol": 1e-8, "fatol": 1e-10, "maxiter": 4000})
    best = res.x if res.fun <= loss(seed) else np.asarray(seed)
    return tuple(float(c) for c in best)


def population_from_dists(dists: dict, n_atoms: int = 2000) -> ScoredPopulation:
    """Expected-outcome records of calibrated scores: each atom splits into label masses ``r`` and ``1 - r``."""
    groups = {}
    for g, d in dists.items():
        emp = discretize(d, n_atoms)
        groups[g] = Records.from_risks(emp.values, emp.values, emp.weights)
    return ScoredPopulation(groups)
