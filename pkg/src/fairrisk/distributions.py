"""Distributions of true risk r(x) over a (sub)population.

Two families are supported:

* ``DiscriminantDist`` -- the posterior probability of the positive class given
  an equal-variance Gaussian signal.  Negatives emit ``z ~ N(0, 1)``, positives
  ``z ~ N(d', 1)``, the prior on the positive class is the base rate, and the
  risk is ``Pr(Y=1 | z)``.  On the logit scale this is a two-component normal
  mixture, and its AUC is a monotone function of ``d'``.
* ``EmpiricalDist`` -- a finite list of (risk, weight) atoms.

Everything is immutable; sampling is counter-based so a given seed produces the
same draws however the work is chunked.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import integrate, special

from .errors import DomainError, UndefinedAUCError

QUAD_EPSABS = 1e-10
QUAD_EPSREL = 1e-10
# half-width of the logit integration window, in component standard deviations
_WINDOW_SIGMAS = 14.0
TIE_TOL = 1e-12
DEFAULT_ATOMS = 10_000


def dprime_for_auc(auc: float, tol: float = 1e-10) -> float:
    """Separation ``d'`` at which the two-Gaussian construction has the given AUC.

    The AUC of the equal-variance model is ``Phi(d'/sqrt(2))``; it is inverted
    here by plain bisection.
    """
    if not 0.5 < auc < 1.0:
        raise DomainError(f"auc must lie in (0.5, 1), got {auc!r}")
    lo, hi = 0.0, 1.0
    while special.ndtr(hi / math.sqrt(2.0)) < auc:
        lo, hi = hi, 2.0 * hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if special.ndtr(mid / math.sqrt(2.0)) < auc:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _logit(r):
    with np.errstate(divide="ignore"):
        return special.logit(r)


@dataclass(frozen=True)
class LogitNormalDist:
    """Risk whose logit is ``N(mu, sigma**2)``; used for the class conditionals."""

    mu: float
    sigma: float

    def logit_pdf(self, l):
        z = (np.asarray(l, dtype=float) - self.mu) / self.sigma
        return np.exp(-0.5 * z * z) / (self.sigma * math.sqrt(2.0 * math.pi))

    def pdf(self, r):
        r = np.asarray(r, dtype=float)
        inner = (r > 0) & (r < 1)
        safe = np.where(inner, r, 0.5)
        out = self.logit_pdf(_logit(safe)) / (safe * (1.0 - safe))
        return np.where(inner, out, 0.0)

    def cdf(self, r):
        r = np.asarray(r, dtype=float)
        return np.where(r <= 0, 0.0, np.where(r >= 1, 1.0, special.ndtr((_logit(np.clip(r, 1e-300, 1.0)) - self.mu) / self.sigma)))

    def quantile(self, p):
        p = np.asarray(p, dtype=float)
        return special.expit(self.mu + self.sigma * special.ndtri(p))

    def expect(self, g, lo=0.0, hi=1.0):
        a = max(_logit(lo) if lo > 0 else -np.inf, self.mu - _WINDOW_SIGMAS * self.sigma)
        b = min(_logit(hi) if hi < 1 else np.inf, self.mu + _WINDOW_SIGMAS * self.sigma)
        if a >= b:
            return 0.0
        f = lambda l: g(special.expit(l)) * float(self.logit_pdf(l))
        return integrate.quad(f, a, b, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=200)[0]

    @cached_property
    def mean(self) -> float:
        return self.expect(lambda r: r)


@dataclass(frozen=True)
class DiscriminantDist:
    """Discriminant risk distribution parameterized by its mean and AUC."""

    base_rate: float
    auc: float

    def __post_init__(self):
        if not 0.0 < self.base_rate < 1.0:
            raise DomainError(f"mean must lie in (0, 1), got {self.base_rate!r}")
        if not 0.5 < self.auc < 1.0:
            raise DomainError(f"auc must lie in (0.5, 1), got {self.auc!r}")

    @cached_property
    def dprime(self) -> float:
        return dprime_for_auc(self.auc)

    @cached_property
    def negative(self) -> LogitNormalDist:
        d = self.dprime
        return LogitNormalDist(special.logit(self.base_rate) - 0.5 * d * d, d)

    @cached_property
    def positive(self) -> LogitNormalDist:
        d = self.dprime
        return LogitNormalDist(special.logit(self.base_rate) + 0.5 * d * d, d)

    @property
    def _window(self):
        d = self.dprime
        return (self.negative.mu - _WINDOW_SIGMAS * d, self.positive.mu + _WINDOW_SIGMAS * d)

    def logit_pdf(self, l):
        phi = self.base_rate
        return (1.0 - phi) * self.negative.logit_pdf(l) + phi * self.positive.logit_pdf(l)

    def pdf(self, r):
        phi = self.base_rate
        return (1.0 - phi) * self.negative.pdf(r) + phi * self.positive.pdf(r)

    def cdf(self, r):
        phi = self.base_rate
        return (1.0 - phi) * self.negative.cdf(r) + phi * self.positive.cdf(r)

    def _logit_cdf(self, l):
        phi = self.base_rate
        d = self.dprime
        return (1.0 - phi) * special.ndtr((l - self.negative.mu) / d) + phi * special.ndtr((l - self.positive.mu) / d)

    def quantile(self, p):
        p = np.asarray(p, dtype=float)
        if np.any((p < 0) | (p > 1)):
            raise DomainError("quantile probabilities must lie in [0, 1]")
        lo = np.full(p.shape, self._window[0] - 30.0 * self.dprime)
        hi = np.full(p.shape, self._window[1] + 30.0 * self.dprime)
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            below = self._logit_cdf(mid) < p
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        out = special.expit(0.5 * (lo + hi))
        return np.where(p <= 0, 0.0, np.where(p >= 1, 1.0, out))

    def expect(self, g, lo=0.0, hi=1.0):
        """``E[g(R); lo <= R <= hi]`` by adaptive quadrature on the logit scale."""
        wa, wb = self._window
        a = max(_logit(lo) if lo > 0 else -np.inf, wa)
        b = min(_logit(hi) if hi < 1 else np.inf, wb)
        if a >= b:
            return 0.0
        pts = [m for m in (self.negative.mu, self.positive.mu) if a < m < b]
        f = lambda l: g(special.expit(l)) * float(self.logit_pdf(l))
        return integrate.quad(f, a, b, points=pts or None, epsabs=QUAD_EPSABS,
                              epsrel=QUAD_EPSREL, limit=200)[0]

    @cached_property
    def mean(self) -> float:
        return self.expect(lambda r: r)

    def tail(self, t: float):
        """``(Pr(R >= t), E[R; R >= t])`` by quadrature."""
        if t <= 0:
            return 1.0, self.mean
        if t > 1:
            return 0.0, 0.0
        return self.expect(lambda r: 1.0, t, 1.0), self.expect(lambda r: r, t, 1.0)

    def upper_moment(self, t):
        """Closed-form ``E[R; R >= t]``, using ``r f(r) = phi f_+(r)``; vectorized."""
        t = np.asarray(t, dtype=float)
        return self.base_rate * (1.0 - self.positive.cdf(t))

    @cached_property
    def variance(self) -> float:
        m = self.mean
        return self.expect(lambda r: (r - m) ** 2)


@dataclass(frozen=True, eq=False)
class EmpiricalDist:
    """Finite risk distribution; atoms sorted by risk, ties merged, weights sum to 1."""

    values: np.ndarray
    weights: np.ndarray

    @classmethod
    def from_atoms(cls, values, weights=None) -> "EmpiricalDist":
        values = np.asarray(values, dtype=float).ravel()
        weights = np.ones_like(values) if weights is None else np.asarray(weights, dtype=float).ravel()
        if values.shape != weights.shape or values.size == 0:
            raise DomainError("need a nonempty list of (risk, weight) atoms")
        if np.any(~np.isfinite(values)) or np.any((values < 0) | (values > 1)):
            raise DomainError("atom risks must lie in [0, 1]")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise DomainError("atom weights must be finite and nonnegative")
        keep = weights > 0
        values, weights = values[keep], weights[keep]
        if values.size == 0:
            raise DomainError("total atom weight is zero")
        order = np.argsort(values, kind="stable")
        values, weights = values[order], weights[order]
        # merge runs of (near-)equal risks; merged value is the weighted mean of the run
        brk = np.r_[True, np.diff(values) > TIE_TOL]
        run = np.cumsum(brk) - 1
        w = np.bincount(run, weights)
        v = np.bincount(run, weights * values) / w
        v = np.clip(v, 0.0, 1.0)
        return cls(v, w / w.sum())

    @classmethod
    def point_mass(cls, r: float) -> "EmpiricalDist":
        return cls.from_atoms([r], [1.0])

    @property
    def atoms(self):
        return list(zip(self.values.tolist(), self.weights.tolist()))

    def pdf(self, r):
        """Probability mass at ``r`` (an empirical distribution has no density)."""
        r = np.asarray(r, dtype=float)
        idx = np.clip(np.searchsorted(self.values, r), 0, self.values.size - 1)
        hit = np.abs(self.values[idx] - r) <= TIE_TOL
        return np.where(hit, self.weights[idx], 0.0)

    def cdf(self, r):
        r = np.asarray(r, dtype=float)
        cw = np.r_[0.0, np.cumsum(self.weights)]
        out = cw[np.searchsorted(self.values, r, side="right")]
        return np.minimum(out, 1.0)

    def quantile(self, p):
        p = np.asarray(p, dtype=float)
        if np.any((p < 0) | (p > 1)):
            raise DomainError("quantile probabilities must lie in [0, 1]")
        cw = np.cumsum(self.weights)
        idx = np.searchsorted(cw, p - 1e-15, side="left")
        return self.values[np.clip(idx, 0, self.values.size - 1)]

    def expect(self, g, lo=0.0, hi=1.0):
        m = (self.values >= lo) & (self.values <= hi)
        vals = np.array([g(v) for v in self.values[m]], dtype=float)
        return float(np.sum(vals * self.weights[m]))

    @cached_property
    def mean(self) -> float:
        return float(np.dot(self.values, self.weights))

    @cached_property
    def variance(self) -> float:
        return float(np.dot((self.values - self.mean) ** 2, self.weights))

    def tail(self, t: float):
        m = self.values >= t
        w = self.weights[m]
        return float(w.sum()), float(np.dot(w, self.values[m]))


RiskDistribution = DiscriminantDist | EmpiricalDist


@dataclass(frozen=True)
class ClassConditionalPair:
    """Risk distributions conditional on ``Y=1`` and ``Y=0`` for a calibrated risk."""

    positive: LogitNormalDist | EmpiricalDist
    negative: LogitNormalDist | EmpiricalDist
    base_rate: float

    def mixture_pdf(self, r):
        return self.base_rate * self.positive.pdf(r) + (1.0 - self.base_rate) * self.negative.pdf(r)


# ---------------------------------------------------------------- functional API

def disc_new(mean: float, auc: float) -> DiscriminantDist:
    return DiscriminantDist(float(mean), float(auc))


def _check_risk(r):
    r = np.asarray(r, dtype=float)
    if np.any((r < 0) | (r > 1)):
        raise DomainError("risk values must lie in [0, 1]")
    return r


def pdf(dist, r):
    return dist.pdf(_check_risk(r))


def cdf(dist, r):
    return dist.cdf(_check_risk(r))


def quantile(dist, p):
    return dist.quantile(p)


def dist_mean(dist) -> float:
    return float(dist.mean)


def variance(dist) -> float:
    return float(dist.variance)


def class_conditional(dist) -> ClassConditionalPair:
    """Split a calibrated risk distribution by outcome.

    The positive-class density is ``r f(r) / phi`` and the negative-class density
    ``(1 - r) f(r) / (1 - phi)``.  For the discriminant family these tilts are the
    two logit-normal mixture components.
    """
    if isinstance(dist, DiscriminantDist):
        return ClassConditionalPair(dist.positive, dist.negative, dist.base_rate)
    phi = dist.mean
    if phi <= 0.0 or phi >= 1.0:
        raise UndefinedAUCError(f"base rate {phi!r} leaves one outcome class empty")
    pos = EmpiricalDist.from_atoms(dist.values, dist.weights * dist.values)
    neg = EmpiricalDist.from_atoms(dist.values, dist.weights * (1.0 - dist.values))
    return ClassConditionalPair(pos, neg, phi)


def atom_auc(values, pos_w, neg_w) -> float:
    P, N = pos_w.sum(), neg_w.sum()
    if P <= 0 or N <= 0:
        raise UndefinedAUCError("AUC needs both outcome classes")
    below = np.cumsum(neg_w) - neg_w
    return float(np.sum(pos_w * (below + 0.5 * neg_w)) / (P * N))


def dist_auc(dist) -> float:
    """``Pr(R+ > R-) + Pr(R+ = R-)/2`` for class-conditional draws of a calibrated risk."""
    if isinstance(dist, EmpiricalDist):
        phi = dist.mean
        if phi <= 0.0 or phi >= 1.0:
            raise UndefinedAUCError(f"base rate {phi!r} leaves one outcome class empty")
        return atom_auc(dist.values, dist.weights * dist.values, dist.weights * (1.0 - dist.values))
    pair = class_conditional(dist)
    pos, neg = pair.positive, pair.negative
    a = pos.mu - _WINDOW_SIGMAS * pos.sigma
    b = pos.mu + _WINDOW_SIGMAS * pos.sigma
    f = lambda l: float(pos.logit_pdf(l)) * float(special.ndtr((l - neg.mu) / neg.sigma))
    return integrate.quad(f, a, b, points=[pos.mu], epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=200)[0]


def _philox_uniforms(seed: int, start: int, count: int) -> np.ndarray:
    # one Philox counter block (four 64-bit words) per draw
    bg = np.random.Philox(key=int(seed))
    if start:
        bg.advance(start)
    raw = bg.random_raw(4 * count).reshape(count, 4)
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53


def sample(dist, n: int, seed: int = 42, chunk_size: int = 1 << 16):
    """Draw ``n`` (risk, label) pairs with labels ~ Bernoulli(risk).

    Draw ``i`` depends only on ``(seed, i)``, so ``chunk_size`` never changes the
    output.  Returns ``(risks, labels)`` arrays.
    """
    if n < 1:
        raise DomainError("n must be at least 1")
    if seed < 0:
        raise DomainError("seed must be nonnegative")
    risks = np.empty(n)
    labels = np.empty(n, dtype=np.int8)
    if isinstance(dist, EmpiricalDist):
        cw = np.cumsum(dist.weights)
        cw[-1] = 1.0
    for start in range(0, n, chunk_size):
        m = min(chunk_size, n - start)
        u = _philox_uniforms(seed, start, m)
        if isinstance(dist, DiscriminantDist):
            is_pos = u[:, 0] < dist.base_rate
            mu = np.where(is_pos, dist.positive.mu, dist.negative.mu)
            r = special.expit(mu + dist.dprime * special.ndtri(u[:, 1]))
        elif isinstance(dist, EmpiricalDist):
            r = dist.values[np.minimum(np.searchsorted(cw, u[:, 1], side="right"), cw.size - 1)]
        else:
            r = np.asarray(dist.quantile(u[:, 1]))
        risks[start:start + m] = r
        labels[start:start + m] = u[:, 2] < r
    return risks, labels


def discretize(dist, n_atoms: int = DEFAULT_ATOMS) -> EmpiricalDist:
    """Equal-mass discretization; each atom is scored at its cell's mean risk."""
    if isinstance(dist, EmpiricalDist):
        return dist
    edges = dist.quantile(np.arange(1, n_atoms) / n_atoms)
    upper = np.r_[dist.base_rate, dist.upper_moment(edges), 0.0]
    cell_mass = -np.diff(upper)
    values = np.clip(cell_mass * n_atoms, 0.0, 1.0)
    return EmpiricalDist.from_atoms(values, np.full(n_atoms, 1.0 / n_atoms))


# ---------------------------------------------------------------- serialization

def dist_to_dict(dist) -> dict:
    if isinstance(dist, DiscriminantDist):
        return {"kind": "discriminant", "mean": dist.base_rate, "auc": dist.auc}
    return {"kind": "empirical", "atoms": [[v, w] for v, w in dist.atoms]}


def dist_from_dict(obj: dict):
    kind = obj.get("kind")
    if kind == "discriminant":
        return disc_new(obj["mean"], obj["auc"])
    if kind == "empirical":
        atoms = np.asarray(obj["atoms"], dtype=float).reshape(-1, 2)
        return EmpiricalDist.from_atoms(atoms[:, 0], atoms[:, 1])
    raise DomainError(f"unknown distribution kind {kind!r}")


def load_dist(path):
    with open(path) as fh:
        return dist_from_dict(json.load(fh))
