"""COMPAS-style tabular ingestion and elastic-net logistic risk models.

The penalized objective, on standardized features, is

    mean_i w_i [log(1 + exp(eta_i)) - y_i eta_i]  +  l1 |beta|_1  +  (l2 / 2) |beta|^2

with an unpenalized intercept.  It is minimized by cyclic coordinate descent:
each coordinate takes a proximal Newton step with soft-thresholding, falling
back to the 1/4 curvature bound whenever the Newton step would raise the
objective, so the objective never increases across sweeps.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np
import pandas as pd
from scipy import special

from .distributions import EmpiricalDist
from .errors import DomainError, SchemaError
from .metrics import Records, ScoredPopulation

_P_EPS = 1e-15
CV_GRID = ((1e-4, 1e-4), (1e-3, 1e-3), (1e-2, 1e-2), (1e-3, 0.0), (0.0, 1e-3))


# ---------------------------------------------------------------- ingestion

@dataclass(frozen=True)
class Schema:
    label: str
    group: str
    features: tuple
    protected: tuple = ()
    categorical: tuple | None = None
    groups: dict | None = None
    filters: tuple = ()

    @classmethod
    def from_dict(cls, obj: dict) -> "Schema":
        for key in ("label", "group", "features"):
            if key not in obj:
                raise SchemaError(f"schema is missing required key {key!r}")
        cat = obj.get("categorical")
        return cls(label=obj["label"], group=obj["group"], features=tuple(obj["features"]),
                   protected=tuple(obj.get("protected", ())),
                   categorical=None if cat is None else tuple(cat),
                   groups=obj.get("groups"), filters=tuple(obj.get("filters", ())))

    def to_dict(self) -> dict:
        return {"label": self.label, "group": self.group, "features": list(self.features),
                "protected": list(self.protected),
                "categorical": None if self.categorical is None else list(self.categorical),
                "groups": self.groups, "filters": list(self.filters)}


def load_schema(path=None) -> Schema:
    """Read a schema JSON; with no path, the bundled ProPublica violent-recidivism mapping."""
    if path is None:
        text = resources.files("fairrisk").joinpath("data/propublica_violent_schema.json").read_text()
        return Schema.from_dict(json.loads(text))
    with open(path) as fh:
        return Schema.from_dict(json.load(fh))


@dataclass(frozen=True, eq=False)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    groups: np.ndarray
    feature_names: tuple
    protected_mask: np.ndarray
    n_dropped: int = 0
    n_filtered: int = 0

    def __post_init__(self):
        n = self.y.shape[0]
        if self.X.ndim != 2 or self.X.shape[0] != n or self.groups.shape[0] != n:
            raise DomainError("X, y and groups must have matching row counts")
        if self.X.shape[1] != len(self.feature_names) or self.protected_mask.shape[0] != self.X.shape[1]:
            raise DomainError("feature names and protected mask must match the column count")
        if not np.all(np.isfinite(self.X)):
            raise DomainError("feature matrix has non-finite entries")

    def __len__(self):
        return self.y.shape[0]

    @property
    def group_names(self) -> list:
        return sorted(set(self.groups.tolist()), key=str)

    def subset(self, mask) -> "Dataset":
        mask = np.asarray(mask)
        return replace(self, X=self.X[mask], y=self.y[mask], groups=self.groups[mask])

    def unprotected(self) -> "Dataset":
        keep = ~self.protected_mask
        names = tuple(n for n, k in zip(self.feature_names, keep) if k)
        return replace(self, X=self.X[:, keep], feature_names=names, protected_mask=np.zeros(keep.sum(), bool))

    def label_rates(self) -> dict:
        return {g: float(self.y[self.groups == g].mean()) for g in self.group_names}


def _apply_filter(df, flt):
    col = flt.get("column")
    if col not in df.columns:
        raise SchemaError(f"filter column {col!r} not found in data")
    keep = pd.Series(True, index=df.index)
    if "min" in flt or "max" in flt:
        v = pd.to_numeric(df[col], errors="coerce")
        if "min" in flt:
            keep &= v >= flt["min"]
        if "max" in flt:
            keep &= v <= flt["max"]
    if "in" in flt:
        keep &= df[col].isin(flt["in"]) | df[col].astype(str).isin([str(x) for x in flt["in"]])
    if "not_in" in flt:
        keep &= ~(df[col].isin(flt["not_in"]) | df[col].astype(str).isin([str(x) for x in flt["not_in"]]))
    return df[keep.fillna(False)]


def _looks_categorical(col: pd.Series) -> bool:
    # a stray unparseable entry does not turn a numeric column into a categorical one
    vals = col.dropna()
    if pd.api.types.is_numeric_dtype(vals) or vals.empty:
        return False
    return pd.to_numeric(vals, errors="coerce").isna().mean() > 0.5


def dataset_from_frame(df: pd.DataFrame, schema: Schema) -> Dataset:
    required = [schema.label, schema.group, *schema.features]
    for col in required:
        if col not in df.columns:
            raise SchemaError(f"missing required column {col!r}")
    n0 = len(df)
    for flt in schema.filters:
        df = _apply_filter(df, flt)
    if schema.groups is not None:
        df = df[df[schema.group].astype(str).isin([str(k) for k in schema.groups])]
    n_filtered = n0 - len(df)

    df = df[list(dict.fromkeys(required))].copy()
    categorical = schema.categorical
    if categorical is None:
        categorical = tuple(c for c in schema.features if _looks_categorical(df[c]))
    label = pd.to_numeric(df[schema.label], errors="coerce")
    ok = label.isin([0, 1]) & df[schema.group].notna()
    for c in schema.features:
        if c in categorical:
            ok &= df[c].notna()
        else:
            num = pd.to_numeric(df[c], errors="coerce")
            ok &= num.notna() & np.isfinite(num.fillna(0.0))
            df[c] = num
    n_dropped = int((~ok).sum())
    df, label = df[ok], label[ok]

    cols, names, prot = [], [], []
    for c in schema.features:
        is_prot = c in schema.protected
        if c in categorical:
            levels = sorted(df[c].astype(str).unique())
            # first level is the reference category
            for lev in levels[1:]:
                cols.append((df[c].astype(str) == lev).to_numpy(float))
                names.append(f"{c}={lev}")
                prot.append(is_prot)
        else:
            cols.append(df[c].to_numpy(float))
            names.append(c)
            prot.append(is_prot)
    X = np.column_stack(cols) if cols else np.empty((len(df), 0))
    groups = df[schema.group].astype(str).to_numpy()
    if schema.groups is not None:
        groups = np.array([str(schema.groups.get(g, g)) for g in groups], dtype=object)
    return Dataset(X, label.to_numpy().astype(np.int8), groups.astype(object), tuple(names),
                   np.array(prot, dtype=bool), n_dropped, n_filtered)


def ingest_csv(path, schema: Schema | dict | None = None) -> Dataset:
    """Parse a CSV under ``schema``; rows failing to parse or missing required fields are dropped and counted."""
    if schema is None:
        schema = load_schema()
    elif isinstance(schema, dict):
        schema = Schema.from_dict(schema)
    bad = []
    try:
        df = pd.read_csv(path, engine="python", on_bad_lines=lambda line: bad.append(line) and None,
                         skipinitialspace=True)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise SchemaError(f"cannot parse {path}: {exc}") from exc
    data = dataset_from_frame(df, schema)
    return replace(data, n_dropped=data.n_dropped + len(bad))


# ---------------------------------------------------------------- elastic net

@dataclass(frozen=True)
class ElasticNetConfig:
    l1: float = 1e-3
    l2: float = 1e-3
    max_iter: int = 1000
    tol: float = 1e-8
    standardize: bool = True

    def __post_init__(self):
        if self.l1 < 0 or self.l2 < 0:
            raise DomainError("penalties must be nonnegative")
        if self.tol <= 0 or self.max_iter < 1:
            raise DomainError("tolerance must be positive and max_iter at least 1")

    def to_dict(self) -> dict:
        return {"l1": self.l1, "l2": self.l2, "max_iter": self.max_iter, "tol": self.tol,
                "standardize": self.standardize}


@dataclass(frozen=True, eq=False)
class LogisticModel:
    feature_names: tuple
    weights: np.ndarray
    intercept: float
    config: ElasticNetConfig = field(default_factory=ElasticNetConfig)
    converged: bool = True
    n_iter: int = 0
    fallback: bool = False

    def linear(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.weights.size:
            raise DomainError(f"expected {self.weights.size} features, got {X.shape[1]}")
        return X @ self.weights + self.intercept

    def predict(self, X) -> np.ndarray:
        return np.clip(special.expit(self.linear(X)), _P_EPS, 1.0 - _P_EPS)

    def to_dict(self) -> dict:
        return {"feature_names": list(self.feature_names), "weights": self.weights.tolist(),
                "intercept": self.intercept, "config": self.config.to_dict(),
                "converged": self.converged, "n_iter": self.n_iter, "fallback": self.fallback}

    @classmethod
    def from_dict(cls, obj) -> "LogisticModel":
        return cls(tuple(obj["feature_names"]), np.asarray(obj["weights"], dtype=float), float(obj["intercept"]),
                   ElasticNetConfig(**obj.get("config", {})), bool(obj.get("converged", True)),
                   int(obj.get("n_iter", 0)), bool(obj.get("fallback", False)))


def predict(model: LogisticModel, rows) -> np.ndarray:
    return model.predict(rows)


def _norm_w(y, sample_weight):
    w = np.ones(y.size) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    return w / w.sum()


def penalized_objective(theta, X, y, l1=0.0, l2=0.0, sample_weight=None) -> float:
    """Penalized mean log-loss at ``theta = (intercept, beta...)`` on the given design."""
    w = _norm_w(y, sample_weight)
    eta = theta[0] + X @ theta[1:]
    nll = np.dot(w, np.logaddexp(0.0, eta) - y * eta)
    beta = theta[1:]
    return float(nll + l1 * np.abs(beta).sum() + 0.5 * l2 * np.dot(beta, beta))


def penalized_gradient(theta, X, y, l1=0.0, l2=0.0, sample_weight=None) -> np.ndarray:
    """Gradient of ``penalized_objective`` (the l1 term contributes ``l1 * sign(beta)`` off zero)."""
    w = _norm_w(y, sample_weight)
    eta = theta[0] + X @ theta[1:]
    r = w * (special.expit(eta) - y)
    beta = theta[1:]
    return np.r_[r.sum(), X.T @ r + l1 * np.sign(beta) + l2 * beta]


def _soft(z, g):
    return math.copysign(max(abs(z) - g, 0.0), z)


def _coordinate_descent(Z, y, w, l1, l2, max_iter, tol, trace=None, ybar=None):
    n, p = Z.shape
    if ybar is None:
        ybar = float(np.dot(w, y))
    b0 = float(special.logit(ybar))
    beta = np.zeros(p)
    eta = np.full(n, b0)
    zsq = w @ (Z * Z)

    def loss(eta_):
        return float(np.dot(w, np.logaddexp(0.0, eta_) - y * eta_))

    cur = loss(eta)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        max_change = 0.0
        # intercept: Newton step with step-halving
        mu = special.expit(eta)
        g = float(np.dot(w, mu - y))
        h = max(float(np.dot(w, mu * (1 - mu))), 1e-12)
        step = g / h
        while True:
            new = loss(eta - step)
            if new <= cur + 1e-16 or abs(step) < 1e-16:
                break
            step *= 0.5
        if new <= cur + 1e-16:
            eta -= step
            b0 -= step
            cur = new
            max_change = max(max_change, abs(step))
        for j in range(p):
            zj = Z[:, j]
            mu = special.expit(eta)
            g = float(np.dot(w, (mu - y) * zj))
            h = float(np.dot(w, mu * (1 - mu) * zj * zj))
            old = beta[j]
            pen_old = l1 * abs(old) + 0.5 * l2 * old * old
            accepted = False
            for curv in (h, 0.25 * zsq[j]):
                if curv <= 0:
                    continue
                cand = _soft(curv * old - g, l1) / (curv + l2)
                d = cand - old
                new = loss(eta + d * zj)
                if new + l1 * abs(cand) + 0.5 * l2 * cand * cand <= cur + pen_old + 1e-16:
                    accepted = True
                    break
            if accepted and d != 0.0:
                beta[j] = cand
                eta += d * zj
                cur = new
                max_change = max(max_change, abs(d))
        if trace is not None:
            trace.append(cur + l1 * np.abs(beta).sum() + 0.5 * l2 * np.dot(beta, beta))
        if max_change < tol:
            converged = True
            break
    if not np.any(beta):
        b0 = float(special.logit(ybar))
    return b0, beta, converged, it


def fit(data: Dataset, config: ElasticNetConfig = ElasticNetConfig(), sample_weight=None,
        trace: list | None = None) -> LogisticModel:
    """Elastic-net logistic regression by cyclic coordinate descent.

    Non-convergence within ``max_iter`` sweeps sets ``converged=False`` and warns.
    Pass a list as ``trace`` to collect the objective after every sweep.
    """
    if len(data) < 2:
        raise DomainError("need at least two rows to fit")
    y = data.y.astype(float)
    if y.min() == y.max():
        raise DomainError("both outcome classes must be present to fit")
    w = _norm_w(y, sample_weight)
    X = data.X
    if config.standardize and X.shape[1]:
        mean = w @ X
        sd = np.sqrt(w @ (X - mean) ** 2)
        sd = np.where(sd > 1e-12, sd, 1.0)
    else:
        mean, sd = np.zeros(X.shape[1]), np.ones(X.shape[1])
    Z = (X - mean) / sd
    # the plain label mean, so a fully penalized fit has intercept logit(mean y) exactly
    ybar = float(y.mean()) if sample_weight is None else float(np.average(y, weights=sample_weight))
    b0, beta, converged, it = _coordinate_descent(Z, y, w, config.l1, config.l2, config.max_iter, config.tol,
                                                  trace, ybar)
    if not converged:
        warnings.warn(f"coordinate descent did not converge in {config.max_iter} sweeps", RuntimeWarning,
                      stacklevel=2)
    weights = beta / sd
    intercept = b0 - float(np.dot(weights, mean))
    return LogisticModel(data.feature_names, weights, intercept, config, converged, it)


def log_likelihood(model: LogisticModel, data: Dataset) -> float:
    """Mean held-out log-likelihood."""
    eta = model.linear(data.X)
    y = data.y.astype(float)
    return float(np.mean(y * eta - np.logaddexp(0.0, eta)))


def cross_validate(data: Dataset, grid=CV_GRID, folds: int = 5, seed: int = 42, base: ElasticNetConfig = ElasticNetConfig()):
    """Pick (l1, l2) by ``folds``-fold cross-validated log-likelihood; returns ``(config, scores)``."""
    rng = np.random.default_rng(seed)
    fold = rng.permutation(len(data)) % folds
    scores = {}
    for l1, l2 in grid:
        cfg = replace(base, l1=l1, l2=l2)
        ll = []
        for k in range(folds):
            train, test = data.subset(fold != k), data.subset(fold == k)
            if train.y.min() == train.y.max() or len(test) == 0:
                continue
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                ll.append(log_likelihood(fit(train, cfg), test) * len(test))
        scores[(l1, l2)] = sum(ll) / len(data) if ll else -np.inf
    best = max(scores, key=lambda k: (scores[k], -k[0], -k[1]))
    return replace(base, l1=best[0], l2=best[1]), scores


@dataclass(frozen=True)
class GroupModels:
    models: dict
    pooled: LogisticModel
    fallback: frozenset = frozenset()

    def model_for(self, group) -> LogisticModel:
        return self.models.get(group, self.pooled)

    def to_dict(self) -> dict:
        return {"pooled": self.pooled.to_dict(), "groups": {g: m.to_dict() for g, m in self.models.items()},
                "fallback": sorted(self.fallback, key=str)}


def fit_group_specific(data: Dataset, config: ElasticNetConfig = ElasticNetConfig()) -> GroupModels:
    """Per-group models plus a pooled model, all on the unprotected features.

    A group with a single outcome class gets the pooled model, flagged in ``fallback``.
    """
    base = data.unprotected()
    pooled = fit(base, config)
    models, flagged = {}, set()
    for g in base.group_names:
        sub = base.subset(base.groups == g)
        if len(sub) < 2 or sub.y.min() == sub.y.max():
            models[g] = replace(pooled, fallback=True)
            flagged.add(g)
        else:
            models[g] = fit(sub, config)
    return GroupModels(models, pooled, frozenset(flagged))


def score_population(data: Dataset, model) -> ScoredPopulation:
    """Records of model scores and labels per group (``model`` may be a ``GroupModels``)."""
    groups = {}
    for g in data.group_names:
        sub = data.subset(data.groups == g)
        if isinstance(model, GroupModels):
            m = model.model_for(g)
            X = sub.unprotected().X
        else:
            m = model
            X = sub.X if sub.X.shape[1] == m.weights.size else sub.unprotected().X
        groups[g] = Records.from_arrays(m.predict(X), sub.y)
    return ScoredPopulation(groups)


def risk_distributions(pop: ScoredPopulation) -> dict:
    """Empirical risk distribution of each group's scores, read as risk estimates."""
    return {g: EmpiricalDist.from_atoms(pop[g].scores, pop[g].weights) for g in pop}
