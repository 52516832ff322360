"""Data tables and SVG plots for each figure.

Every builder returns a ``FigureOutput`` whose rows are exactly the values
plotted; ``write_figure`` saves ``<id>.csv``, ``<id>.svg`` and ``<id>.meta.json``.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .distributions import EmpiricalDist, disc_new, dist_auc
from .metrics import (FIG3_AUCS, FIG3_BASE_RATES, FIG3_THRESHOLDS, GRID_COLUMNS, analytic_rates, calibration_curve,
                      inframarginality_grid, quantile_edges, write_rows_csv)
from .perturbations import (CoarseScheme, calibrated_cutpoints, coarsen, degradation_curve,
                            find_fpr_parity_degradation, population_from_dists, redline_contract)
from .risk_model import (Dataset, ElasticNetConfig, fit, ingest_csv, load_schema, risk_distributions,
                         score_population)
from .svg import Chart

FIGURES = ("fig2", "fig3", "fig4", "fig5", "fig6", "fig7")
BROWARD = {"black": (0.21, 0.76), "white": (0.12, 0.75)}
DEFAULT_THRESHOLD = 0.25
HIST_BINS = 40
FIG7_DISTS = {"red": (0.30, 0.75), "blue": (0.15, 0.75)}
FIG7_BLUE_CUTS = (0.10, 0.30)


@dataclass
class FigureOutput:
    figure: str
    columns: tuple
    rows: list
    svg: str
    meta: dict = field(default_factory=dict)


def write_figure(out: FigureOutput, directory) -> list[str]:
    os.makedirs(directory, exist_ok=True)
    base = os.path.join(directory, out.figure)
    write_rows_csv(out.rows, base + ".csv", out.columns)
    with open(base + ".svg", "w") as fh:
        fh.write(out.svg)
    with open(base + ".meta.json", "w") as fh:
        json.dump(out.meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return [base + ".csv", base + ".svg", base + ".meta.json"]


def _meta(fig, seed, source, **params):
    return {"figure": fig, "seed": seed, "source": source, "params": params}


def _broward():
    return {g: disc_new(*p) for g, p in BROWARD.items()}


def _histogram(dist, bins=HIST_BINS):
    edges = np.linspace(0.0, 1.0, bins + 1)
    if isinstance(dist, EmpiricalDist):
        mass, _ = np.histogram(dist.values, bins=edges, weights=dist.weights)
    else:
        mass = np.diff(np.asarray(dist.cdf(edges), dtype=float))
        mass[0] += float(dist.cdf(0.0))
    return edges[:-1], edges[1:], mass


# ---------------------------------------------------------------- synthetic data

def synthetic_gender_data(n: int = 8000, seed: int = 42) -> Dataset:
    """Defendants whose recidivism risk is lower for women at equal age and priors."""
    rng = np.random.default_rng(seed)
    female = rng.random(n) < 0.2
    age = rng.integers(18, 70, n).astype(float)
    priors = rng.poisson(np.where(female, 1.5, 3.0)).astype(float)
    eta = -1.2 + 0.18 * priors - 0.035 * (age - 35.0) - 0.9 * female
    y = (rng.random(n) < 1.0 / (1.0 + np.exp(-eta))).astype(np.int8)
    X = np.column_stack([age, priors, female.astype(float)])
    groups = np.where(female, "female", "male").astype(object)
    return Dataset(X, y, groups, ("age", "priors_count", "sex=Female"), np.array([False, False, True]))


def fitted_broward(path, schema_path=None, config: ElasticNetConfig = ElasticNetConfig()):
    """Race-group risk distributions from an elastic net on all features of a COMPAS-format CSV."""
    data = ingest_csv(path, load_schema(schema_path))
    model = fit(data, config)
    pop = score_population(data, model)
    return data, model, pop, risk_distributions(pop)


# ---------------------------------------------------------------- builders

def fig2(data_path=None, schema_path=None, seed: int = 42, bins: int = 10) -> FigureOutput:
    """Calibration by gender of a gender-blind score."""
    if data_path is None:
        data, source = synthetic_gender_data(seed=seed), "synthetic"
    else:
        schema = replace(load_schema(schema_path), group="sex", groups={"Male": "male", "Female": "female"})
        data, source = ingest_csv(data_path, schema), data_path
    blind = data.unprotected()
    model = fit(blind, ElasticNetConfig())
    pop = score_population(blind, model)
    edges = quantile_edges(pop.pooled().scores, bins)
    rows = []
    chart = Chart("Gender-blind score calibration", "score", "observed rate", seed=seed)
    for g in pop:
        curve = calibration_curve(pop[g], edges)
        for i, b in enumerate(curve.bins):
            rows.append({"group": g, "bin": i, "lo": b.lo, "hi": b.hi, "mean_score": b.mean_score,
                         "positive_rate": b.positive_rate, "weight": b.weight})
        chart.line([b.mean_score for b in curve.bins], [b.positive_rate for b in curve.bins], g, markers=True)
    chart.line([0, 1], [0, 1], "perfect calibration", dashed=True)
    meta = _meta("fig2", seed, source, bins=bins, model=model.to_dict())
    return FigureOutput("fig2", ("group", "bin", "lo", "hi", "mean_score", "positive_rate", "weight"),
                        rows, chart.render(), meta)


def fig3(seed: int = 42, threshold: float = DEFAULT_THRESHOLD) -> FigureOutput:
    """FPR and PPV of discriminant groups across base rates, AUCs and thresholds."""
    thresholds = tuple(sorted(set(FIG3_THRESHOLDS) | {threshold}))
    rows = inframarginality_grid(FIG3_BASE_RATES, FIG3_AUCS, thresholds)
    chart = Chart(f"False positive rate at threshold {threshold:g}", "base rate", "false positive rate",
                  xlim=(0.0, 0.5), seed=seed)
    for a in FIG3_AUCS:
        sel = [r for r in rows if r["auc"] == a and r["threshold"] == threshold]
        chart.line([r["base_rate"] for r in sel], [r["fpr"] for r in sel], f"AUC {a:g}", markers=True)
    meta = _meta("fig3", seed, "discriminant", thresholds=list(thresholds), plotted_threshold=threshold)
    return FigureOutput("fig3", GRID_COLUMNS, rows, chart.render(), meta)


def fig4(data_path=None, schema_path=None, seed: int = 42, threshold: float = DEFAULT_THRESHOLD) -> FigureOutput:
    """Group risk distributions with the decision threshold marked."""
    if data_path is None:
        dists, source = _broward(), "discriminant"
    else:
        _, _, _, dists = fitted_broward(data_path, schema_path)
        source = data_path
    rows, hists = [], {}
    for g in sorted(dists):
        lo, hi, mass = _histogram(dists[g])
        hists[g] = (lo, hi, mass)
        rows += [{"group": g, "lo": a, "hi": b, "mass": m} for a, b, m in zip(lo, hi, mass)]
    ymax = max(float(h[2].max()) for h in hists.values()) * 1.1
    chart = Chart("Risk distributions", "risk", "mass per bin", ylim=(0.0, ymax), seed=seed)
    for g, (lo, hi, mass) in hists.items():
        chart.bars(lo, hi, mass, g)
    chart.vline(threshold, f"t = {threshold:g}")
    meta = _meta("fig4", seed, source, threshold=threshold, bins=HIST_BINS,
                 base_rates={g: float(d.mean) for g, d in sorted(dists.items())})
    return FigureOutput("fig4", ("group", "lo", "hi", "mass"), rows, chart.render(), meta)


def fig5(data_path=None, schema_path=None, seed: int = 42, threshold: float = DEFAULT_THRESHOLD,
         n_lambda: int = 51) -> FigureOutput:
    """AUC and FPR of the higher-base-rate group as its tails are pooled."""
    if data_path is None:
        dists, source = _broward(), "discriminant"
    else:
        _, _, _, dists = fitted_broward(data_path, schema_path)
        source = data_path
    high = max(dists, key=lambda g: dists[g].mean)
    low = min(dists, key=lambda g: dists[g].mean)
    target = analytic_rates(dists[low], threshold).fpr
    rows = degradation_curve(dists[high], threshold, np.linspace(0.0, 0.5, n_lambda))
    parity = find_fpr_parity_degradation(target, dists[high], threshold)
    chart = Chart(f"Degrading {high} scores", "AUC", "false positive rate", xlim=(0.5, 1.0),
                  ylim=(0.0, max(r["fpr"] for r in rows) * 1.1), seed=seed)
    chart.line([r["auc"] for r in rows], [r["fpr"] for r in rows], f"{high} (pooled)", markers=True)
    chart.line([0.5, 1.0], [target, target], f"{low} FPR", dashed=True)
    meta = _meta("fig5", seed, source, threshold=threshold, degraded_group=high, target_group=low,
                 target_fpr=target, parity=parity.to_dict(), schedule="mean_balanced")
    return FigureOutput("fig5", ("lambda", "auc", "fpr", "positive_rate"), rows, chart.render(), meta)


def fig6(seed: int = 42, lam: float = 0.5, mean: float = 0.21, auc: float = 0.76, bins: int = 50) -> FigureOutput:
    """A risk distribution before and after the calibrated redlining contraction."""
    dist = disc_new(mean, auc)
    after = redline_contract(dist, lam)
    rows, series = [], {}
    for name, d in (("before", dist), ("after", after)):
        lo, hi, mass = _histogram(d, bins)
        series[name] = (lo, hi, mass)
        rows += [{"series": name, "lo": a, "hi": b, "mass": m} for a, b, m in zip(lo, hi, mass)]
    ymax = max(float(s[2].max()) for s in series.values()) * 1.1
    chart = Chart(f"Calibrated contraction, lambda = {lam:g}", "risk", "mass per bin", ylim=(0.0, ymax), seed=seed)
    for name, (lo, hi, mass) in series.items():
        chart.bars(lo, hi, mass, name)
    chart.vline(float(dist.mean), "mean")
    meta = _meta("fig6", seed, "discriminant", lam=lam, mean=mean, auc=auc, bins=bins,
                 auc_before=dist_auc(dist), auc_after=0.5 if after.values.size == 1 else dist_auc(after),
                 variance_before=float(dist.variance), variance_after=float(after.variance))
    return FigureOutput("fig6", ("series", "lo", "hi", "mass"), rows, chart.render(), meta)


def fig7_scheme(red=None, blue=None, blue_cuts=FIG7_BLUE_CUTS):
    dists = {"red": red or disc_new(*FIG7_DISTS["red"]), "blue": blue or disc_new(*FIG7_DISTS["blue"])}
    red_cuts = calibrated_cutpoints(dists["blue"], blue_cuts, dists["red"])
    return dists, CoarseScheme({"red": red_cuts, "blue": tuple(blue_cuts)})


def fig7(seed: int = 42) -> FigureOutput:
    """Calibrated three-level categories built from group-specific cutpoints."""
    dists, scheme = fig7_scheme()
    report = coarsen(population_from_dists(dists), scheme)
    rows = []
    for r in report.table:
        g = r["group"]
        cuts = (0.0, *scheme.cutpoints[g], 1.0)
        k = scheme.labels.index(r["category"])
        rows.append({"group": g, "category": r["category"], "cut_lo": cuts[k], "cut_hi": cuts[k + 1],
                     "weight": r["weight"], "mean_score": r["mean_score"], "positive_rate": r["positive_rate"]})
    chart = Chart("Category outcome rates", "category index", "positive rate", xlim=(-0.5, 2.5), seed=seed)
    for g in ("red", "blue"):
        sel = [r for r in rows if r["group"] == g]
        chart.line([scheme.labels.index(r["category"]) for r in sel], [r["positive_rate"] for r in sel], g,
                   markers=True)
    meta = _meta("fig7", seed, "discriminant", dists={g: [d.base_rate, d.auc] for g, d in dists.items()},
                 scheme=scheme.to_dict(), calibration_gap=report.calibration_gap,
                 top_cutpoint_gap=report.top_cutpoint_gap, witness=report.witness)
    return FigureOutput("fig7", ("group", "category", "cut_lo", "cut_hi", "weight", "mean_score", "positive_rate"),
                        rows, chart.render(), meta)


def build(fig: str, seed: int = 42, data_path=None, schema_path=None, **params) -> FigureOutput:
    if fig == "fig2":
        return fig2(data_path, schema_path, seed=seed)
    if fig == "fig3":
        return fig3(seed=seed, **params)
    if fig == "fig4":
        return fig4(data_path, schema_path, seed=seed, **params)
    if fig == "fig5":
        return fig5(data_path, schema_path, seed=seed, **params)
    if fig == "fig6":
        return fig6(seed=seed, **params)
    if fig == "fig7":
        return fig7(seed=seed)
    raise ValueError(f"unknown figure {fig!r}; choose from {FIGURES}")


__all__ = ["FIGURES", "FigureOutput", "build", "write_figure", "synthetic_gender_data", "fitted_broward",
           "fig7_scheme"]
