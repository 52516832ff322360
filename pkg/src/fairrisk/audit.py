"""Audit reports for scored, labeled populations under a threshold rule."""

from __future__ import annotations

import csv
import math

import numpy as np

from .errors import SchemaError, UndefinedAUCError
from .metrics import (PARITY_METRICS, Records, ScoredPopulation, _json_num, auc_empirical, balance_metrics,
                      calibration_curve, calibration_gap, confusion, parity_gaps, quantile_edges, rates)
from .policy import GroupThresholdRule, anti_classification_check

AUDIT_COLUMNS = ("group", "score", "label")
_PANEL_KEYS = ("fpr", "fnr", "tpr", "tnr", "ppv", "npv", "positive_rate", "accuracy")


def read_scored_csv(path):
    """Read ``group,score,label[,weight]`` rows; returns ``(population, n_malformed)``.

    Rows with a missing field, a non-numeric or non-finite score, a label other
    than 0/1, or a negative weight are skipped and counted.
    """
    groups, bad = {}, 0
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = [h.strip() for h in (reader.fieldnames or [])]
        missing = [c for c in AUDIT_COLUMNS if c not in header]
        if missing:
            raise SchemaError(f"audit CSV is missing required column {missing[0]!r}")
        reader.fieldnames = header
        has_w = "weight" in header
        for row in reader:
            try:
                g = row["group"].strip()
                s = float(row["score"])
                y = int(float(row["label"]))
                w = float(row["weight"]) if has_w else 1.0
            except (TypeError, ValueError, AttributeError):
                bad += 1
                continue
            if not g or not math.isfinite(s) or y not in (0, 1) or not (math.isfinite(w) and w >= 0):
                bad += 1
                continue
            groups.setdefault(g, ([], [], []))
            for lst, v in zip(groups[g], (s, y, w)):
                lst.append(v)
    pop = {g: Records.from_arrays(*cols) for g, cols in sorted(groups.items())}
    return ScoredPopulation(pop), bad


def _empty_panel():
    return {"n": 0, "weight": 0.0, "rates": {k: None for k in _PANEL_KEYS}, "auc": None,
            "balance": {"negative_mean_score": None, "positive_mean_score": None}, "calibration": []}


def audit(pop: ScoredPopulation, rule: GroupThresholdRule, bins: int = 10, n_malformed: int = 0) -> dict:
    """Per-group rates, AUC, balance and calibration, plus parity gaps and the anti-classification check.

    Calibration bins are quantiles of the pooled scores, shared by all groups.
    Groups named by the rule but absent from the data get sentinel panels.
    """
    edges = quantile_edges(pop.pooled().scores, bins)
    if edges.size < 2:
        edges = np.array([edges[0], np.nextafter(edges[0], np.inf)])
    groups = {}
    for g in pop:
        rec = pop[g]
        panel = rates(confusion(rec, rule.threshold_for(g)))
        try:
            auc = auc_empirical(rec)
        except UndefinedAUCError:
            auc = float("nan")
        try:
            neg, pos = balance_metrics(rec)
        except UndefinedAUCError:
            neg = pos = float("nan")
        groups[g] = {
            "n": len(rec),
            "weight": rec.total_weight,
            "threshold": rule.threshold_for(g),
            "rates": panel.to_dict(),
            "auc": _json_num(auc),
            "balance": {"negative_mean_score": _json_num(neg), "positive_mean_score": _json_num(pos)},
            "calibration": calibration_curve(rec, edges).to_list(),
        }
    for g in rule.thresholds:
        if g not in groups:
            groups[g] = _empty_panel() | {"threshold": rule.thresholds[g]}
    gaps = parity_gaps(pop, rule)
    return {
        "groups": dict(sorted(groups.items())),
        "parity_gaps": {m: _json_num(gaps[m]) for m in PARITY_METRICS},
        "calibration_gap": _json_num(calibration_gap(pop, edges)),
        "bin_edges": edges.tolist(),
        "anti_classification": anti_classification_check(rule).to_dict(),
        "rule": rule.to_dict(),
        "malformed_rows": n_malformed,
    }
