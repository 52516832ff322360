"""Command-line interface.

Exit codes: 0 success, 2 input error, 3 infeasible constraint, 4 missing data file.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import figures
from .audit import audit, read_scored_csv
from .distributions import disc_new, dist_to_dict, load_dist
from .errors import InfeasibleConstraintError
from .metrics import analytic_rates, write_rows_csv
from .parity import ParityConstraint, load_groups, solve
from .perturbations import (CoarseScheme, coarsen, degradation_curve, find_fpr_parity_degradation,
                            redline_contract)
from .policy import CostBenefit, load_rule, pretrial_costs
from .risk_model import ElasticNetConfig, cross_validate, fit, fit_group_specific, ingest_csv, load_schema

EXIT_INPUT, EXIT_INFEASIBLE, EXIT_MISSING = 2, 3, 4


class MissingDataError(FileNotFoundError):
    pass


def _require(path, hint=""):
    if path is not None and not os.path.exists(path):
        raise MissingDataError(f"data file not found: {path}{hint}")
    return path


def _emit(obj: dict, out):
    text = json.dumps(obj, indent=2, sort_keys=True, allow_nan=False, default=_jsonable) + "\n"
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"cannot serialize {type(x).__name__}")


def _nan_to_none(obj):
    if isinstance(obj, float) and obj != obj:
        return None
    if isinstance(obj, dict):
        return {k: _nan_to_none(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_nan_to_none(v) for v in obj]
    return obj


def _dist_arg(args):
    if getattr(args, "dist", None):
        return load_dist(_require(args.dist))
    return disc_new(args.mean, args.auc)


def _costs(args) -> CostBenefit:
    direct = [getattr(args, k) for k in ("b00", "b11", "c01", "c10")]
    if args.c_det is not None or args.b_crime is not None:
        if args.c_det is None or args.b_crime is None or any(v is not None for v in direct):
            raise ValueError("give either both --c-det and --b-crime, or --b00/--b11/--c01/--c10")
        return pretrial_costs(args.c_det, args.b_crime)
    if all(v is None for v in direct):
        raise ValueError("cost-benefit entries required: --c-det/--b-crime or --b00/--b11/--c01/--c10")
    return CostBenefit(*(0.0 if v is None else v for v in direct))


# ---------------------------------------------------------------- commands

def cmd_figure(args):
    hint = "; omit --data (or pass --synthetic) to use the synthetic defaults"
    data = None if args.synthetic else _require(args.data, hint)
    params = {}
    if args.threshold is not None and args.fig in ("fig3", "fig4", "fig5"):
        params["threshold"] = args.threshold
    if args.lam is not None and args.fig == "fig6":
        params["lam"] = args.lam
    if args.data and not args.synthetic and args.fig not in ("fig2", "fig4", "fig5"):
        raise ValueError(f"{args.fig} does not take --data")
    out = figures.build(args.fig, seed=args.seed, data_path=data, schema_path=args.schema, **params)
    out.meta = _nan_to_none(out.meta)
    for path in figures.write_figure(out, args.out):
        print(path)


def cmd_audit(args):
    pop, bad = read_scored_csv(_require(args.data))
    report = audit(pop, load_rule(_require(args.rule)), bins=args.bins, n_malformed=bad)
    report["seed"] = args.seed
    _emit(_nan_to_none(report), args.out)


def cmd_solve_parity(args):
    dists, weights = load_groups(_require(args.groups))
    cb = _costs(args)
    res = solve(dists, weights, cb, ParityConstraint(args.constraint, args.tolerance))
    obj = res.to_dict()
    obj["costs"] = cb.to_dict()
    if args.c_det is not None:
        obj["costs"] |= {"c_det": args.c_det, "b_crime": args.b_crime}
    obj["seed"] = args.seed
    _emit(_nan_to_none(obj), args.out)


def cmd_degrade(args):
    dist = _dist_arg(args)
    grid = np.linspace(0.0, 0.5, args.n_lambda)
    rows = degradation_curve(dist, args.threshold, grid)
    out = args.out or "degradation.csv"
    write_rows_csv(rows, out, ("lambda", "auc", "fpr", "positive_rate"))
    summary = {"curve": out, "seed": args.seed, "threshold": args.threshold}
    target = args.target_fpr
    if args.target_dist:
        target = analytic_rates(load_dist(_require(args.target_dist)), args.threshold).fpr
    if target is not None:
        summary["parity"] = find_fpr_parity_degradation(target, dist, args.threshold).to_dict()
    _emit(summary, None)


def cmd_contract(args):
    dist = _dist_arg(args)
    out = redline_contract(dist, args.lam)
    obj = {"lambda": args.lam, "seed": args.seed, "distribution": dist_to_dict(out),
           "mean": float(out.mean), "variance": float(out.variance)}
    _emit(obj, args.out)


def cmd_coarsen(args):
    pop, bad = read_scored_csv(_require(args.data))
    with open(_require(args.scheme)) as fh:
        scheme = CoarseScheme.from_dict(json.load(fh))
    obj = coarsen(pop, scheme, tol=args.tolerance).to_dict()
    obj["malformed_rows"] = bad
    obj["seed"] = args.seed
    _emit(_nan_to_none(obj), args.out)


def cmd_fit(args):
    data = ingest_csv(_require(args.data), load_schema(args.schema))
    config = ElasticNetConfig(l1=args.l1, l2=args.l2)
    cv = None
    if args.cv:
        config, scores = cross_validate(data, seed=args.seed, base=config)
        cv = [{"l1": k[0], "l2": k[1], "log_likelihood": v} for k, v in scores.items()]
    if args.group_specific:
        obj = fit_group_specific(data, config).to_dict()
    else:
        obj = {"model": fit(data, config).to_dict()}
    obj |= {"config": config.to_dict(), "cv": cv, "n_rows": len(data), "n_dropped": data.n_dropped,
            "n_filtered": data.n_filtered, "label_rates": data.label_rates(), "seed": args.seed}
    _emit(obj, args.out)


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fairrisk", description="Risk-threshold fairness analysis tools.")
    p.add_argument("--seed", type=int, default=42, help="random seed recorded in every output (default 42)")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("figure", help="write a figure's CSV, SVG and metadata")
    f.add_argument("fig", choices=figures.FIGURES)
    f.add_argument("--out", default="figures", help="output directory")
    f.add_argument("--data", help="COMPAS-format CSV for fig2, fig4 and fig5")
    f.add_argument("--schema", help="column-mapping schema JSON (default: bundled ProPublica mapping)")
    f.add_argument("--synthetic", action="store_true", help="ignore --data and use synthetic defaults")
    f.add_argument("--threshold", type=float)
    f.add_argument("--lambda", dest="lam", type=float, help="contraction intensity for fig6")
    f.set_defaults(func=cmd_figure)

    a = sub.add_parser("audit", help="audit a scored population under a threshold rule")
    a.add_argument("--data", required=True, help="CSV with columns group,score,label[,weight]")
    a.add_argument("--rule", required=True, help="rule JSON {thresholds: {...}, default: t}")
    a.add_argument("--bins", type=int, default=10)
    a.add_argument("--out")
    a.set_defaults(func=cmd_audit)

    s = sub.add_parser("solve-parity", help="best group thresholds under a parity constraint")
    s.add_argument("--groups", required=True, help="JSON {groups: {name: {weight, distribution}}}")
    s.add_argument("--constraint", choices=("none", "demographic", "fpr", "ppv"), default="none")
    s.add_argument("--c-det", type=float)
    s.add_argument("--b-crime", type=float)
    for k in ("b00", "b11", "c01", "c10"):
        s.add_argument(f"--{k}", type=float)
    s.add_argument("--tolerance", type=float, default=1e-3)
    s.add_argument("--out")
    s.set_defaults(func=cmd_solve_parity)

    for name, helptext in (("degrade", "tail-pooling degradation curve"), ("contract", "redlining contraction")):
        d = sub.add_parser(name, help=helptext)
        d.add_argument("--dist", help="distribution JSON (default: discriminant from --mean/--auc)")
        d.add_argument("--mean", type=float, default=0.21)
        d.add_argument("--auc", type=float, default=0.76)
        d.add_argument("--out")
        if name == "degrade":
            d.add_argument("--threshold", type=float, default=0.25)
            d.add_argument("--n-lambda", type=int, default=51)
            d.add_argument("--target-fpr", type=float)
            d.add_argument("--target-dist", help="distribution JSON whose FPR at the threshold is the target")
            d.set_defaults(func=cmd_degrade)
        else:
            d.add_argument("--lambda", dest="lam", type=float, default=0.5)
            d.set_defaults(func=cmd_contract)

    c = sub.add_parser("coarsen", help="group-specific coarse categories with a calibration report")
    c.add_argument("--data", required=True, help="CSV with columns group,score,label[,weight]")
    c.add_argument("--scheme", required=True, help="JSON {cutpoints: {group: [...]}, labels: [...]}")
    c.add_argument("--tolerance", type=float, default=0.02)
    c.add_argument("--out")
    c.set_defaults(func=cmd_coarsen)

    m = sub.add_parser("fit", help="fit an elastic-net logistic risk model")
    m.add_argument("--data", required=True)
    m.add_argument("--schema")
    m.add_argument("--l1", type=float, default=1e-3)
    m.add_argument("--l2", type=float, default=1e-3)
    m.add_argument("--cv", action="store_true", help="select (l1, l2) by 5-fold cross-validation")
    m.add_argument("--group-specific", action="store_true")
    m.add_argument("--out")
    m.set_defaults(func=cmd_fit)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except InfeasibleConstraintError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return 0


if __name__ == "__main__":
    sys.exit(main())
