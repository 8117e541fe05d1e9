"""Command-line interface.

Each command writes one directory holding ``manifest.json``, result CSVs
and ``diff_report.json`` (check name, expected, actual, tolerance, pass).
The exit status is 0 exactly when every check passes.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np
import scipy

from . import _kernels
from . import replication as rp
from .brd import BRD_MODELS, complete_observed, fit_brd, gof, mar_counterpart, predict_complete
from .datasets import DataError, EMBEDDED, GrowthDataset, load_embedded, load_spo, read_growth_csv
from .gaussian import MODELS, fit_gaussian
from .ignorance import OVERSPEC_MODELS, ignorance_interval

log = logging.getLogger("incompfit")


def _json(obj):
    return json.dumps(obj, indent=2, sort_keys=True, default=_default) + "\n"


def _default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (set, frozenset, tuple)):
        return sorted(o) if isinstance(o, (set, frozenset)) else list(o)
    raise TypeError(f"not serializable: {type(o).__name__}")


def _manifest(args, command):
    return {
        "command": command,
        "backend": _kernels.BACKEND,
        "versions": {"numpy": np.__version__, "scipy": scipy.__version__, "python": sys.version.split()[0]},
        "data": args.data or "embedded",
        "model": args.model,
        "method": args.method,
        "seed": args.seed,
        "sims": args.sims,
        "grid": args.grid,
        "tolerance": args.tolerance,
        "out": str(args.out),
    }


def _write_report(out, manifest, report):
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.json").write_text(_json(manifest))
    (out / "results.csv").write_text(report.rows_csv())
    for key, val in sorted(report.extra.items()):
        if isinstance(val, str):
            (out / f"{key}.csv").write_text(val)
        elif key == "tables":
            for name, text in sorted(val.items()):
                (out / f"table_{_safe(name)}.csv").write_text(text)
    extra = {k: v for k, v in report.extra.items() if not isinstance(v, str) and k != "tables"}
    diff = {
        "command": report.name,
        "passed": report.passed,
        "n_checks": len(report.checks),
        "n_failed": len(report.failures()),
        "checks": [c.to_record() for c in report.checks],
        "summary": extra,
    }
    (out / "diff_report.json").write_text(_json(diff))
    for c in report.failures():
        print(f"FAIL {c.name}: expected {c.expected}, got {c.actual} (tol {c.tolerance})")
    print(f"{report.name}: {len(report.checks) - len(report.failures())}/{len(report.checks)} checks passed -> {out}")
    return 0 if report.passed else 1


def _safe(name):
    return name.replace("(", "_").replace(")", "").replace("/", "_")


def _data_arg(args):
    return None if args.data in (None, "embedded") else args.data


def cmd_growth_table1(args):
    rep = rp.table1(args.tolerance, _data_arg(args))
    rep3 = rp.table3(args.tolerance, _data_arg(args))
    rep.checks += rep3.checks
    rep.extra["table3"] = rep3.rows_csv()
    return _write_report(args.out, _manifest(args, "growth-table1"), rep)


def cmd_spo_table2(args):
    rep = rp.table2(args.grid, args.tolerance, source=_data_arg(args))
    return _write_report(args.out, _manifest(args, "spo-table2"), rep)


def cmd_spo_tables45(args):
    rep = rp.tables45(args.tolerance, _data_arg(args))
    return _write_report(args.out, _manifest(args, "spo-tables45"), rep)


def cmd_growth_ppc(args):
    rep = rp.growth_ppc(args.seed, args.sims, args.method or "reml", args.tolerance, _data_arg(args))
    return _write_report(args.out, _manifest(args, "growth-ppc"), rep)


def cmd_growth_influence(args):
    rep = rp.growth_influence(args.model or "model1", args.tolerance, _data_arg(args))
    return _write_report(args.out, _manifest(args, "growth-influence"), rep)


def _load_any(data):
    """Embedded name or CSV path; returns ("growth", ds) or ("table", t)."""
    if data in EMBEDDED:
        obj = load_embedded(data)
        return ("table" if data == "spo" else "growth"), obj
    path = Path(data)
    if not path.exists():
        raise DataError(f"data file {data!r} not found; pass a CSV path or one of {EMBEDDED}")
    head = next(csv.reader(io.StringIO(path.read_text())), [])
    if head and head[0].strip() == "pattern":
        return "table", load_spo(path)
    subjects = read_growth_csv(path.read_text())
    variant = "trimmed" if any(not s.complete for s in subjects) else "complete"
    return "growth", GrowthDataset(tuple(subjects), variant)


def cmd_fit(args):
    if not args.data or not args.model:
        raise DataError("fit needs --data and --model")
    kind, obj = _load_any(args.data)
    name = args.model.lower()
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    ok = True
    if kind == "growth":
        if name not in MODELS:
            raise DataError(f"model {args.model!r} is not a Gaussian model; choose from {sorted(MODELS)}")
        fit = fit_gaussian(obj, MODELS[name], args.method or "ml", seed=args.seed)
        rec = fit.to_record()
        ok = fit.converged
        rows = [{"sex": g, "age": a, "mean": fit.mean(g, a)} for g in fit.sexes for a in fit.spec.occasions]
    else:
        if name.upper() in BRD_MODELS:
            fit = fit_brd(obj, BRD_MODELS[name.upper()])
            mar = mar_counterpart(fit)
            g = gof(fit, obj)
            rec = fit.to_record()
            rec["theta_mar"] = mar.theta
            rec["gof"] = {"lr": g.lr, "pearson": g.pearson, "df": g.df, "p_lr": g.p_lr, "p_pearson": g.p_pearson}
            (out / "prediction.csv").write_text(predict_complete(fit).to_csv())
            (out / "completion.csv").write_text(complete_observed(fit, obj).to_csv())
            ok = fit.converged
            rows = [{"quantity": "theta", "value": fit.theta}, {"quantity": "theta_mar", "value": mar.theta}]
        elif name in OVERSPEC_MODELS:
            res = ignorance_interval(obj, OVERSPEC_MODELS[name], grid=args.grid)
            rec = res.to_record()
            (out / "grid.csv").write_text(res.to_csv())
            rows = [{"quantity": "ignorance_lo", "value": res.theta_ii[0]},
                    {"quantity": "ignorance_hi", "value": res.theta_ii[1]}]
        else:
            raise DataError(f"model {args.model!r} does not apply to a contingency table; "
                            f"choose from {sorted(BRD_MODELS) + sorted(OVERSPEC_MODELS)}")
    (out / "manifest.json").write_text(_json(_manifest(args, "fit")))
    (out / "fit.json").write_text(_json(rec))
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in r.items()})
    (out / "results.csv").write_text(buf.getvalue())
    (out / "diff_report.json").write_text(_json({"command": "fit", "passed": bool(ok), "checks": [
        {"name": "fit/converged", "expected": True, "actual": bool(ok), "tolerance": 0.0, "passed": bool(ok)}]}))
    print(f"fit {args.model}: {'converged' if ok else 'NOT converged'} -> {out}")
    return 0 if ok else 1


COMMANDS = {
    "growth-table1": (cmd_growth_table1, "Boys' means and SEs by data version and method (with the covariance-structure table)"),
    "spo-table2": (cmd_spo_table2, "BRD1-9 fits, MAR counterparts, goodness of fit and intervals of ignorance"),
    "spo-tables45": (cmd_spo_tables45, "Predicted and completed tables for BRD1, BRD2, BRD7, BRD9 and MAR counterparts"),
    "growth-ppc": (cmd_growth_ppc, "Simulation-based check of shared versus sex-specific compound symmetry"),
    "growth-influence": (cmd_growth_influence, "Local influence of MNAR perturbations per subject"),
    "fit": (cmd_fit, "Fit one model to an embedded dataset or a CSV file"),
}


def build_parser():
    p = argparse.ArgumentParser(prog="incompfit", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        s = sub.add_parser(name, help=help_, description=help_)
        s.add_argument("--data", help="CSV path, or embedded name: " + ", ".join(EMBEDDED))
        s.add_argument("--model", help="model name (e.g. model1, model7, BRD7, model12)")
        s.add_argument("--method", choices=["ml", "reml"])
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--sims", type=int, default=20)
        s.add_argument("--grid", type=int, help="grid points per sensitivity axis")
        s.add_argument("--out", type=Path, help="output directory (default runs/<command>)")
        s.add_argument("--tolerance", type=float, help="override every comparison tolerance")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    if args.out is None:
        args.out = Path("runs") / args.command
    func = COMMANDS[args.command][0]
    try:
        return func(args)
    except (DataError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
