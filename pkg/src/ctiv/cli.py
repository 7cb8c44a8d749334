"""Command line frontend.

Subcommands: fit, predict, simulate, bench. Exit codes: 0 success,
1 usage problems, 2 data/validation problems, 3 estimation failures.
Failures print a one-line JSON object to stderr so callers can parse
them. Every command writes its fully resolved configuration next to its
outputs; re-running the same invocation reproduces the outputs byte for
byte (nothing time- or host-dependent is ever written).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bench import format_summary, results_csv, run_sweep
from .dataset import ColumnSchema, holdout_split, load_csv, save_csv
from .effects import leaf_report_rows
from .errors import DATA_ERRORS, ESTIMATION_ERRORS, CtivError, InputError
from .synth import design_spec, generate
from .transform import AssignmentRegime, RegimeKind
from .tree import GrowthConfig, export_dot, export_json, fit_ctiv, load_json

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_ESTIMATION = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags; this package reserves 2 for
    # data errors, so usage problems are rerouted to exit code 1
    def error(self, message):
        raise _UsageError(message)


def _emit_error(kind: str, message: str) -> None:
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _parse_id_list(raw: str, allowed: set[str], what: str) -> list[str]:
    """Accepts '1,3,s1' and ranges like '1-4'."""
    items: list[str] = []
    for chunk in raw.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        if "-" in chunk and not chunk.startswith("s"):
            lo, _, hi = chunk.partition("-")
            try:
                items.extend(str(i) for i in range(int(lo), int(hi) + 1))
            except ValueError:
                raise _UsageError(f"bad {what} range '{chunk}'") from None
        else:
            items.append(chunk)
    for item in items:
        if item not in allowed:
            raise _UsageError(f"unknown {what} '{item}'")
    if not items:
        raise _UsageError(f"no {what}s given")
    return items


def _schema_from_args(args) -> ColumnSchema:
    features = None
    if args.features:
        features = tuple(c.strip() for c in args.features.split(",") if c.strip())
    return ColumnSchema(y_col=args.y_col, w_col=args.w_col, z_col=args.z_col,
                        feature_cols=features)


def _add_fit_parser(sub) -> None:
    p = sub.add_parser("fit", help="fit a tree on a CSV file")
    p.add_argument("--input", required=True, help="input CSV path")
    p.add_argument("--regime", required=True,
                   choices=[k.value for k in RegimeKind])
    p.add_argument("--y-col", default="y")
    p.add_argument("--w-col", default="w")
    p.add_argument("--z-col", default="z")
    p.add_argument("--features", default=None,
                   help="comma-separated feature columns (default: all others)")
    p.add_argument("--max-depth", type=int, default=2)
    p.add_argument("--min-leaf-fraction", type=float, default=0.1)
    p.add_argument("--min-arm-count", type=int, default=10)
    p.add_argument("--alpha", type=float, default=None,
                   help="skip holdout selection and prune at this complexity price")
    p.add_argument("--ridge", type=float, default=1e-6)
    p.add_argument("--trim-lo", type=float, default=0.1)
    p.add_argument("--trim-hi", type=float, default=0.9)
    p.add_argument("--train-frac", type=float, default=0.5)
    p.add_argument("--val-frac", type=float, default=0.5)
    p.add_argument("--tsls-covariates", action=argparse.BooleanOptionalAction,
                   default=None,
                   help="covariate-adjust the per-leaf TSLS (default: only "
                        "under iv-unconfounded)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default=".")


def _cmd_fit(args) -> int:
    ds = load_csv(args.input, _schema_from_args(args))
    test_frac = 1.0 - args.train_frac - args.val_frac
    if test_frac < -1e-9:
        raise _UsageError("--train-frac plus --val-frac exceed 1")
    test_frac = max(test_frac, 0.0)
    split = holdout_split(ds, (args.train_frac, args.val_frac, test_frac),
                          seed=args.seed)
    cfg = GrowthConfig(
        regime=AssignmentRegime(RegimeKind(args.regime)),
        max_depth=args.max_depth,
        min_leaf_fraction=args.min_leaf_fraction,
        min_arm_count=args.min_arm_count,
        alpha_override=args.alpha,
    )
    tree = fit_ctiv(ds, cfg, split, args.seed, ridge_lambda=args.ridge,
                    trim_lo=args.trim_lo, trim_hi=args.trim_hi,
                    adjust_covariates=args.tsls_covariates)
    out = Path(args.out_dir)
    _write(out / "tree.json", export_json(tree))
    _write(out / "tree.dot", export_dot(tree))
    rows = leaf_report_rows(tree.leaves())
    report = "node_id,n,itt_hat,pi_c_hat,cace_hat,cace_se,first_stage_f\n"
    for row in rows:
        report += ",".join([
            str(row["node_id"]), str(row["n"]), repr(row["itt_hat"]),
            repr(row["pi_c_hat"]), repr(row["cace_hat"]), repr(row["cace_se"]),
            repr(row["first_stage_f"]),
        ]) + "\n"
    _write(out / "leaf_report.csv", report)
    config = _resolved_config(args, [
        "input", "regime", "y_col", "w_col", "z_col", "features", "max_depth",
        "min_leaf_fraction", "min_arm_count", "alpha", "ridge", "trim_lo",
        "trim_hi", "train_frac", "val_frac", "tsls_covariates", "seed",
        "out_dir",
    ])
    config["resolved"] = {
        "alpha": tree.alpha,
        "n_input": tree.n_input,
        "n_trimmed": tree.n_trimmed,
        "n_omega": tree.n_omega,
        "adjust_covariates": tree.adjust_covariates,
        "overall_cace": tree.overall_cace,
        "n_leaves": tree.root.n_leaves(),
    }
    _write(out / "run.json", json.dumps(config, sort_keys=True, indent=1))
    print(f"fitted {args.regime} tree: {tree.root.n_leaves()} leaves, "
          f"alpha={tree.alpha:.6g}, trimmed {tree.n_trimmed}/{tree.n_input}")
    print(f"overall CACE (complier-weighted): {tree.overall_cace:.4f}")
    weak = [est.leaf_id for est in tree.leaves() if est.weak_instrument]
    if weak:
        print(f"weak-instrument leaves (first-stage F < 10): {weak}")
    for row in rows:
        print(f"  node {row['node_id']}: n={row['n']} itt={row['itt_hat']:.4f} "
              f"pi_c={row['pi_c_hat']:.4f} cace={row['cace_hat']:.4f} "
              f"se={row['cace_se']:.4f} F={row['first_stage_f']:.1f}")
    return EXIT_OK


def _add_predict_parser(sub) -> None:
    p = sub.add_parser("predict", help="assign rows of a CSV to leaves")
    p.add_argument("--tree", required=True, help="tree.json from fit")
    p.add_argument("--input", required=True, help="CSV with feature columns")
    p.add_argument("--output", required=True, help="output CSV path")


def _cmd_predict(args) -> int:
    tree = load_json(Path(args.tree).read_text(encoding="utf-8"))
    names = list(tree.feature_names)
    with Path(args.input).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise InputError(f"{args.input}: empty file, no header row") from None
        missing = [c for c in names if c not in header]
        if missing:
            raise InputError(
                f"{args.input}: missing feature columns {missing}; the tree "
                f"expects {len(names)} features {names}")
        pos = [header.index(c) for c in names]
        rows = []
        for i, row in enumerate(reader, start=1):
            try:
                rows.append([float(row[j]) for j in pos])
            except (ValueError, IndexError):
                raise InputError(
                    f"{args.input}: bad feature values at data row {i}") from None
    out_lines = ["leaf_id,itt_hat,cace_hat,cace_se"]
    if rows:
        x = np.asarray(rows, dtype=np.float64)
        ids = tree.assign_leaves(x)
        leaf_map = tree.leaf_map
        for leaf_id in ids:
            est = leaf_map[int(leaf_id)]
            out_lines.append(f"{est.leaf_id},{est.itt_hat!r},"
                             f"{est.cace_hat!r},{est.cace_se!r}")
    _write(Path(args.output), "\n".join(out_lines) + "\n")
    print(f"wrote {len(out_lines) - 1} predictions to {args.output}")
    return EXIT_OK


def _add_simulate_parser(sub) -> None:
    p = sub.add_parser("simulate", help="draw one synthetic benchmark sample")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--design", type=int, choices=[1, 2, 3, 4, 5])
    group.add_argument("--scenario", type=int, choices=[1, 2])
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cor-wz", type=float, default=None,
                   help="override the Cor(W,Z) target")
    p.add_argument("--cor-weta", type=float, default=None,
                   help="override the Cor(W,eta) target")
    p.add_argument("--out", required=True, help="output CSV path")


def _cmd_simulate(args) -> int:
    kwargs = {}
    if args.cor_wz is not None:
        kwargs["target_cor_wz"] = args.cor_wz
    if args.cor_weta is not None:
        kwargs["target_cor_weta"] = args.cor_weta
    if args.scenario is not None:
        if args.scenario == 1:
            kwargs.setdefault("target_cor_wz", 0.5)
        spec = design_spec(2, args.n, args.seed, scenario=args.scenario, **kwargs)
    else:
        spec = design_spec(args.design, args.n, args.seed, **kwargs)
    sample = generate(spec)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_csv(sample.dataset, out, extra_columns={"true_cate": sample.true_cate})
    sidecar = {
        "design_id": spec.design_id,
        "scenario": spec.scenario,
        "n": spec.n,
        "seed": spec.seed,
        "k": spec.k,
        "error_dist": spec.error_dist,
        "target_cor_wz": spec.target_cor_wz,
        "target_cor_weta": spec.target_cor_weta,
        "realized_cor_wz": sample.realized_cor_wz,
        "realized_cor_weta": sample.realized_cor_weta,
        "true_cate_column": "true_cate",
    }
    _write(out.with_suffix(out.suffix + ".meta.json"),
           json.dumps(sidecar, sort_keys=True, indent=1))
    print(f"wrote {spec.n} units to {out} "
          f"(Cor(W,Z)={sample.realized_cor_wz:.3f}, "
          f"Cor(W,eta)={sample.realized_cor_weta:.3f})")
    return EXIT_OK


def _add_bench_parser(sub) -> None:
    p = sub.add_parser("bench", help="paired CT vs CT-IV sweep")
    p.add_argument("--designs", default="1-5",
                   help="e.g. '1-5', '2', '1,3,s1,s2'")
    p.add_argument("--sizes", default="500,1000,5000")
    p.add_argument("--seeds", type=int, default=10, help="replicates per cell")
    p.add_argument("--base-seed", type=int, default=0)
    p.add_argument("--max-depth", type=int, default=2)
    p.add_argument("--min-leaf-fraction", type=float, default=0.1)
    p.add_argument("--min-arm-count", type=int, default=10)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out-dir", default=".")


def _cmd_bench(args) -> int:
    allowed = {"1", "2", "3", "4", "5", "s1", "s2"}
    designs = _parse_id_list(args.designs, allowed, "design")
    try:
        sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
    except ValueError:
        raise _UsageError(f"bad --sizes '{args.sizes}'") from None
    if not sizes:
        raise _UsageError("no sizes given")

    def progress(label, n, rep):
        print(f"  done design {label} n={n} rep {rep}", flush=True)

    results, failures = run_sweep(
        designs, sizes, args.seeds, base_seed=args.base_seed,
        max_depth=args.max_depth, min_leaf_fraction=args.min_leaf_fraction,
        min_arm_count=args.min_arm_count, workers=args.workers,
        progress=progress if args.workers == 1 else None)
    summary = format_summary(results) if results else "no successful cells\n"
    out = Path(args.out_dir)
    _write(out / "results.csv", results_csv(results))
    _write(out / "summary.txt", summary)
    config = _resolved_config(args, [
        "designs", "sizes", "seeds", "base_seed", "max_depth",
        "min_leaf_fraction", "min_arm_count", "workers", "out_dir",
    ])
    config["resolved"] = {"designs": designs, "sizes": sizes,
                          "n_cells": len(results) + len(failures),
                          "n_failures": len(failures)}
    if failures:
        config["failures"] = failures
    _write(out / "run.json", json.dumps(config, sort_keys=True, indent=1))
    print(summary, end="")
    if failures:
        print(f"{len(failures)} cell(s) failed; see run.json")
    return EXIT_OK


def _resolved_config(args, keys: list[str]) -> dict:
    return {"command": args.command, "version": __version__,
            "options": {k: getattr(args, k) for k in keys}}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ctiv",
                     description="causal trees with instrumented assignment")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    _add_fit_parser(sub)
    _add_predict_parser(sub)
    _add_simulate_parser(sub)
    _add_bench_parser(sub)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "fit":
            return _cmd_fit(args)
        if args.command == "predict":
            return _cmd_predict(args)
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "bench":
            return _cmd_bench(args)
        raise _UsageError(f"unknown command {args.command!r}")
    except _UsageError as exc:
        _emit_error("UsageError", str(exc))
        return EXIT_USAGE
    except DATA_ERRORS as exc:
        _emit_error(type(exc).__name__, str(exc))
        return EXIT_DATA
    except ESTIMATION_ERRORS as exc:
        _emit_error(type(exc).__name__, str(exc))
        return EXIT_ESTIMATION
    except CtivError as exc:
        _emit_error(type(exc).__name__, str(exc))
        return EXIT_DATA
    except OSError as exc:
        _emit_error("OSError", str(exc))
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
