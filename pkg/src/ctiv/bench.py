"""Paired evaluation of receipt-split vs assignment-split trees.

Each cell (design, size n, replicate) draws 2n units once, hands the
first n to the fitting pipeline (half train, half validation) and holds
the last n out as a test set. Both tree variants consume the identical
draw. Accuracy is mean squared error of the leaf effect against the
generator's true unit-level effect, and the headline comparison is the
relative gap (mse_ct - mse_ctiv) / mse_ct in percent.
"""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from io import StringIO
from typing import NamedTuple

import numpy as np

from .dataset import holdout_split
from .errors import CtivError, EstimationError, InputError
from .synth import SyntheticSample, design_spec, generate
from .transform import AssignmentRegime, RegimeKind
from .tree import CausalTree, GrowthConfig, fit_ctiv


class MseEvaluation(NamedTuple):
    mse: float
    n_used: int
    n_excluded: int


@dataclass(frozen=True)
class BenchResult:
    """One cell of the sweep."""

    design_label: str
    n: int
    seed: int
    mse_ct: float
    mse_ctiv: float
    relative_gap_pct: float
    n_weak_leaves: int
    n_excluded_ct: int
    n_excluded_ctiv: int


def evaluate_mse(tree: CausalTree, test_covariates: np.ndarray,
                 true_cate: np.ndarray, effect_kind: str) -> MseEvaluation:
    """Mean squared error of leaf effects against the true effect.

    ``effect_kind`` picks the leaf field: "ate" reads the plain weighted
    contrast, "cace" the complier-scaled one. Test units landing in a
    leaf whose requested effect is undefined are excluded and counted.
    """
    if effect_kind not in ("ate", "cace"):
        raise InputError(f"effect_kind must be 'ate' or 'cace', got {effect_kind!r}")
    truth = np.asarray(true_cate, dtype=np.float64)
    if truth.shape != (np.asarray(test_covariates).shape[0],):
        raise InputError("true_cate must align with test rows")
    ids = tree.assign_leaves(test_covariates)
    effect_by_id = {
        leaf_id: (est.itt_hat if effect_kind == "ate" else est.cace_hat)
        for leaf_id, est in tree.leaf_map.items()
    }
    effects = np.array([effect_by_id[i] for i in ids])
    usable = np.isfinite(effects)
    n_excluded = int((~usable).sum())
    if not usable.any():
        raise EstimationError("every test unit fell in a leaf without an effect")
    mse = float(np.mean((truth[usable] - effects[usable]) ** 2))
    return MseEvaluation(mse=mse, n_used=int(usable.sum()), n_excluded=n_excluded)


def relative_gap(mse_ct: float, mse_ctiv: float) -> float:
    """(mse_ct - mse_ctiv) / mse_ct, in percent."""
    if not (np.isfinite(mse_ct) and np.isfinite(mse_ctiv)):
        raise InputError("MSEs must be finite")
    if mse_ct <= 0.0:
        raise EstimationError("relative gap undefined: receipt-split MSE is 0")
    return 100.0 * (mse_ct - mse_ctiv) / mse_ct


def _cell_seed(base_seed: int, label: str, n: int, rep: int) -> int:
    # label folded in as bytes so the stream is stable across processes
    label_key = int.from_bytes(label.encode("utf-8"), "little")
    ss = np.random.SeedSequence((base_seed, label_key, n, rep))
    return int(ss.generate_state(1)[0])


def _sample_for(label: str, n_total: int, seed: int) -> SyntheticSample:
    if label.startswith("s"):
        scenario = int(label[1:])
        if scenario == 1:
            spec = design_spec(2, n_total, seed, target_cor_wz=0.5, scenario=1)
        else:
            spec = design_spec(2, n_total, seed, scenario=2)
    else:
        spec = design_spec(int(label), n_total, seed)
    return generate(spec)


def run_cell(label: str, n: int, rep: int, base_seed: int = 0,
             max_depth: int = 2, min_leaf_fraction: float = 0.1,
             min_arm_count: int = 10) -> BenchResult:
    """Fit both variants on one shared draw and score them."""
    seed = _cell_seed(base_seed, label, n, rep)
    sample = _sample_for(label, 2 * n, seed)
    est_rows = np.arange(n)
    test_rows = np.arange(n, 2 * n)
    est = sample.dataset.subset(est_rows)
    test_x = sample.dataset.covariates[test_rows]
    test_truth = sample.true_cate[test_rows]
    split = holdout_split(est, (0.5, 0.5, 0.0), seed=seed)

    common = dict(max_depth=max_depth, min_leaf_fraction=min_leaf_fraction,
                  min_arm_count=min_arm_count)
    ct_cfg = GrowthConfig(regime=AssignmentRegime(RegimeKind.CT), **common)
    iv_cfg = GrowthConfig(regime=AssignmentRegime(RegimeKind.IV_RANDOMIZED),
                          **common)
    ct_tree = fit_ctiv(est, ct_cfg, split, seed)
    iv_tree = fit_ctiv(est, iv_cfg, split, seed)

    ct_eval = evaluate_mse(ct_tree, test_x, test_truth, "ate")
    iv_eval = evaluate_mse(iv_tree, test_x, test_truth, "cace")
    return BenchResult(
        design_label=label,
        n=n,
        seed=seed,
        mse_ct=ct_eval.mse,
        mse_ctiv=iv_eval.mse,
        relative_gap_pct=relative_gap(ct_eval.mse, iv_eval.mse),
        n_weak_leaves=sum(est.weak_instrument for est in iv_tree.leaves()),
        n_excluded_ct=ct_eval.n_excluded,
        n_excluded_ctiv=iv_eval.n_excluded,
    )


def _run_cell_args(args) -> BenchResult | dict:
    try:
        return run_cell(*args)
    except CtivError as exc:
        return {"design": args[0], "n": args[1], "rep": args[2],
                "error": type(exc).__name__, "message": str(exc)}


def run_sweep(designs: list[str], sizes: list[int], n_seeds: int,
              base_seed: int = 0, max_depth: int = 2,
              min_leaf_fraction: float = 0.1, min_arm_count: int = 10,
              workers: int = 1,
              progress=None) -> tuple[list[BenchResult], list[dict]]:
    """All cells of designs x sizes x replicates.

    Failing cells are recorded (label, n, rep, error) and skipped.
    ``workers > 1`` fans cells out to processes; per-cell seeds make the
    results identical either way.
    """
    if n_seeds < 1:
        raise InputError("n_seeds must be >= 1")
    cells = [(label, n, rep, base_seed, max_depth, min_leaf_fraction, min_arm_count)
             for label in designs for n in sizes for rep in range(n_seeds)]
    results: list[BenchResult] = []
    failures: list[dict] = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_cell_args, cells, chunksize=1))
    else:
        outcomes = []
        for args in cells:
            outcomes.append(_run_cell_args(args))
            if progress:
                progress(args[0], args[1], args[2])
    for outcome in outcomes:
        if isinstance(outcome, BenchResult):
            results.append(outcome)
        else:
            failures.append(outcome)
    return results, failures


def aggregate(results: list[BenchResult]) -> dict[tuple[str, int], dict[str, float]]:
    """Per (design, n): means and standard deviations across replicates."""
    cells: dict[tuple[str, int], list[BenchResult]] = {}
    for res in results:
        cells.setdefault((res.design_label, res.n), []).append(res)
    out: dict[tuple[str, int], dict[str, float]] = {}
    for key, rows in cells.items():
        gaps = np.array([r.relative_gap_pct for r in rows])
        m_ct = np.array([r.mse_ct for r in rows])
        m_iv = np.array([r.mse_ctiv for r in rows])
        out[key] = {
            "n_reps": len(rows),
            "mse_ct_mean": float(m_ct.mean()),
            "mse_ct_sd": float(m_ct.std(ddof=1)) if len(rows) > 1 else 0.0,
            "mse_ctiv_mean": float(m_iv.mean()),
            "mse_ctiv_sd": float(m_iv.std(ddof=1)) if len(rows) > 1 else 0.0,
            "gap_mean": float(gaps.mean()),
            "gap_sd": float(gaps.std(ddof=1)) if len(rows) > 1 else 0.0,
        }
    return out


def format_summary(results: list[BenchResult]) -> str:
    """Design-by-size table: MSE of both variants plus the relative gap."""
    agg = aggregate(results)
    designs = sorted({k[0] for k in agg}, key=lambda s: (s.startswith("s"), s))
    sizes = sorted({k[1] for k in agg})
    width = 12
    out = StringIO()
    header = "design  metric        " + "".join(f"N={n}".rjust(width) for n in sizes)
    out.write(header + "\n")
    out.write("-" * len(header) + "\n")
    for label in designs:
        rows = [("MSE CT-IV", "mse_ctiv_mean", "{:.3f}"),
                ("MSE CT", "mse_ct_mean", "{:.3f}"),
                ("Rel. gap %", "gap_mean", "{:.1f}")]
        for i, (name, key, fmt) in enumerate(rows):
            cells = []
            for n in sizes:
                stats = agg.get((label, n))
                cells.append(fmt.format(stats[key]).rjust(width)
                             if stats else "-".rjust(width))
            tag = label if i == 0 else ""
            out.write(f"{tag:<7} {name:<13} " + "".join(cells) + "\n")
        out.write("\n")
    return out.getvalue()


def results_csv(results: list[BenchResult]) -> str:
    """Raw per-cell results as CSV text."""
    out = StringIO()
    writer = csv.writer(out)
    writer.writerow(["design", "n", "seed", "mse_ct", "mse_ctiv",
                     "relative_gap_pct", "n_weak_leaves",
                     "n_excluded_ct", "n_excluded_ctiv"])
    for r in results:
        writer.writerow([r.design_label, r.n, r.seed, repr(r.mse_ct),
                         repr(r.mse_ctiv), repr(r.relative_gap_pct),
                         r.n_weak_leaves, r.n_excluded_ct, r.n_excluded_ctiv])
    return out.getvalue()
