"""Recursive-partitioning engine for heterogeneous effects.

Growth greedily maximises the unit-weighted sum of squared leaf
effects, where each leaf effect is the inverse-probability-weighted
arm contrast on the indicator the regime splits on (receipt for a plain
causal tree, assignment for the instrumented variants). A weakest-link
cost-complexity sweep produces the nested pruning path; the complexity
price alpha is picked on a holdout sample by transformed-outcome loss;
the final tree is re-grown on the pooled fitting sample and pruned at
the selected alpha, and its leaves carry full effect estimates.

Trees are immutable: pruning and annotation build new nodes, so every
snapshot along the pruning path can be kept safely.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace

import numpy as np

from .dataset import Dataset, SplitIndices, trim_by_propensity
from .effects import LeafEstimate, estimate_leaf, overall_cace
from .errors import (
    AggregationError,
    EmptyDatasetError,
    EstimationError,
    GrowthError,
    InputError,
    SplitError,
    ValidationError,
)
from .propensity import PropensityModel, estimate_constant_p, fit_logistic
from .transform import (
    AssignmentRegime,
    RegimeKind,
    leaf_weighted_itt,
    transformed_outcome,
)


@dataclass(frozen=True)
class GrowthConfig:
    """Knobs for growing one tree.

    ``min_leaf_fraction`` is relative to whichever sample a tree is
    grown on. ``alpha_override`` skips holdout selection and prunes the
    final tree at the given complexity price directly.
    """

    regime: AssignmentRegime
    max_depth: int = 2
    min_leaf_fraction: float = 0.1
    min_arm_count: int = 10
    alpha_override: float | None = None

    def __post_init__(self):
        if self.max_depth < 1:
            raise InputError("max_depth must be >= 1")
        if not (0.0 < self.min_leaf_fraction <= 0.5):
            raise InputError("min_leaf_fraction must lie in (0, 0.5]")
        if self.min_arm_count < 1:
            raise InputError("min_arm_count must be >= 1")
        if self.alpha_override is not None and self.alpha_override < 0:
            raise InputError("alpha_override must be nonnegative")


@dataclass(frozen=True)
class TreeNode:
    """One node; leaves have no feature/threshold/children.

    ``node_id`` follows full-binary-tree numbering (root 1, children of
    k are 2k and 2k+1); it is 0 until the tree is finalised. ``tau`` is
    the weighted arm contrast on the sample the node was grown on.
    """

    n: int
    n1: int
    n0: int
    tau: float
    feature: int | None = None
    threshold: float | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    node_id: int = 0
    estimate: LeafEstimate | None = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def n_leaves(self) -> int:
        if self.is_leaf:
            return 1
        return self.left.n_leaves() + self.right.n_leaves()

    def depth(self) -> int:
        if self.is_leaf:
            return 0
        return 1 + max(self.left.depth(), self.right.depth())


@dataclass(frozen=True)
class PathElement:
    alpha_threshold: float
    root: TreeNode
    n_leaves: int


@dataclass(frozen=True)
class PruningPath:
    """Nested subtrees from the full tree down to the bare root."""

    elements: tuple[PathElement, ...]
    n_train: int


# --- growth ---

def _best_split_for_feature(x_col, y, d, e, min_leaf, min_arm):
    """Best (gain, threshold) cutting one feature, or None.

    gain is the unnormalised sum n_left*tau_left^2 + n_right*tau_right^2
    over candidate cuts at midpoints between consecutive distinct
    values; candidates violating leaf-size or arm-count floors are
    discarded. Ties prefer the lowest threshold.
    """
    order = np.argsort(x_col, kind="stable")
    xs = x_col[order]
    cuts = np.flatnonzero(xs[:-1] < xs[1:])
    if cuts.size == 0:
        return None
    yo = y[order]
    do = d[order].astype(np.float64)
    eo = e[order]
    wt = do / eo
    wc = (1.0 - do) / (1.0 - eo)
    c_wty = np.cumsum(wt * yo)
    c_wt = np.cumsum(wt)
    c_wcy = np.cumsum(wc * yo)
    c_wc = np.cumsum(wc)
    c_n1 = np.cumsum(do)
    n = xs.size
    n_left = cuts + 1
    n_right = n - n_left
    n1_left = c_n1[cuts]
    n1_right = c_n1[-1] - n1_left
    n0_left = n_left - n1_left
    n0_right = n_right - n1_right
    valid = (
        (n_left >= min_leaf) & (n_right >= min_leaf)
        & (n1_left >= min_arm) & (n0_left >= min_arm)
        & (n1_right >= min_arm) & (n0_right >= min_arm)
    )
    if not valid.any():
        return None
    with np.errstate(divide="ignore", invalid="ignore"):
        tau_left = c_wty[cuts] / c_wt[cuts] - c_wcy[cuts] / c_wc[cuts]
        tau_right = ((c_wty[-1] - c_wty[cuts]) / (c_wt[-1] - c_wt[cuts])
                     - (c_wcy[-1] - c_wcy[cuts]) / (c_wc[-1] - c_wc[cuts]))
        gain = n_left * tau_left ** 2 + n_right * tau_right ** 2
    gain = np.where(valid, gain, -np.inf)
    best = int(np.argmax(gain))         # argmax takes the first max -> lowest threshold
    threshold = float((xs[cuts[best]] + xs[cuts[best] + 1]) / 2.0)
    return float(gain[best]), threshold


def _grow_node(x, y, d, e, depth, cfg, min_leaf):
    n = y.size
    n1 = int(d.sum())
    tau = leaf_weighted_itt(y, d, e)
    node = TreeNode(n=n, n1=n1, n0=n - n1, tau=float(tau))
    if depth >= cfg.max_depth:
        return node
    best = None
    for f in range(x.shape[1]):
        cand = _best_split_for_feature(x[:, f], y, d, e, min_leaf,
                                       cfg.min_arm_count)
        if cand is not None and (best is None or cand[0] > best[1]):
            best = (f, cand[0], cand[1])
    if best is None:
        return node
    feature, gain, threshold = best[0], best[1], best[2]
    if gain <= n * tau * tau:
        return node                     # no strict heterogeneity improvement
    mask = x[:, feature] <= threshold
    left = _grow_node(x[mask], y[mask], d[mask], e[mask], depth + 1, cfg, min_leaf)
    right = _grow_node(x[~mask], y[~mask], d[~mask], e[~mask], depth + 1, cfg, min_leaf)
    return replace(node, feature=int(feature), threshold=float(threshold),
                   left=left, right=right)


def grow(train: Dataset, regime: AssignmentRegime, cfg: GrowthConfig) -> TreeNode:
    """Grow the maximal tree on a fitting sample.

    The regime must be resolved against exactly these units (constant
    share or per-unit probabilities).
    """
    n = train.n_units
    d = (train.w if regime.splits_on_receipt else train.z).astype(np.int64)
    e = regime.unit_probabilities(n)
    min_leaf = max(1, math.ceil(cfg.min_leaf_fraction * n))
    n1 = int(d.sum())
    if min(n1, n - n1) < cfg.min_arm_count:
        raise GrowthError(
            f"root has arm counts ({n1}, {n - n1}); need >= {cfg.min_arm_count} each")
    return _grow_node(train.covariates, train.y, d, e, 0, cfg, min_leaf)


# --- pruning ---

def _leaf_score_sum(node: TreeNode) -> float:
    """Sum of n * tau^2 over the leaves below (or at) this node."""
    if node.is_leaf:
        return node.n * node.tau * node.tau
    return _leaf_score_sum(node.left) + _leaf_score_sum(node.right)


def _weakest_alpha(node: TreeNode, n_train: int) -> float:
    """Smallest collapse price over all internal nodes of this subtree."""
    if node.is_leaf:
        return math.inf
    gain = (_leaf_score_sum(node) - node.n * node.tau * node.tau) / n_train
    own = gain / (node.n_leaves() - 1)
    return min(own, _weakest_alpha(node.left, n_train),
               _weakest_alpha(node.right, n_train))


def _collapse_at_or_below(node: TreeNode, price: float, n_train: int) -> TreeNode:
    """Collapse, top-down, every internal node whose price is <= price."""
    if node.is_leaf:
        return node
    gain = (_leaf_score_sum(node) - node.n * node.tau * node.tau) / n_train
    if gain / (node.n_leaves() - 1) <= price:
        return replace(node, feature=None, threshold=None, left=None, right=None)
    return replace(node,
                   left=_collapse_at_or_below(node.left, price, n_train),
                   right=_collapse_at_or_below(node.right, price, n_train))


def prune_path(root: TreeNode, n_train: int) -> PruningPath:
    """Weakest-link cost-complexity path.

    Element zero is the full tree at threshold 0; each later element
    records the smallest alpha at which its subtree becomes optimal.
    Thresholds increase strictly and leaf counts decrease strictly down
    to the bare root.
    """
    if n_train < 1:
        raise InputError("n_train must be positive")
    elements = [PathElement(0.0, root, root.n_leaves())]
    current = root
    while not current.is_leaf:
        price = _weakest_alpha(current, n_train)
        # collapsing can expose ancestors at the same price; sweep until clear
        while True:
            current = _collapse_at_or_below(current, price, n_train)
            if current.is_leaf or _weakest_alpha(current, n_train) > price:
                break
        elements.append(PathElement(float(price), current, current.n_leaves()))
    return PruningPath(tuple(elements), n_train)


# --- alpha selection on a holdout sample ---

def _predict_tau(root: TreeNode, x: np.ndarray) -> np.ndarray:
    out = np.empty(x.shape[0])

    def rec(node: TreeNode, idx: np.ndarray) -> None:
        if node.is_leaf:
            out[idx] = node.tau
            return
        goes_left = x[idx, node.feature] <= node.threshold
        rec(node.left, idx[goes_left])
        rec(node.right, idx[~goes_left])

    rec(root, np.arange(x.shape[0]))
    return out


def holdout_loss(root: TreeNode, validation: Dataset,
                 regime: AssignmentRegime) -> float:
    """Negative mean squared gap between transformed outcomes and leaf effects."""
    n = validation.n_units
    d = validation.w if regime.splits_on_receipt else validation.z
    e = regime.unit_probabilities(n)
    y_star = transformed_outcome(validation.y, d, e)
    tau = _predict_tau(root, validation.covariates)
    if not np.isfinite(tau).all():
        raise EstimationError("a validation unit reached a leaf without an effect")
    return float(-np.mean((y_star - tau) ** 2))


def select_alpha(path: PruningPath, validation: Dataset,
                 regime: AssignmentRegime) -> tuple[float, TreeNode]:
    """Pick the subtree with the best holdout loss; return (alpha, subtree).

    Ties go to the smaller subtree. The returned alpha is the geometric
    midpoint of the threshold interval over which the chosen subtree is
    optimal (its own threshold when the interval is unbounded or starts
    at zero).
    """
    if validation.n_units < 1:
        raise EmptyDatasetError("validation sample is empty")
    best_k = 0
    best_q = -math.inf
    for k, element in enumerate(path.elements):
        q = holdout_loss(element.root, validation, regime)
        if q >= best_q:                 # later elements have fewer leaves
            best_q = q
            best_k = k
    t_k = path.elements[best_k].alpha_threshold
    if best_k == len(path.elements) - 1 or t_k == 0.0:
        alpha = t_k
    else:
        alpha = math.sqrt(t_k * path.elements[best_k + 1].alpha_threshold)
    return float(alpha), path.elements[best_k].root


def prune_at_alpha(root: TreeNode, alpha: float, n_train: int) -> TreeNode:
    """Subtree the cost-complexity path selects at a fixed alpha."""
    if alpha < 0:
        raise InputError("alpha must be nonnegative")
    path = prune_path(root, n_train)
    chosen = path.elements[0].root
    for element in path.elements:
        if element.alpha_threshold <= alpha:
            chosen = element.root
    return chosen


# --- the fitted artifact ---

@dataclass(frozen=True)
class CausalTree:
    """A finished tree plus everything needed to reuse or audit it."""

    root: TreeNode
    feature_names: tuple[str, ...]
    regime_kind: RegimeKind
    alpha: float
    p_hat: float | None
    propensity: PropensityModel | None
    adjust_covariates: bool
    n_input: int
    n_trimmed: int
    n_train: int
    n_validation: int
    n_omega: int
    seed: int
    max_depth: int
    min_leaf_fraction: float
    min_arm_count: int
    overall_cace: float = float("nan")

    def leaves(self) -> list[LeafEstimate]:
        found: list[LeafEstimate] = []

        def rec(node: TreeNode) -> None:
            if node.is_leaf:
                if node.estimate is None:
                    raise EstimationError(f"leaf {node.node_id} has no estimate")
                found.append(node.estimate)
            else:
                rec(node.left)
                rec(node.right)

        rec(self.root)
        return sorted(found, key=lambda est: est.leaf_id)

    def assign_leaves(self, covariates: np.ndarray) -> np.ndarray:
        """Leaf node_id for every row of a covariate matrix."""
        x = np.asarray(covariates, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != len(self.feature_names):
            raise InputError(
                f"expected (N, {len(self.feature_names)}) covariates, got {x.shape}")
        out = np.empty(x.shape[0], dtype=np.int64)

        def rec(node: TreeNode, idx: np.ndarray) -> None:
            if node.is_leaf:
                out[idx] = node.node_id
                return
            goes_left = x[idx, node.feature] <= node.threshold
            rec(node.left, idx[goes_left])
            rec(node.right, idx[~goes_left])

        rec(self.root, np.arange(x.shape[0]))
        return out

    @property
    def leaf_map(self) -> dict[int, LeafEstimate]:
        return {est.leaf_id: est for est in self.leaves()}

    def predict_leaf(self, x: np.ndarray) -> LeafEstimate:
        """Estimate attached to the leaf containing one covariate vector."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (len(self.feature_names),):
            raise InputError(
                f"expected {len(self.feature_names)} features, got {x.shape}")
        node = self.root
        while not node.is_leaf:
            node = node.left if x[node.feature] <= node.threshold else node.right
        if node.estimate is None:
            raise EstimationError(f"leaf {node.node_id} has no estimate")
        return node.estimate


def _assign_ids_and_estimates(node, node_id, unit_idx, frame, adjust):
    x, y, z, w, e, regime = frame
    if node.is_leaf:
        est = estimate_leaf(node_id, y[unit_idx], z[unit_idx], w[unit_idx],
                            x[unit_idx], regime, e[unit_idx], adjust)
        return replace(node, node_id=node_id, estimate=est)
    goes_left = x[unit_idx, node.feature] <= node.threshold
    left = _assign_ids_and_estimates(node.left, 2 * node_id,
                                     unit_idx[goes_left], frame, adjust)
    right = _assign_ids_and_estimates(node.right, 2 * node_id + 1,
                                      unit_idx[~goes_left], frame, adjust)
    return replace(node, node_id=node_id, left=left, right=right)


def fit_ctiv(ds: Dataset, cfg: GrowthConfig, split: SplitIndices, seed: int,
             *, ridge_lambda: float = 1e-6, trim_lo: float = 0.1,
             trim_hi: float = 0.9,
             adjust_covariates: bool | None = None) -> CausalTree:
    """Full fitting pipeline.

    1. estimate assignment probabilities on every input unit;
    2. trim to probabilities inside [trim_lo, trim_hi];
    3. grow the maximal tree on the training rows;
    4. build its cost-complexity path;
    5. price complexity on the validation rows (unless overridden);
    6. re-grow on train+validation and prune at the chosen alpha;
    7. attach per-leaf effect estimates computed on train+validation.

    ``adjust_covariates=None`` resolves to True exactly for the
    unconfounded-assignment regime.
    """
    kind = cfg.regime.kind
    tr = np.asarray(split.train, dtype=np.int64)
    va = np.asarray(split.validation, dtype=np.int64)
    if np.intersect1d(tr, va).size:
        raise SplitError("train and validation indices overlap")
    for name, idx in (("train", tr), ("validation", va), ("test", split.test)):
        arr = np.asarray(idx, dtype=np.int64)
        if arr.size and (arr.min() < 0 or arr.max() >= ds.n_units):
            raise SplitError(f"{name} indices out of range")

    model: PropensityModel | None = None
    p_hat: float | None = None
    if kind is RegimeKind.CT:
        model = fit_logistic(ds.covariates, ds.w, ridge_lambda=ridge_lambda)
        e_all = model.predict_many(ds.covariates)
    elif kind is RegimeKind.IV_UNCONFOUNDED:
        model = fit_logistic(ds.covariates, ds.z, ridge_lambda=ridge_lambda)
        e_all = model.predict_many(ds.covariates)
    elif kind is RegimeKind.IV_RANDOMIZED:
        p_hat = estimate_constant_p(ds.z)
        e_all = np.full(ds.n_units, p_hat)
    else:
        raise ValidationError(f"unknown regime kind {kind!r}")

    trimmed, kept = trim_by_propensity(ds, e_all, trim_lo, trim_hi)
    e_kept = e_all[kept]
    train_pos = np.flatnonzero(np.isin(kept, tr))
    val_pos = np.flatnonzero(np.isin(kept, va))
    if train_pos.size == 0:
        raise EmptyDatasetError("no training units survive trimming")
    adjust = (kind is RegimeKind.IV_UNCONFOUNDED
              if adjust_covariates is None else bool(adjust_covariates))

    def regime_for(positions: np.ndarray) -> AssignmentRegime:
        if kind is RegimeKind.IV_RANDOMIZED:
            return AssignmentRegime(kind, p_hat=p_hat, model=model)
        return AssignmentRegime(kind, e_hat=e_kept[positions], model=model)

    if cfg.alpha_override is None:
        if val_pos.size == 0:
            raise EmptyDatasetError("no validation units survive trimming")
        train_ds = trimmed.subset(train_pos)
        train_tree = grow(train_ds, regime_for(train_pos), cfg)
        path = prune_path(train_tree, train_ds.n_units)
        alpha, _ = select_alpha(path, trimmed.subset(val_pos),
                                regime_for(val_pos))
    else:
        alpha = float(cfg.alpha_override)

    omega_pos = np.union1d(train_pos, val_pos)
    omega_ds = trimmed.subset(omega_pos)
    omega_regime = regime_for(omega_pos)
    full = grow(omega_ds, omega_regime, cfg)
    final = prune_at_alpha(full, alpha, omega_ds.n_units)

    frame = (omega_ds.covariates, omega_ds.y, omega_ds.z, omega_ds.w,
             omega_regime.unit_probabilities(omega_ds.n_units), omega_regime)
    final = _assign_ids_and_estimates(final, 1, np.arange(omega_ds.n_units),
                                      frame, adjust)

    tree = CausalTree(
        root=final,
        feature_names=ds.feature_names,
        regime_kind=kind,
        alpha=float(alpha),
        p_hat=p_hat,
        propensity=model,
        adjust_covariates=adjust,
        n_input=ds.n_units,
        n_trimmed=ds.n_units - kept.size,
        n_train=int(train_pos.size),
        n_validation=int(val_pos.size),
        n_omega=omega_ds.n_units,
        seed=int(seed),
        max_depth=cfg.max_depth,
        min_leaf_fraction=cfg.min_leaf_fraction,
        min_arm_count=cfg.min_arm_count,
    )
    ok = [est for est in tree.leaves() if est.compliers_ok]
    try:
        overall = overall_cace(ok) if ok else float("nan")
    except AggregationError:
        overall = float("nan")
    return replace(tree, overall_cace=overall)


# --- serialisation ---

def _node_to_dict(node: TreeNode) -> dict:
    out: dict = {
        "node_id": node.node_id,
        "n": node.n,
        "n1": node.n1,
        "n0": node.n0,
        "tau": node.tau,
    }
    if node.is_leaf:
        out["estimate"] = None if node.estimate is None else asdict(node.estimate)
    else:
        out["feature"] = node.feature
        out["threshold"] = node.threshold
        out["left"] = _node_to_dict(node.left)
        out["right"] = _node_to_dict(node.right)
    return out


def _node_from_dict(data: dict) -> TreeNode:
    est = None
    if data.get("estimate") is not None:
        est = LeafEstimate(**data["estimate"])
    if "left" in data:
        return TreeNode(
            n=data["n"], n1=data["n1"], n0=data["n0"], tau=data["tau"],
            feature=data["feature"], threshold=data["threshold"],
            left=_node_from_dict(data["left"]),
            right=_node_from_dict(data["right"]),
            node_id=data["node_id"],
        )
    return TreeNode(n=data["n"], n1=data["n1"], n0=data["n0"], tau=data["tau"],
                    node_id=data["node_id"], estimate=est)


def export_json(tree: CausalTree) -> str:
    """Canonical JSON for a fitted tree; stable byte for byte."""
    prop = None
    if tree.propensity is not None:
        prop = {
            "intercept": tree.propensity.intercept,
            "coefficients": [float(c) for c in tree.propensity.coefficients],
            "ridge_lambda": tree.propensity.ridge_lambda,
            "converged": tree.propensity.converged,
            "iterations": tree.propensity.iterations,
        }
    payload = {
        "format": "ctiv-tree",
        "version": 1,
        "meta": {
            "feature_names": list(tree.feature_names),
            "regime": tree.regime_kind.value,
            "alpha": tree.alpha,
            "p_hat": tree.p_hat,
            "propensity": prop,
            "adjust_covariates": tree.adjust_covariates,
            "n_input": tree.n_input,
            "n_trimmed": tree.n_trimmed,
            "n_train": tree.n_train,
            "n_validation": tree.n_validation,
            "n_omega": tree.n_omega,
            "seed": tree.seed,
            "max_depth": tree.max_depth,
            "min_leaf_fraction": tree.min_leaf_fraction,
            "min_arm_count": tree.min_arm_count,
            "overall_cace": tree.overall_cace,
        },
        "tree": _node_to_dict(tree.root),
    }
    return json.dumps(payload, sort_keys=True, indent=1)


def load_json(text: str) -> CausalTree:
    """Rebuild a fitted tree from its JSON export."""
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"not valid JSON: {exc}") from None
    if payload.get("format") != "ctiv-tree":
        raise ValidationError("not a serialised tree (missing format marker)")
    meta = payload["meta"]
    prop = None
    if meta["propensity"] is not None:
        p = meta["propensity"]
        coefs = np.asarray(p["coefficients"], dtype=np.float64)
        coefs.setflags(write=False)
        prop = PropensityModel(
            intercept=p["intercept"], coefficients=coefs,
            ridge_lambda=p["ridge_lambda"], converged=p["converged"],
            iterations=p["iterations"],
        )
    return CausalTree(
        root=_node_from_dict(payload["tree"]),
        feature_names=tuple(meta["feature_names"]),
        regime_kind=RegimeKind(meta["regime"]),
        alpha=meta["alpha"],
        p_hat=meta["p_hat"],
        propensity=prop,
        adjust_covariates=meta["adjust_covariates"],
        n_input=meta["n_input"],
        n_trimmed=meta["n_trimmed"],
        n_train=meta["n_train"],
        n_validation=meta["n_validation"],
        n_omega=meta["n_omega"],
        seed=meta["seed"],
        max_depth=meta["max_depth"],
        min_leaf_fraction=meta["min_leaf_fraction"],
        min_arm_count=meta["min_arm_count"],
        overall_cace=meta["overall_cace"],
    )


def export_dot(tree: CausalTree) -> str:
    """Graphviz rendering: effect and unit share per node, split var below."""
    lines = [
        "digraph causal_tree {",
        '  node [shape=box, fontname="Helvetica"];',
    ]
    total = tree.n_omega

    def rec(node: TreeNode) -> None:
        share = 100.0 * node.n / total
        label = f"ITT = {node.tau:.3f}\\n{share:.1f}%"
        if not node.is_leaf:
            name = tree.feature_names[node.feature]
            label += f"\\n{name} <= {node.threshold:.4g}"
        lines.append(f'  {node.node_id} [label="{label}"];')
        if not node.is_leaf:
            lines.append(f"  {node.node_id} -> {node.left.node_id};")
            lines.append(f"  {node.node_id} -> {node.right.node_id};")
            rec(node.left)
            rec(node.right)

    rec(tree.root)
    lines.append("}")
    return "\n".join(lines) + "\n"
