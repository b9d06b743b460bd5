from typing import List, Optional, Sequence, Tuple, Union
import math

import numpy as np
from joblib import Parallel, delayed

from dataio.loader import Dataset
from ensemble.tree import DecisionTree, TreeEnsemble, leaf_indices
from errors import TrainingError
from logs.log import logger, log_training
from metrics.prometheus import MetricsTimer, training_duration_seconds, track_training

# err is floored here when a round is perfect, so the tree weight stays finite
PERFECT_ROUND_ERROR = 1e-10

# rounding can leave a chance-level error a hair below 1 - 1/K
CHANCE_TOLERANCE = 1e-12


def _weighted_gini_sums(counts: np.ndarray, totals: np.ndarray) -> np.ndarray:
    """W * gini = W - sum_k c_k^2 / W, zero for empty sides"""
    with np.errstate(divide="ignore", invalid="ignore"):
        result = totals - (counts ** 2).sum(axis=-1) / totals
    return np.where(totals > 0, result, 0.0)


def _best_split(
    rows: np.ndarray,
    onehot: np.ndarray,
    weights: np.ndarray,
    features: Sequence[int],
    min_leaf: int
) -> Optional[Tuple[int, float, float]]:
    """
    Scan midpoints between consecutive distinct sorted values of each
    candidate feature. Returns (feature, threshold, weighted impurity) or None.
    """
    n = rows.shape[0]
    weighted = onehot * weights[:, None]
    total = weighted.sum(axis=0)
    best: Optional[Tuple[int, float, float]] = None

    for f in features:
        order = np.argsort(rows[:, f], kind="stable")
        values = rows[order, f]
        low_counts = np.cumsum(weighted[order], axis=0)[:-1]
        high_counts = total - low_counts
        position = np.arange(1, n)

        valid = (values[:-1] < values[1:]) & (position >= min_leaf) & (n - position >= min_leaf)
        if not valid.any():
            continue

        impurity = (_weighted_gini_sums(low_counts, low_counts.sum(axis=1))
                    + _weighted_gini_sums(high_counts, high_counts.sum(axis=1)))
        impurity = np.where(valid, impurity, np.inf)
        i = int(np.argmin(impurity))
        if best is None or impurity[i] < best[2]:
            threshold = 0.5 * (values[i] + values[i + 1])
            if threshold >= values[i + 1]:
                threshold = values[i]
            best = (int(f), float(threshold), float(impurity[i]))
    return best


def _grow_tree(
    rows: np.ndarray,
    labels: np.ndarray,
    weights: np.ndarray,
    n_classes: int,
    max_depth: int,
    min_leaf: int,
    max_features: Optional[int],
    rng: np.random.Generator
) -> DecisionTree:
    """Greedy Gini CART on weighted rows; rows with zero weight are ignored"""
    present = weights > 0
    rows, labels, weights = rows[present], labels[present], weights[present]
    onehot = np.eye(n_classes)[labels]
    n_features = rows.shape[1]

    feature: List[int] = []
    threshold: List[float] = []
    left: List[int] = []
    right: List[int] = []
    value: List[np.ndarray] = []

    def distribution(idx: np.ndarray) -> np.ndarray:
        counts = (onehot[idx] * weights[idx, None]).sum(axis=0)
        return counts / counts.sum()

    def grow(idx: np.ndarray, depth: int) -> int:
        node = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        dist = distribution(idx)
        value.append(dist)

        if depth >= max_depth or idx.size < 2 * min_leaf or np.count_nonzero(dist) <= 1:
            return node

        if max_features is not None and max_features < n_features:
            candidates = np.sort(rng.choice(n_features, size=max_features, replace=False))
        else:
            candidates = np.arange(n_features)

        split = _best_split(rows[idx], onehot[idx], weights[idx], candidates, min_leaf)
        if split is None:
            return node

        f, t, _ = split
        above = rows[idx, f] > t
        feature[node] = f
        threshold[node] = t
        value[node] = np.zeros(n_classes)
        left[node] = grow(idx[above], depth + 1)
        right[node] = grow(idx[~above], depth + 1)
        return node

    grow(np.arange(rows.shape[0]), 0)
    return DecisionTree(
        feature=np.array(feature), threshold=np.array(threshold),
        left=np.array(left), right=np.array(right),
        value=np.vstack(value), n_features=n_features, n_classes=n_classes,
    )


def _check_training_set(train: Dataset):
    if train.n_rows == 0:
        raise TrainingError("empty dataset")


def as_ensemble(trees: Sequence[DecisionTree], weights: Sequence[float], kind: str, train: Dataset) -> TreeEnsemble:
    """Attach feature names, scaling metadata and class names of the training data"""
    return TreeEnsemble(
        trees=tuple(trees),
        weights=np.asarray(weights, dtype=np.float64),
        kind=kind,
        feature_names=train.feature_names,
        scale_min=train.scale_min,
        scale_max=train.scale_max,
        label_name=train.label_name,
        class_names=train.class_names,
    )


# ============================================================================
# TRAINERS
# ============================================================================

def train_cart(
    train: Dataset,
    max_depth: int,
    min_leaf: int = 1,
    seed: int = 0,
    sample_weight: Optional[np.ndarray] = None,
    max_features: Optional[int] = None
) -> DecisionTree:
    """Single CART tree; leaves store (weighted) empirical class frequencies"""
    _check_training_set(train)
    weights = np.ones(train.n_rows) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
    rng = np.random.default_rng(seed)
    tree = _grow_tree(train.rows, train.labels, weights, train.n_classes,
                      max_depth, max(1, min_leaf), max_features, rng)
    logger.debug(f"cart_grown - nodes={tree.n_nodes}, leaves={tree.leaves.size}")
    return tree


def _forest_member(
    train: Dataset,
    max_depth: int,
    min_leaf: int,
    seed: int,
    index: int,
    bootstrap: bool,
    max_features: Optional[int]
) -> DecisionTree:
    rng = np.random.default_rng([seed, index])
    if bootstrap:
        sample = rng.integers(0, train.n_rows, size=train.n_rows)
        weights = np.bincount(sample, minlength=train.n_rows).astype(np.float64)
    else:
        weights = np.ones(train.n_rows)
    return _grow_tree(train.rows, train.labels, weights, train.n_classes,
                      max_depth, max(1, min_leaf), max_features, rng)


def train_random_forest(
    train: Dataset,
    num_trees: int,
    max_depth: int,
    seed: int = 0,
    min_leaf: int = 1,
    bootstrap: bool = True,
    max_features: Union[str, int, None] = "sqrt",
    n_jobs: int = 1
) -> TreeEnsemble:
    """
    Bagged CART trees with per-split feature subsampling; every weight is 1/M.

    Tree m draws its bootstrap sample and feature subsets from a generator
    seeded by (seed, m), so the forest does not depend on n_jobs.
    """
    _check_training_set(train)
    if num_trees < 1:
        raise TrainingError("num_trees must be at least 1")
    if max_features == "sqrt":
        max_features = max(1, int(math.sqrt(train.n_features)))

    with MetricsTimer(training_duration_seconds, {"kind": "random-forest"}) as timer:
        trees = Parallel(n_jobs=n_jobs)(
            delayed(_forest_member)(train, max_depth, min_leaf, seed, m, bootstrap, max_features)
            for m in range(num_trees)
        )

    track_training("random-forest")
    log_training("random-forest", num_trees, train.n_rows, timer.duration * 1000)
    return as_ensemble(trees, np.full(num_trees, 1.0 / num_trees), "random-forest", train)


def _boost(
    train: Dataset,
    num_trees: int,
    max_depth: int,
    seed: int,
    min_leaf: int
) -> Tuple[List[DecisionTree], List[float]]:
    n_classes = train.n_classes
    chance = 1.0 - 1.0 / n_classes
    sample_weight = np.full(train.n_rows, 1.0 / train.n_rows)
    trees: List[DecisionTree] = []
    tree_weights: List[float] = []

    for m in range(num_trees):
        tree = _grow_tree(train.rows, train.labels, sample_weight, n_classes,
                          max_depth, max(1, min_leaf), None, np.random.default_rng([seed, m]))
        leaves = leaf_indices(tree, train.rows)
        predicted = np.argmax(tree.value[leaves], axis=1)
        missed = predicted != train.labels
        err = float(sample_weight[missed].sum() / sample_weight.sum())

        if err >= chance - CHANCE_TOLERANCE:
            if m == 0:
                raise TrainingError(f"first boosting round is no better than chance (err={err:.4f})")
            logger.warning(f"adaboost_early_stop - round={m}, err={err:.4f}, reason=chance")
            break

        alpha = math.log((1.0 - err) / max(err, PERFECT_ROUND_ERROR)) + math.log(n_classes - 1)
        trees.append(tree)
        tree_weights.append(alpha)

        if err == 0.0:
            logger.info(f"adaboost_early_stop - round={m}, reason=perfect_fit")
            break

        sample_weight = sample_weight * np.exp(alpha * missed)
        sample_weight /= sample_weight.sum()

    return trees, tree_weights


def train_adaboost(
    train: Dataset,
    num_trees: int,
    max_depth: int,
    seed: int = 0,
    min_leaf: int = 1
) -> TreeEnsemble:
    """
    SAMME boosting of weighted CART trees.

    Tree weight is log((1 - err) / err) + log(K - 1). Boosting stops early
    when a round is perfect (err = 0) or no better than chance
    (err >= 1 - 1/K); a first round no better than chance is an error.
    """
    _check_training_set(train)
    if num_trees < 1:
        raise TrainingError("num_trees must be at least 1")

    with MetricsTimer(training_duration_seconds, {"kind": "adaptive-boosting"}) as timer:
        trees, tree_weights = _boost(train, num_trees, max_depth, seed, min_leaf)

    track_training("adaptive-boosting")
    log_training("adaptive-boosting", len(trees), train.n_rows, timer.duration * 1000)
    return as_ensemble(trees, tree_weights, "adaptive-boosting", train)


def train_single_tree(train: Dataset, max_depth: int, min_leaf: int = 1, seed: int = 0) -> TreeEnsemble:
    """train_cart wrapped as a one-tree ensemble with weight 1"""
    with MetricsTimer(training_duration_seconds, {"kind": "single-tree"}) as timer:
        tree = train_cart(train, max_depth=max_depth, min_leaf=min_leaf, seed=seed)
    track_training("single-tree")
    log_training("single-tree", 1, train.n_rows, timer.duration * 1000)
    return as_ensemble([tree], [1.0], "single-tree", train)
