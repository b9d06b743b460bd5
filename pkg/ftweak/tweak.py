"""
Feature Tweaking baseline.

For every tree and every leaf whose label differs from the instance's
prediction, move the instance onto that leaf's path by setting each split
feature to threshold +/- epsilon, then keep the closest candidate that
flips the whole ensemble. Flipping one tree does not guarantee flipping
the ensemble, so some instances get no counterfactual at all.
"""
from dataclasses import dataclass
from typing import Dict, List, NamedTuple, Optional, Sequence
import math
import time

import numpy as np
from joblib import Parallel, delayed

from distance.functions import DistanceSpec, dist
from ensemble.tree import LEFT, DecisionTree, TreeEnsemble, activated_leaf, check_dimension, predict_hard
from errors import ArgumentError, FocusError
from evalstats.metrics import coverage, d_mean, select_best
from focus.engine import CfResult, record_outcomes
from logs.log import logger, log_explanation, set_instance_id
from metrics.prometheus import track_best_cell, track_grid_cell

METHOD = "feature-tweaking"
DEFAULT_EPSILONS = (0.001, 0.005, 0.01, 0.1)


@dataclass(frozen=True)
class FtConfig:
    epsilon: float
    distance: DistanceSpec

    def __post_init__(self):
        if not (math.isfinite(self.epsilon) and self.epsilon > 0):
            raise ArgumentError(f"epsilon must be positive and finite, got {self.epsilon}")

    def fingerprint(self) -> Dict[str, object]:
        return {"method": METHOD, "epsilon": self.epsilon, "distance": self.distance.kind}


class Candidate(NamedTuple):
    tree_index: int
    leaf: int
    vector: np.ndarray
    reaches_leaf: bool


def counter_leaves(tree: DecisionTree, y_x: int) -> List[int]:
    """Leaves whose argmax label (lowest index on ties) differs from y_x"""
    if not 0 <= y_x < tree.n_classes:
        raise ArgumentError(f"class {y_x} out of range for {tree.n_classes} classes")
    return [int(leaf) for leaf in tree.leaves if tree.leaf_label(leaf) != y_x]


def ft_candidate(tree: DecisionTree, leaf: int, x: np.ndarray, epsilon: float) -> np.ndarray:
    """
    Copy of x with every split feature on the root-to-leaf path set to
    threshold + epsilon (left edge) or threshold - epsilon (right edge).
    A feature split on twice keeps the value of the deeper node.
    """
    candidate = check_dimension(x, tree.n_features).copy()
    for node, direction in tree.path_to(leaf):
        f = tree.feature[node]
        theta = tree.threshold[node]
        candidate[f] = theta + epsilon if direction == LEFT else theta - epsilon
    return candidate


def candidates(ens: TreeEnsemble, x: np.ndarray, y_x: int, epsilon: float) -> List[Candidate]:
    found: List[Candidate] = []
    for m, tree in enumerate(ens.trees):
        for leaf in counter_leaves(tree, y_x):
            vector = ft_candidate(tree, leaf, x, epsilon)
            reached, _ = activated_leaf(tree, vector)
            found.append(Candidate(tree_index=m, leaf=leaf, vector=vector, reaches_leaf=reached == leaf))
    return found


def ft_explain(ens: TreeEnsemble, x: np.ndarray, cfg: FtConfig, instance_index: int = 0) -> CfResult:
    """Closest ensemble-flipping candidate under cfg.distance, or a result without one"""
    start = time.perf_counter()
    x = check_dimension(x, ens.n_features)
    y_x = predict_hard(ens, x).label
    exact = cfg.distance.exact()

    pool = candidates(ens, x, y_x, cfg.epsilon)
    best: Optional[Candidate] = None
    best_label: Optional[int] = None
    best_distance = math.inf
    for candidate in pool:
        label = predict_hard(ens, candidate.vector).label
        if label == y_x:
            continue
        d = dist(exact, x, candidate.vector)
        if d < best_distance:
            best, best_label, best_distance = candidate, label, d

    missed = sum(not c.reaches_leaf for c in pool)
    if missed:
        logger.debug(f"ft_candidates_off_target - instance={instance_index}, count={missed}, total={len(pool)}")

    return CfResult(
        instance_index=instance_index,
        original=x,
        original_label=y_x,
        counterfactual=None if best is None else best.vector,
        cf_label=best_label,
        distance=None if best is None else best_distance,
        method=METHOD,
        elapsed=time.perf_counter() - start,
    )


def _explain_safely(ens: TreeEnsemble, x: np.ndarray, cfg: FtConfig, instance_index: int) -> CfResult:
    # a row of the wrong width is a batch-level SchemaError, not an instance failure
    x = check_dimension(x, ens.n_features)
    original_label = predict_hard(ens, x).label
    set_instance_id(instance_index)
    try:
        result = ft_explain(ens, x, cfg, instance_index)
    except FocusError as exc:
        logger.warning(f"explanation_failed - method={METHOD}, instance={instance_index}, error={exc.detail}")
        result = CfResult(
            instance_index=instance_index,
            original=x,
            original_label=original_label,
            error=exc.detail,
            method=METHOD,
        )
    finally:
        set_instance_id(None)
    log_explanation(METHOD, instance_index, result.found, None, result.distance)
    return result


def ft_batch(
    ens: TreeEnsemble,
    rows: np.ndarray,
    cfg: FtConfig,
    parallelism: int = 1,
    indices: Optional[Sequence[int]] = None
) -> List[CfResult]:
    rows = np.asarray(rows, dtype=np.float64)
    if rows.size == 0:
        return []
    indices = range(rows.shape[0]) if indices is None else indices

    results = Parallel(n_jobs=parallelism)(
        delayed(_explain_safely)(ens, row, cfg, int(i)) for i, row in zip(indices, rows)
    )
    record_outcomes(results, METHOD)
    logger.info(
        f"batch_explained - method={METHOD}, epsilon={cfg.epsilon}, instances={len(results)}, "
        f"found={sum(r.found for r in results)}"
    )
    return results


# ============================================================================
# EPSILON SWEEP
# ============================================================================

@dataclass(frozen=True)
class SweepCell:
    epsilon: float
    coverage: float
    d_mean: Optional[float]
    n_found: int


@dataclass(frozen=True)
class SweepResult:
    best: FtConfig
    best_cell: SweepCell
    cells: List[SweepCell]
    best_results: List[CfResult]


def ft_sweep(
    ens: TreeEnsemble,
    rows: np.ndarray,
    distance: DistanceSpec,
    epsilons: Sequence[float] = DEFAULT_EPSILONS,
    parallelism: int = 1,
    indices: Optional[Sequence[int]] = None
) -> SweepResult:
    """Run ft_batch per epsilon; keep the epsilon with the highest coverage, then the smallest d_mean"""
    if len(epsilons) == 0:
        raise ArgumentError("empty epsilon grid")

    cells: List[SweepCell] = []
    runs: List[List[CfResult]] = []
    for epsilon in epsilons:
        cfg = FtConfig(epsilon=float(epsilon), distance=distance)
        results = ft_batch(ens, rows, cfg, parallelism, indices)
        n_found = sum(r.found for r in results)
        cells.append(SweepCell(
            epsilon=cfg.epsilon,
            coverage=coverage(results, ens),
            d_mean=d_mean(results, distance) if n_found else None,
            n_found=n_found,
        ))
        runs.append(results)
        track_grid_cell(METHOD)

    best_cell = select_best(cells, lambda c: c.coverage, lambda c: c.d_mean)
    position = cells.index(best_cell)
    track_best_cell(METHOD, best_cell.coverage)
    logger.info(f"ft_sweep_finished - cells={len(cells)}, best_epsilon={best_cell.epsilon}, "
                f"coverage={best_cell.coverage:.4f}")
    return SweepResult(
        best=FtConfig(epsilon=best_cell.epsilon, distance=distance),
        best_cell=best_cell,
        cells=cells,
        best_results=runs[position],
    )
