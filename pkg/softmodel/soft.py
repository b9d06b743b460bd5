"""
Differentiable approximation of a tree ensemble.

Hard indicators on every root-to-leaf edge become sigmoids of steepness
sigma and the ensemble argmax becomes a softmax with temperature tau.
Activations are built in log space (sum of log-sigmoids per path) so long
paths at large sigma do not underflow before they are needed.
"""
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Union
import math

import numpy as np
from scipy.special import expit, softmax

from ensemble.tree import DecisionTree, PathTable, TreeEnsemble, check_dimension
from errors import ArgumentError

# exp() of anything below this is flushed to an exact zero activation
LOG_UNDERFLOW = -700.0


@dataclass(frozen=True)
class SoftConfig:
    sigma: float
    tau: float

    def __post_init__(self):
        for name in ("sigma", "tau"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ArgumentError(f"{name} must be positive and finite, got {value}")


class SoftOutput(NamedTuple):
    probs: np.ndarray
    per_tree: Optional[np.ndarray] = None
    leaf_activations: Optional[List[np.ndarray]] = None


class InputGradient(NamedTuple):
    """values is (n_classes, n_features), or (n_features,) when class_index is set"""
    values: np.ndarray
    class_index: Optional[int] = None


class _Forward(NamedTuple):
    u: np.ndarray            # signed, scaled edge margins
    activations: np.ndarray  # per global leaf
    scores: np.ndarray       # sum_m w_m T~_m(y|x)
    probs: np.ndarray


def sig(z: Union[float, np.ndarray], sigma: float) -> Union[float, np.ndarray]:
    """(1 + exp(sigma * z))^-1, evaluated without overflow"""
    value = expit(-sigma * np.asarray(z, dtype=np.float64))
    return float(value) if np.ndim(value) == 0 else value


def _leaf_log_activations(table: PathTable, x: np.ndarray, sigma: float):
    # left edges contribute sig(theta - x), right edges sig(x - theta);
    # both equal expit(u) with u = dir * sigma * (x - theta)
    u = table.edge_dir * sigma * (x[table.edge_feature] - table.edge_threshold)
    log_edges = -np.logaddexp(0.0, -u)
    log_act = np.bincount(table.edge_leaf, weights=log_edges, minlength=table.n_leaves)
    return u, log_act


def _activations(table: PathTable, x: np.ndarray, sigma: float):
    u, log_act = _leaf_log_activations(table, x, sigma)
    act = np.where(log_act < LOG_UNDERFLOW, 0.0, np.exp(np.maximum(log_act, LOG_UNDERFLOW)))
    return u, act


def _forward(ens: TreeEnsemble, x: np.ndarray, cfg: SoftConfig) -> _Forward:
    table = ens.paths
    u, act = _activations(table, x, cfg.sigma)
    scores = (act * table.leaf_weight) @ table.leaf_dist
    probs = softmax(cfg.tau * scores)
    return _Forward(u=u, activations=act, scores=scores, probs=probs)


def _score_jacobian(ens: TreeEnsemble, fwd: _Forward, cfg: SoftConfig) -> np.ndarray:
    """d scores / d x as (n_classes, n_features)"""
    table = ens.paths
    n_classes, n_features = ens.n_classes, ens.n_features
    # d log expit(u) / dx = dir * sigma * (1 - expit(u))
    coef = fwd.activations[table.edge_leaf] * table.edge_dir * cfg.sigma * expit(-fwd.u)
    weighted = (table.leaf_weight[:, None] * table.leaf_dist)[table.edge_leaf]
    contrib = coef[:, None] * weighted
    index = table.edge_feature[:, None] * n_classes + np.arange(n_classes)
    flat = np.bincount(index.ravel(), weights=contrib.ravel(), minlength=n_features * n_classes)
    return flat.reshape(n_features, n_classes).T


# ============================================================================
# SINGLE TREE
# ============================================================================

def soft_activations(tree: DecisionTree, x: np.ndarray, cfg: SoftConfig) -> np.ndarray:
    """t~_j(x) for every leaf j, ordered as tree.leaves"""
    x = check_dimension(x, tree.n_features)
    table = PathTable.build([tree], np.ones(1))
    _, act = _activations(table, x, cfg.sigma)
    return act


def soft_tree_output(tree: DecisionTree, x: np.ndarray, cfg: SoftConfig) -> np.ndarray:
    """T~(y|x) = sum over leaves of t~_j(x) T(y|j)"""
    act = soft_activations(tree, x, cfg)
    return act @ tree.value[tree.leaves]


# ============================================================================
# ENSEMBLE
# ============================================================================

def soft_ensemble_output(
    ens: TreeEnsemble,
    x: np.ndarray,
    cfg: SoftConfig,
    detail: bool = False
) -> SoftOutput:
    """f~(y|x) = softmax_y(tau * sum_m w_m T~_m(y|x)); per-tree outputs only when detail is set"""
    x = check_dimension(x, ens.n_features)
    fwd = _forward(ens, x, cfg)
    if not detail:
        return SoftOutput(probs=fwd.probs)

    table = ens.paths
    per_tree = np.zeros((ens.n_trees, ens.n_classes))
    np.add.at(per_tree, table.leaf_tree, fwd.activations[:, None] * table.leaf_dist)
    bounds = np.cumsum([tree.leaves.size for tree in ens.trees])[:-1]
    return SoftOutput(
        probs=fwd.probs,
        per_tree=per_tree,
        leaf_activations=np.split(fwd.activations, bounds),
    )


def input_gradient(
    ens: TreeEnsemble,
    x: np.ndarray,
    cfg: SoftConfig,
    class_index: Optional[int] = None
) -> InputGradient:
    """Analytic d f~(y|x) / dx for every class, or for class_index only"""
    x = check_dimension(x, ens.n_features)
    fwd = _forward(ens, x, cfg)
    logits_jac = cfg.tau * _score_jacobian(ens, fwd, cfg)
    mean_jac = fwd.probs @ logits_jac
    if class_index is None:
        return InputGradient(values=fwd.probs[:, None] * (logits_jac - mean_jac))
    y = int(class_index)
    return InputGradient(values=fwd.probs[y] * (logits_jac[y] - mean_jac), class_index=y)


def class_probability_and_gradient(
    ens: TreeEnsemble,
    x: np.ndarray,
    cfg: SoftConfig,
    class_index: int
):
    """f~(y|x) and its input gradient from a single forward pass"""
    fwd = _forward(ens, x, cfg)
    logits_jac = cfg.tau * _score_jacobian(ens, fwd, cfg)
    p = fwd.probs[class_index]
    return float(p), p * (logits_jac[class_index] - fwd.probs @ logits_jac)
