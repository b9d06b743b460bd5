from dataclasses import dataclass, field
from functools import cached_property
from typing import List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from config import settings
from errors import SchemaError

KINDS = ("single-tree", "random-forest", "adaptive-boosting")

LEFT = 1    # x[f] > threshold
RIGHT = -1  # x[f] <= threshold


class Internal(NamedTuple):
    feature_index: int
    threshold: float
    left: int
    right: int


class Leaf(NamedTuple):
    distribution: np.ndarray


class HardPrediction(NamedTuple):
    label: int
    scores: np.ndarray


def _readonly(array, dtype) -> np.ndarray:
    array = np.array(array, dtype=dtype, copy=True)
    array.flags.writeable = False
    return array


def check_dimension(x: np.ndarray, n_features: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != n_features:
        raise SchemaError(f"dimension mismatch: expected {n_features} features, got shape {x.shape}")
    return x


@dataclass(frozen=True, eq=False)
class DecisionTree:
    """
    Binary decision tree stored as flat node arrays, root at index 0.

    Leaves have feature == -1 and carry a class distribution in value; the
    left child is taken when x[feature] > threshold, the right child otherwise.
    """
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_features: int
    n_classes: int

    def __post_init__(self):
        object.__setattr__(self, "feature", _readonly(self.feature, np.int64))
        object.__setattr__(self, "threshold", _readonly(self.threshold, np.float64))
        object.__setattr__(self, "left", _readonly(self.left, np.int64))
        object.__setattr__(self, "right", _readonly(self.right, np.int64))
        object.__setattr__(self, "value", _readonly(self.value, np.float64))
        self._validate()

    def _validate(self):
        n_nodes = self.feature.shape[0]
        if n_nodes == 0:
            raise SchemaError("tree has no nodes")
        if not (self.threshold.shape[0] == self.left.shape[0] == self.right.shape[0] == n_nodes):
            raise SchemaError("tree node arrays differ in length")
        if self.value.shape != (n_nodes, self.n_classes):
            raise SchemaError(f"leaf value array has shape {self.value.shape}, expected ({n_nodes}, {self.n_classes})")

        is_leaf = self.feature < 0
        internal = ~is_leaf
        if (self.feature[internal] >= self.n_features).any():
            bad = int(self.feature[internal].max())
            raise SchemaError(f"feature index {bad} out of bounds for {self.n_features} features")
        if not np.isfinite(self.threshold[internal]).all():
            raise SchemaError("non-finite threshold")

        for children in (self.left[internal], self.right[internal]):
            if ((children <= 0) | (children >= n_nodes)).any():
                raise SchemaError("child index out of bounds")

        # every non-root node has exactly one parent, so the walk is finite
        referenced = np.concatenate([self.left[internal], self.right[internal]])
        if np.unique(referenced).size != referenced.size or referenced.size != n_nodes - 1:
            raise SchemaError("tree is not a proper binary tree (shared or unreachable nodes)")
        reached, stack = 0, [0]
        while stack:
            node = stack.pop()
            reached += 1
            if self.feature[node] >= 0:
                stack.extend((int(self.left[node]), int(self.right[node])))
        if reached != n_nodes:
            raise SchemaError("tree contains nodes unreachable from the root")

        leaves = self.value[is_leaf]
        if (leaves < 0).any():
            raise SchemaError("leaf distribution has negative entries")
        sums = leaves.sum(axis=1)
        if (np.abs(sums - 1.0) > settings.LEAF_SUM_TOLERANCE).any():
            raise SchemaError("leaf distribution not normalized")

    # ------------------------------------------------------------------
    # Construction
    # ------------------------------------------------------------------

    @classmethod
    def from_nested(cls, nested, n_features: int, n_classes: int) -> "DecisionTree":
        """
        Build from (feature, threshold, left, right) tuples with leaf
        distributions as plain sequences, e.g. (0, 0.5, [0, 1], [1, 0]).
        """
        feature: List[int] = []
        threshold: List[float] = []
        left: List[int] = []
        right: List[int] = []
        value: List[np.ndarray] = []

        def add(node) -> int:
            index = len(feature)
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(np.zeros(n_classes))
            if isinstance(node, tuple):
                f, t, l, r = node
                feature[index] = int(f)
                threshold[index] = float(t)
                left[index] = add(l)
                right[index] = add(r)
            else:
                value[index] = np.asarray(node, dtype=np.float64)
            return index

        add(nested)
        return cls(
            feature=np.array(feature), threshold=np.array(threshold),
            left=np.array(left), right=np.array(right),
            value=np.vstack(value), n_features=n_features, n_classes=n_classes,
        )

    # ------------------------------------------------------------------
    # Structure
    # ------------------------------------------------------------------

    @property
    def n_nodes(self) -> int:
        return int(self.feature.shape[0])

    def is_leaf(self, node: int) -> bool:
        return bool(self.feature[node] < 0)

    def node(self, index: int) -> Union[Internal, Leaf]:
        if self.is_leaf(index):
            return Leaf(distribution=self.value[index])
        return Internal(
            feature_index=int(self.feature[index]),
            threshold=float(self.threshold[index]),
            left=int(self.left[index]),
            right=int(self.right[index]),
        )

    @cached_property
    def leaves(self) -> np.ndarray:
        return np.flatnonzero(self.feature < 0)

    @cached_property
    def parent(self) -> np.ndarray:
        parent = np.full(self.n_nodes, -1, dtype=np.int64)
        internal = np.flatnonzero(self.feature >= 0)
        parent[self.left[internal]] = internal
        parent[self.right[internal]] = internal
        return parent

    @property
    def depth(self) -> int:
        return max((len(self.path_to(leaf)) for leaf in self.leaves), default=0)

    def path_to(self, leaf: int) -> List[Tuple[int, int]]:
        """Root-to-leaf list of (internal node, direction) with direction LEFT or RIGHT"""
        path: List[Tuple[int, int]] = []
        child = int(leaf)
        node = int(self.parent[child])
        while node >= 0:
            path.append((node, LEFT if self.left[node] == child else RIGHT))
            child, node = node, int(self.parent[node])
        path.reverse()
        return path

    def leaf_label(self, leaf: int) -> int:
        # np.argmax returns the lowest index on ties
        return int(np.argmax(self.value[leaf]))


# ============================================================================
# HARD TRAVERSAL
# ============================================================================

def activated_leaf(tree: DecisionTree, x: np.ndarray) -> Tuple[int, List[int]]:
    """Walk the tree: left iff x[f] > threshold (equality goes right). Returns leaf and internal path."""
    x = check_dimension(x, tree.n_features)
    node = 0
    path: List[int] = []
    while tree.feature[node] >= 0:
        path.append(node)
        if x[tree.feature[node]] > tree.threshold[node]:
            node = int(tree.left[node])
        else:
            node = int(tree.right[node])
    return node, path


def leaf_indices(tree: DecisionTree, rows: np.ndarray) -> np.ndarray:
    """Activated leaf of every row, walking all rows one level at a time"""
    rows = np.asarray(rows, dtype=np.float64)
    node = np.zeros(rows.shape[0], dtype=np.int64)
    internal = tree.feature[node] >= 0
    while internal.any():
        at = node[internal]
        go_left = rows[np.flatnonzero(internal), tree.feature[at]] > tree.threshold[at]
        node[internal] = np.where(go_left, tree.left[at], tree.right[at])
        internal = tree.feature[node] >= 0
    return node


@dataclass(frozen=True, eq=False)
class PathTable:
    """
    Every root-to-leaf path of an ensemble flattened into edge arrays.

    Leaves are numbered globally across trees. Each edge belongs to one
    leaf and records the split feature, threshold and direction taken.
    """
    leaf_tree: np.ndarray
    leaf_node: np.ndarray
    leaf_dist: np.ndarray
    leaf_weight: np.ndarray
    edge_leaf: np.ndarray
    edge_feature: np.ndarray
    edge_threshold: np.ndarray
    edge_dir: np.ndarray

    @property
    def n_leaves(self) -> int:
        return int(self.leaf_tree.shape[0])

    @classmethod
    def build(cls, trees: Sequence[DecisionTree], weights: np.ndarray) -> "PathTable":
        leaf_tree, leaf_node, leaf_dist, leaf_weight = [], [], [], []
        edge_leaf, edge_feature, edge_threshold, edge_dir = [], [], [], []
        for m, tree in enumerate(trees):
            for leaf in tree.leaves:
                global_leaf = len(leaf_tree)
                leaf_tree.append(m)
                leaf_node.append(int(leaf))
                leaf_dist.append(tree.value[leaf])
                leaf_weight.append(weights[m])
                for node, direction in tree.path_to(leaf):
                    edge_leaf.append(global_leaf)
                    edge_feature.append(int(tree.feature[node]))
                    edge_threshold.append(float(tree.threshold[node]))
                    edge_dir.append(direction)
        return cls(
            leaf_tree=_readonly(leaf_tree, np.int64),
            leaf_node=_readonly(leaf_node, np.int64),
            leaf_dist=_readonly(np.vstack(leaf_dist), np.float64),
            leaf_weight=_readonly(leaf_weight, np.float64),
            edge_leaf=_readonly(edge_leaf, np.int64),
            edge_feature=_readonly(edge_feature, np.int64),
            edge_threshold=_readonly(edge_threshold, np.float64),
            edge_dir=_readonly(edge_dir, np.int64),
        )

    def hard_activations(self, x: np.ndarray) -> np.ndarray:
        """1.0 for the single activated leaf of every tree, 0.0 elsewhere"""
        values = x[self.edge_feature]
        satisfied = np.where(self.edge_dir == LEFT, values > self.edge_threshold,
                             values <= self.edge_threshold)
        misses = np.bincount(self.edge_leaf, weights=(~satisfied).astype(np.float64),
                             minlength=self.n_leaves)
        return (misses == 0).astype(np.float64)


@dataclass(frozen=True, eq=False)
class TreeEnsemble:
    """Weighted collection of decision trees: f(x) = argmax_y sum_m w_m T_m(y|x)"""
    trees: Tuple[DecisionTree, ...]
    weights: np.ndarray
    kind: str
    feature_names: Tuple[str, ...]
    scale_min: Optional[np.ndarray] = None
    scale_max: Optional[np.ndarray] = None
    label_name: str = "label"
    class_names: Tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "trees", tuple(self.trees))
        object.__setattr__(self, "weights", _readonly(self.weights, np.float64))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        if self.scale_min is not None:
            object.__setattr__(self, "scale_min", _readonly(self.scale_min, np.float64))
            object.__setattr__(self, "scale_max", _readonly(self.scale_max, np.float64))
        if not self.class_names:
            object.__setattr__(self, "class_names", tuple(str(c) for c in range(self.trees[0].n_classes)))
        self._validate()

    def _validate(self):
        if self.kind not in KINDS:
            raise SchemaError(f"unknown ensemble kind '{self.kind}'")
        n_trees = len(self.trees)
        if n_trees < 1 or self.weights.shape != (n_trees,):
            raise SchemaError(f"ensemble needs M >= 1 trees and M weights, got {n_trees} trees "
                              f"and {self.weights.shape[0]} weights")
        if not np.isfinite(self.weights).all():
            raise SchemaError("non-finite tree weight")
        if self.kind == "single-tree" and n_trees != 1:
            raise SchemaError("single-tree ensemble must hold exactly one tree")
        if self.kind == "random-forest" and np.abs(self.weights - 1.0 / n_trees).max() > 1e-12:
            raise SchemaError("random-forest weights must all equal 1/M")
        first = self.trees[0]
        for tree in self.trees[1:]:
            if tree.n_features != first.n_features or tree.n_classes != first.n_classes:
                raise SchemaError("trees disagree on n_features or n_classes")
        if len(self.feature_names) != first.n_features:
            raise SchemaError(f"{len(self.feature_names)} feature names for {first.n_features} features")
        if len(self.class_names) != first.n_classes:
            raise SchemaError(f"{len(self.class_names)} class names for {first.n_classes} classes")
        if self.scale_min is not None and (
            self.scale_min.shape != (first.n_features,) or self.scale_max.shape != (first.n_features,)
        ):
            raise SchemaError("scaling metadata does not match n_features")

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    @property
    def n_features(self) -> int:
        return self.trees[0].n_features

    @property
    def n_classes(self) -> int:
        return self.trees[0].n_classes

    @cached_property
    def paths(self) -> PathTable:
        return PathTable.build(self.trees, self.weights)


def predict_hard(ens: TreeEnsemble, x: np.ndarray) -> HardPrediction:
    """scores[y] = sum_m w_m T_m(y|x) over activated leaves; label = argmax, lowest index on ties"""
    x = check_dimension(x, ens.n_features)
    table = ens.paths
    active = table.hard_activations(x) * table.leaf_weight
    scores = active @ table.leaf_dist
    return HardPrediction(label=int(np.argmax(scores)), scores=scores)


def predict_labels(ens: TreeEnsemble, rows: np.ndarray) -> np.ndarray:
    return np.array([predict_hard(ens, row).label for row in np.asarray(rows)], dtype=np.int64)
