"""
Versioned JSON model files.

Trees are flat node arrays with child indices, root first. Internal nodes
carry feature/threshold/left/right, leaves carry a class distribution.
Floats are written in shortest round-trip form, so save -> load is exact.

Importing from other libraries: here the LEFT child is taken when
x[feature] > threshold and the RIGHT child when x[feature] <= threshold.
Exporters whose convention is "left = (x <= threshold)" must swap the two
child indices of every internal node. Exporters that branch on strict
"x < threshold" cannot be mirrored exactly at equality; verify imported
models by prediction agreement on held-out data.
"""
import hashlib
import json
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
from pydantic import BaseModel, ValidationError, model_validator

from config import settings
from ensemble.tree import DecisionTree, TreeEnsemble
from errors import SchemaError
from logs.log import logger


# ============================================================================
# FILE SCHEMA
# ============================================================================

class NodeRecord(BaseModel):
    feature: Optional[int] = None
    threshold: Optional[float] = None
    left: Optional[int] = None
    right: Optional[int] = None
    distribution: Optional[List[float]] = None

    @model_validator(mode="after")
    def internal_or_leaf(self):
        internal = [self.feature, self.threshold, self.left, self.right]
        if self.distribution is not None:
            if any(v is not None for v in internal):
                raise ValueError("a node is either internal or a leaf, not both")
        elif any(v is None for v in internal):
            raise ValueError("internal node needs feature, threshold, left and right")
        return self


class TreeRecord(BaseModel):
    nodes: List[NodeRecord]


class ScalingRecord(BaseModel):
    min: List[float]
    max: List[float]


class ModelFile(BaseModel):
    format_version: int
    kind: str
    n_features: int
    n_classes: int
    feature_names: List[str]
    label_name: str = "label"
    class_names: Optional[List[str]] = None
    scaling: Optional[ScalingRecord] = None
    weights: List[float]
    trees: List[TreeRecord]
    manifest_digest: Optional[str] = None


# ============================================================================
# CONVERSION
# ============================================================================

def _tree_record(tree: DecisionTree) -> TreeRecord:
    nodes = []
    for j in range(tree.n_nodes):
        if tree.is_leaf(j):
            nodes.append(NodeRecord(distribution=[float(p) for p in tree.value[j]]))
        else:
            nodes.append(NodeRecord(
                feature=int(tree.feature[j]),
                threshold=float(tree.threshold[j]),
                left=int(tree.left[j]),
                right=int(tree.right[j]),
            ))
    return TreeRecord(nodes=nodes)


def _tree_from_record(record: TreeRecord, n_features: int, n_classes: int) -> DecisionTree:
    n_nodes = len(record.nodes)
    feature = np.full(n_nodes, -1, dtype=np.int64)
    threshold = np.zeros(n_nodes)
    left = np.full(n_nodes, -1, dtype=np.int64)
    right = np.full(n_nodes, -1, dtype=np.int64)
    value = np.zeros((n_nodes, n_classes))
    for j, node in enumerate(record.nodes):
        if node.distribution is not None:
            if len(node.distribution) != n_classes:
                raise SchemaError(f"leaf {j} has {len(node.distribution)} entries for {n_classes} classes")
            value[j] = node.distribution
        else:
            if node.feature < 0:
                raise SchemaError(f"negative feature index at node {j}")
            feature[j] = node.feature
            threshold[j] = node.threshold
            left[j] = node.left
            right[j] = node.right
    return DecisionTree(feature=feature, threshold=threshold, left=left, right=right,
                        value=value, n_features=n_features, n_classes=n_classes)


def to_model_file(ens: TreeEnsemble) -> ModelFile:
    scaling = None
    if ens.scale_min is not None:
        scaling = ScalingRecord(min=[float(v) for v in ens.scale_min],
                                max=[float(v) for v in ens.scale_max])
    return ModelFile(
        format_version=settings.MODEL_FORMAT_VERSION,
        kind=ens.kind,
        n_features=ens.n_features,
        n_classes=ens.n_classes,
        feature_names=list(ens.feature_names),
        label_name=ens.label_name,
        class_names=list(ens.class_names),
        scaling=scaling,
        weights=[float(w) for w in ens.weights],
        trees=[_tree_record(tree) for tree in ens.trees],
    )


def from_model_file(model: ModelFile) -> TreeEnsemble:
    if model.format_version != settings.MODEL_FORMAT_VERSION:
        raise SchemaError(
            f"model format version {model.format_version} is not supported "
            f"(expected {settings.MODEL_FORMAT_VERSION})"
        )
    trees = [_tree_from_record(t, model.n_features, model.n_classes) for t in model.trees]
    if not trees:
        raise SchemaError("model file contains no trees")
    return TreeEnsemble(
        trees=tuple(trees),
        weights=np.asarray(model.weights, dtype=np.float64),
        kind=model.kind,
        feature_names=tuple(model.feature_names),
        scale_min=None if model.scaling is None else np.asarray(model.scaling.min),
        scale_max=None if model.scaling is None else np.asarray(model.scaling.max),
        label_name=model.label_name,
        class_names=tuple(model.class_names) if model.class_names else (),
    )


def dumps_model(ens: TreeEnsemble) -> str:
    return json.dumps(to_model_file(ens).model_dump(exclude_none=True), indent=2)


def model_digest(ens: TreeEnsemble) -> str:
    """sha256 of the canonical model file text"""
    return hashlib.sha256(dumps_model(ens).encode("utf-8")).hexdigest()


# ============================================================================
# FILE I/O
# ============================================================================

def save_model(ens: TreeEnsemble, path: Union[str, Path], manifest_digest: Optional[str] = None):
    """Write the model file; manifest_digest is stored alongside and does not enter model_digest"""
    path = Path(path)
    model = to_model_file(ens)
    model.manifest_digest = manifest_digest
    text = json.dumps(model.model_dump(exclude_none=True), indent=2)
    path.write_text(text + "\n", encoding="utf-8")
    logger.info(f"model_saved - path={path}, kind={ens.kind}, trees={ens.n_trees}")


def load_model(path: Union[str, Path]) -> TreeEnsemble:
    path = Path(path)
    if not path.is_file():
        raise SchemaError(f"model file not found: {path}")
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
        model = ModelFile.model_validate(payload)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"model file is not valid JSON: {exc}") from exc
    except ValidationError as exc:
        raise SchemaError(f"model file schema violation: {exc}") from exc

    ens = from_model_file(model)
    logger.info(f"model_loaded - path={path}, kind={ens.kind}, trees={ens.n_trees}")
    return ens
