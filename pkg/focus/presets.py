"""
Published FOCUS hyperparameters per (dataset, model kind, distance), with
the model shape each setting was tuned for.
"""
from typing import Dict, NamedTuple, Tuple

from errors import ArgumentError


class Preset(NamedTuple):
    num_trees: int
    max_depth: int
    sigma: float
    tau: float
    beta: float
    alpha: float


KIND_ALIASES = {
    "dt": "single-tree",
    "rf": "random-forest",
    "ab": "adaptive-boosting",
}

# (dataset, kind, distance) -> Preset
PRESETS: Dict[Tuple[str, str, str], Preset] = {
    # euclidean
    ("wine", "dt", "euclidean"): Preset(1, 2, 1, 10, 0.05, 0.001),
    ("wine", "rf", "euclidean"): Preset(500, 4, 10, 2, 0.05, 0.005),
    ("wine", "ab", "euclidean"): Preset(100, 4, 5, 1, 0.05, 0.005),
    ("heloc", "dt", "euclidean"): Preset(1, 4, 2, 10, 0.05, 0.001),
    ("heloc", "rf", "euclidean"): Preset(500, 4, 10, 5, 0.05, 0.005),
    ("heloc", "ab", "euclidean"): Preset(100, 8, 10, 1, 0.05, 0.001),
    ("compas", "dt", "euclidean"): Preset(1, 4, 6, 10, 0.05, 0.005),
    ("compas", "rf", "euclidean"): Preset(500, 4, 7, 3, 0.01, 0.001),
    ("compas", "ab", "euclidean"): Preset(100, 2, 10, 1, 0.01, 0.005),
    ("shopping", "dt", "euclidean"): Preset(1, 4, 2, 10, 0.05, 0.005),
    ("shopping", "rf", "euclidean"): Preset(500, 8, 5, 5, 0.05, 0.005),
    ("shopping", "ab", "euclidean"): Preset(100, 2, 10, 1, 0.05, 0.001),
    # cosine
    ("wine", "dt", "cosine"): Preset(1, 2, 1, 10, 0.05, 0.005),
    ("wine", "rf", "cosine"): Preset(500, 4, 10, 1, 0.05, 0.005),
    ("wine", "ab", "cosine"): Preset(100, 4, 1, 1, 0.01, 0.005),
    ("heloc", "dt", "cosine"): Preset(1, 4, 2, 10, 0.05, 0.005),
    ("heloc", "rf", "cosine"): Preset(500, 4, 5, 5, 0.05, 0.005),
    ("heloc", "ab", "cosine"): Preset(100, 8, 1, 1, 0.05, 0.005),
    ("compas", "dt", "cosine"): Preset(1, 4, 10, 10, 0.05, 0.005),
    ("compas", "rf", "cosine"): Preset(500, 4, 10, 6, 0.01, 0.005),
    ("compas", "ab", "cosine"): Preset(100, 2, 10, 1, 0.05, 0.005),
    ("shopping", "dt", "cosine"): Preset(1, 4, 10, 10, 0.05, 0.001),
    ("shopping", "rf", "cosine"): Preset(500, 8, 1, 1, 0.01, 0.001),
    ("shopping", "ab", "cosine"): Preset(100, 2, 10, 5, 0.05, 0.001),
    # manhattan
    ("wine", "dt", "manhattan"): Preset(1, 2, 1, 10, 0.05, 0.001),
    ("wine", "rf", "manhattan"): Preset(500, 4, 10, 10, 0.01, 0.005),
    ("wine", "ab", "manhattan"): Preset(100, 4, 6, 1, 0.01, 0.005),
    ("heloc", "dt", "manhattan"): Preset(1, 4, 2, 10, 0.05, 0.001),
    ("heloc", "rf", "manhattan"): Preset(500, 4, 5, 5, 0.01, 0.005),
    ("heloc", "ab", "manhattan"): Preset(100, 8, 4, 1, 0.05, 0.001),
    ("compas", "dt", "manhattan"): Preset(1, 4, 6, 10, 0.01, 0.005),
    ("compas", "rf", "manhattan"): Preset(500, 4, 4, 1, 0.05, 0.001),
    ("compas", "ab", "manhattan"): Preset(100, 2, 5, 10, 0.05, 0.005),
    ("shopping", "dt", "manhattan"): Preset(1, 4, 2, 10, 0.05, 0.005),
    ("shopping", "rf", "manhattan"): Preset(500, 8, 10, 1, 0.05, 0.001),
    ("shopping", "ab", "manhattan"): Preset(100, 2, 10, 1, 0.05, 0.001),
    # mahalanobis (only the settings that were published)
    ("wine", "dt", "mahalanobis"): Preset(1, 2, 5, 10, 0.01, 0.001),
    ("heloc", "dt", "mahalanobis"): Preset(1, 4, 5, 10, 0.01, 0.001),
    ("compas", "dt", "mahalanobis"): Preset(1, 4, 5, 10, 0.01, 0.005),
    ("compas", "ab", "mahalanobis"): Preset(100, 2, 4, 2, 0.005, 0.001),
    ("shopping", "dt", "mahalanobis"): Preset(1, 4, 4, 10, 0.01, 0.005),
    ("shopping", "ab", "mahalanobis"): Preset(100, 2, 10, 1, 0.01, 0.001),
}


def short_kind(kind: str) -> str:
    """Accept dt/rf/ab or the ensemble kind names"""
    if kind in KIND_ALIASES:
        return kind
    for short, full in KIND_ALIASES.items():
        if kind == full:
            return short
    raise ArgumentError(f"unknown model kind '{kind}'")


def preset(dataset: str, kind: str, distance: str) -> Preset:
    key = (dataset.lower(), short_kind(kind), distance)
    if key not in PRESETS:
        raise ArgumentError(f"no published hyperparameters for dataset={key[0]}, kind={key[1]}, distance={distance}")
    return PRESETS[key]
