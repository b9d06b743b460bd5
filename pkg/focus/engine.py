"""
Gradient-based counterfactual search over the soft approximation.

The prediction loss is a hinge on the HARD model: while predict_hard(xbar)
still returns the original label y_x, it equals the soft probability
f~(y_x | xbar) and pulls xbar away from class y_x; once the hard label flips
it is zero and only beta * d(x, xbar) remains, pulling xbar back toward x.
Every iterate that flips the hard label is a candidate, and the closest one
under the exact distance is kept.
"""
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple
import math
import time

import numpy as np
from joblib import Parallel, delayed

from config import settings
from distance.functions import DistanceSpec, dist, dist_gradient
from ensemble.tree import TreeEnsemble, check_dimension, predict_hard
from errors import ArgumentError, FocusError, OptimizationError
from focus.adam import AdamState, adam_step
from logs.log import logger, log_explanation, set_instance_id
from metrics.prometheus import explanation_duration_seconds, track_error, track_explanation
from softmodel.soft import SoftConfig, class_probability_and_gradient


@dataclass(frozen=True)
class FocusConfig:
    soft: SoftConfig
    beta: float
    alpha: float
    distance: DistanceSpec
    iterations: int = settings.FOCUS_ITERATIONS
    b1: float = settings.ADAM_B1
    b2: float = settings.ADAM_B2
    eps: float = settings.ADAM_EPS
    clamp_to_unit_box: bool = settings.CLAMP_TO_UNIT_BOX
    seed: int = settings.DEFAULT_SEED
    trace: bool = False

    def __post_init__(self):
        for name in ("beta", "alpha"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ArgumentError(f"{name} must be positive and finite, got {value}")
        if self.iterations < 1:
            raise ArgumentError(f"iterations must be at least 1, got {self.iterations}")

    def fingerprint(self) -> Dict[str, object]:
        return {
            "method": "focus",
            "sigma": self.soft.sigma,
            "tau": self.soft.tau,
            "beta": self.beta,
            "alpha": self.alpha,
            "iterations": self.iterations,
            "distance": self.distance.kind,
            "smooth_eps": self.distance.smooth_eps,
            "clamp_to_unit_box": self.clamp_to_unit_box,
            "seed": self.seed,
        }


class TraceStep(NamedTuple):
    iteration: int
    loss: float
    distance: float  # exact distance of the current iterate
    valid: bool


@dataclass(frozen=True, eq=False)
class CfResult:
    instance_index: int
    original: np.ndarray
    original_label: int
    counterfactual: Optional[np.ndarray] = None
    cf_label: Optional[int] = None
    distance: Optional[float] = None
    found_at_iteration: Optional[int] = None
    trace: Optional[Tuple[TraceStep, ...]] = None
    error: Optional[str] = None
    method: str = "focus"
    iterations_run: int = 0
    elapsed: float = field(default=0.0, compare=False)

    @property
    def found(self) -> bool:
        return self.counterfactual is not None


@dataclass(frozen=True)
class ExplanationDelta:
    """
    Counterfactual minus original, in scaled and (when available) original
    units. original + scaled gives the counterfactual up to rounding.
    """
    scaled: np.ndarray
    original_units: Optional[np.ndarray]
    n_changed: int

    @classmethod
    def from_result(
        cls,
        result: CfResult,
        scale_min: Optional[np.ndarray] = None,
        scale_max: Optional[np.ndarray] = None,
        tolerance: float = 0.0
    ) -> Optional["ExplanationDelta"]:
        if not result.found:
            return None
        scaled = result.counterfactual - result.original
        original_units = None
        if scale_min is not None:
            original_units = scaled * (np.asarray(scale_max) - np.asarray(scale_min))
        return cls(
            scaled=scaled,
            original_units=original_units,
            n_changed=int(np.count_nonzero(np.abs(scaled) > tolerance)),
        )


# ============================================================================
# LOSS
# ============================================================================

def pred_loss(
    ens: TreeEnsemble,
    cfg: FocusConfig,
    x: np.ndarray,
    xbar: np.ndarray,
    original_label: Optional[int] = None
) -> Tuple[float, np.ndarray]:
    """Hinge prediction loss: f~(y_x | xbar) and its gradient while the hard label is unchanged, else 0"""
    x = check_dimension(x, ens.n_features)
    xbar = check_dimension(xbar, ens.n_features)
    y_x = predict_hard(ens, x).label if original_label is None else original_label
    if predict_hard(ens, xbar).label != y_x:
        return 0.0, np.zeros(ens.n_features)
    return class_probability_and_gradient(ens, xbar, cfg.soft, y_x)


def total_loss(
    ens: TreeEnsemble,
    cfg: FocusConfig,
    x: np.ndarray,
    xbar: np.ndarray,
    original_label: Optional[int] = None
) -> Tuple[float, np.ndarray]:
    """pred_loss + beta * d(x, xbar) with the smoothed distance"""
    value, gradient = pred_loss(ens, cfg, x, xbar, original_label)
    x = np.asarray(x, dtype=np.float64)
    xbar = np.asarray(xbar, dtype=np.float64)
    value += cfg.beta * dist(cfg.distance, x, xbar)
    gradient = gradient + cfg.beta * dist_gradient(cfg.distance, x, xbar)
    return value, gradient


# ============================================================================
# SEARCH
# ============================================================================

def generate_cf(ens: TreeEnsemble, x: np.ndarray, cfg: FocusConfig, instance_index: int = 0) -> CfResult:
    """
    Run K Adam iterations from xbar = x and return the closest valid
    counterfactual seen (exact distance), or a result without one.

    Raises OptimizationError on a non-finite loss or gradient.
    """
    start = time.perf_counter()
    x = check_dimension(x, ens.n_features)
    y_x = predict_hard(ens, x).label
    exact = cfg.distance.exact()

    xbar = x.copy()
    current_label = y_x
    state = AdamState.zeros(ens.n_features)
    best: Optional[np.ndarray] = None
    best_label: Optional[int] = None
    best_distance = math.inf
    found_at: Optional[int] = None
    trace: Optional[List[TraceStep]] = [] if cfg.trace else None

    for k in range(1, cfg.iterations + 1):
        if current_label == y_x:
            p, pred_grad = class_probability_and_gradient(ens, xbar, cfg.soft, y_x)
        else:
            p, pred_grad = 0.0, 0.0
        loss = p + cfg.beta * dist(cfg.distance, x, xbar)
        gradient = pred_grad + cfg.beta * dist_gradient(cfg.distance, x, xbar)
        if not (math.isfinite(loss) and np.isfinite(gradient).all()):
            raise OptimizationError(f"non-finite loss or gradient at iteration {k}", iteration=k)

        state, delta = adam_step(state, gradient, cfg.alpha, cfg.b1, cfg.b2, cfg.eps)
        xbar = xbar + delta
        if cfg.clamp_to_unit_box:
            xbar = np.clip(xbar, 0.0, 1.0)

        current_label = predict_hard(ens, xbar).label
        valid = current_label != y_x
        current_distance = None
        if valid:
            current_distance = dist(exact, x, xbar)
            if current_distance < best_distance:
                best, best_label, best_distance, found_at = xbar.copy(), current_label, current_distance, k
        if trace is not None:
            if current_distance is None:
                current_distance = dist(exact, x, xbar)
            trace.append(TraceStep(iteration=k, loss=float(loss), distance=current_distance, valid=valid))

    return CfResult(
        instance_index=instance_index,
        original=x,
        original_label=y_x,
        counterfactual=best,
        cf_label=best_label,
        distance=None if best is None else best_distance,
        found_at_iteration=found_at,
        trace=None if trace is None else tuple(trace),
        iterations_run=cfg.iterations,
        elapsed=time.perf_counter() - start,
    )


def _generate_safely(ens: TreeEnsemble, x: np.ndarray, cfg: FocusConfig, instance_index: int) -> CfResult:
    # a row of the wrong width is a batch-level SchemaError, not an instance failure
    x = check_dimension(x, ens.n_features)
    original_label = predict_hard(ens, x).label
    set_instance_id(instance_index)
    try:
        result = generate_cf(ens, x, cfg, instance_index)
    except FocusError as exc:
        logger.warning(f"explanation_failed - instance={instance_index}, error={exc.detail}")
        result = CfResult(
            instance_index=instance_index,
            original=x,
            original_label=original_label,
            error=exc.detail,
            iterations_run=getattr(exc, "iteration", 0),
        )
    finally:
        set_instance_id(None)
    log_explanation("focus", instance_index, result.found, result.found_at_iteration, result.distance)
    return result


def record_outcomes(results: Sequence[CfResult], method: str):
    """Count results in the collectors of this process"""
    for result in results:
        if result.error is not None:
            track_error("explanation_failed", "focus" if method == "focus" else "ftweak")
        track_explanation(method, result.found, error=result.error is not None,
                          iterations=result.iterations_run, found_at_iteration=result.found_at_iteration)
        explanation_duration_seconds.labels(method=method).observe(result.elapsed)


def batch_generate(
    ens: TreeEnsemble,
    rows: np.ndarray,
    cfg: FocusConfig,
    parallelism: int = 1,
    indices: Optional[Sequence[int]] = None
) -> List[CfResult]:
    """
    generate_cf for every row, in input order. Instance failures are kept
    as results with error set. Results do not depend on parallelism.
    """
    rows = np.asarray(rows, dtype=np.float64)
    if rows.size == 0:
        return []
    indices = range(rows.shape[0]) if indices is None else indices

    results = Parallel(n_jobs=parallelism)(
        delayed(_generate_safely)(ens, row, cfg, int(i)) for i, row in zip(indices, rows)
    )
    record_outcomes(results, "focus")
    found = sum(r.found for r in results)
    logger.info(f"batch_explained - method=focus, instances={len(results)}, found={found}")
    return results
