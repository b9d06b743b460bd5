"""
Evaluation of counterfactual result sets.

Distances are always recomputed from the stored vectors with the exact
(unsmoothed) distance. Comparisons between two methods are restricted to
the instances where both produced a counterfactual.
"""
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple, TypeVar
import math

import numpy as np
from pydantic import BaseModel

from distance.functions import DistanceSpec, dist
from ensemble.tree import TreeEnsemble, predict_hard
from errors import DataError, SchemaError
from evalstats.ttest import t_test_two_tailed
from focus.engine import CfResult
from logs.log import logger

Cell = TypeVar("Cell")


class EvalReport(BaseModel):
    method: str
    baseline: Optional[str] = None
    distance: str
    n_instances: int
    n_found: int
    coverage: float
    d_mean: Optional[float] = None
    baseline_coverage: Optional[float] = None
    baseline_d_mean: Optional[float] = None
    n_compared: Optional[int] = None
    n_zero_baseline: Optional[int] = None
    d_rmean: Optional[float] = None
    pct_closer: Optional[float] = None
    p_value: Optional[float] = None
    paired: bool = False
    method_fingerprint: Dict[str, object] = {}
    baseline_fingerprint: Optional[Dict[str, object]] = None


class CurvePoint(NamedTuple):
    iteration: int
    mean_distance: float
    fraction_found: float


def exact_distances(results: Sequence[CfResult], spec: DistanceSpec) -> Dict[int, float]:
    """instance_index -> exact d(x, xbar*) for every result with a counterfactual"""
    exact = spec.exact()
    return {
        r.instance_index: dist(exact, r.original, r.counterfactual)
        for r in results if r.found
    }


def d_mean(results: Sequence[CfResult], spec: DistanceSpec) -> float:
    distances = exact_distances(results, spec)
    if not distances:
        raise DataError("no counterfactuals to average")
    return float(np.mean(list(distances.values())))


def coverage(results: Sequence[CfResult], ens: Optional[TreeEnsemble] = None) -> float:
    """Fraction of results holding a valid counterfactual; with ens, validity is re-checked on the hard model"""
    if not results:
        return 0.0
    if ens is None:
        valid = sum(r.found for r in results)
    else:
        valid = sum(
            r.found and predict_hard(ens, r.counterfactual).label != predict_hard(ens, r.original).label
            for r in results
        )
    return valid / len(results)


def overlap(ours: Sequence[CfResult], baseline: Sequence[CfResult]) -> List[int]:
    """Instance indices where both methods found a counterfactual"""
    ours_by_index = {r.instance_index: r for r in ours}
    base_by_index = {r.instance_index: r for r in baseline}
    for index in ours_by_index.keys() & base_by_index.keys():
        if not np.array_equal(ours_by_index[index].original, base_by_index[index].original):
            raise SchemaError(f"instance {index} has different original vectors in the two result sets")

    shared = sorted(
        index for index in ours_by_index.keys() & base_by_index.keys()
        if ours_by_index[index].found and base_by_index[index].found
    )
    if not shared:
        raise SchemaError("empty overlap: no instance has a counterfactual from both methods")
    return shared


def _paired_distances(
    ours: Sequence[CfResult],
    baseline: Sequence[CfResult],
    spec: DistanceSpec
) -> Tuple[np.ndarray, np.ndarray]:
    shared = overlap(ours, baseline)
    d_ours = exact_distances(ours, spec)
    d_base = exact_distances(baseline, spec)
    return (np.array([d_ours[i] for i in shared]), np.array([d_base[i] for i in shared]))


def relative_distances(
    ours: Sequence[CfResult],
    baseline: Sequence[CfResult],
    spec: DistanceSpec
) -> Tuple[np.ndarray, int]:
    """Per-instance ratios over the overlap, and how many zero-distance baselines were excluded"""
    mine, theirs = _paired_distances(ours, baseline, spec)
    nonzero = theirs > 0
    n_zero = int((~nonzero).sum())
    if n_zero:
        logger.warning(f"zero_baseline_distances_excluded - count={n_zero}")
    return mine[nonzero] / theirs[nonzero], n_zero


def d_rmean(ours: Sequence[CfResult], baseline: Sequence[CfResult], spec: DistanceSpec) -> float:
    """Mean of per-instance ratios d_ours / d_baseline"""
    ratios, _ = relative_distances(ours, baseline, spec)
    if ratios.size == 0:
        raise SchemaError("every baseline distance in the overlap is zero")
    return float(np.mean(ratios))


def pct_closer(ours: Sequence[CfResult], baseline: Sequence[CfResult], spec: DistanceSpec) -> float:
    mine, theirs = _paired_distances(ours, baseline, spec)
    return float(np.mean(mine < theirs))


def select_best(
    cells: Sequence[Cell],
    coverage_of: Callable[[Cell], float],
    d_mean_of: Callable[[Cell], Optional[float]]
) -> Cell:
    """Highest coverage first, then smallest mean distance; earlier cells win exact ties"""
    if not cells:
        raise ValueError("no cells to select from")

    def rank(item):
        position, cell = item
        mean = d_mean_of(cell)
        return (-coverage_of(cell), math.inf if mean is None else mean, position)

    return min(enumerate(cells), key=rank)[1]


def iteration_curve(results: Sequence[CfResult]) -> List[CurvePoint]:
    """
    Per iteration: mean exact distance of the current iterate and the
    fraction of instances that have reached a valid counterfactual so far.
    Only results carrying a trace take part.
    """
    traced = [r.trace for r in results if r.trace]
    if not traced:
        return []
    n_iterations = min(len(t) for t in traced)
    distances = np.array([[step.distance for step in t[:n_iterations]] for t in traced])
    valid = np.array([[step.valid for step in t[:n_iterations]] for t in traced])
    reached = np.logical_or.accumulate(valid, axis=1)
    return [
        CurvePoint(iteration=k + 1, mean_distance=float(distances[:, k].mean()),
                   fraction_found=float(reached[:, k].mean()))
        for k in range(n_iterations)
    ]


def evaluate(
    results: Sequence[CfResult],
    spec: DistanceSpec,
    ens: Optional[TreeEnsemble] = None,
    baseline: Optional[Sequence[CfResult]] = None,
    paired: bool = False,
    method_fingerprint: Optional[Dict[str, object]] = None,
    baseline_fingerprint: Optional[Dict[str, object]] = None
) -> EvalReport:
    method_fingerprint = method_fingerprint or {}
    found = sum(r.found for r in results)
    report = EvalReport(
        method=str(method_fingerprint.get("method", results[0].method if results else "unknown")),
        distance=spec.kind,
        n_instances=len(results),
        n_found=found,
        coverage=coverage(results, ens),
        d_mean=d_mean(results, spec) if found else None,
        paired=paired,
        method_fingerprint=method_fingerprint,
    )
    if baseline is None:
        return report

    baseline_fingerprint = baseline_fingerprint or {}
    mine, theirs = _paired_distances(results, baseline, spec)
    ratios, n_zero = relative_distances(results, baseline, spec)
    p_value = None
    if mine.size >= 2:
        p_value = t_test_two_tailed(mine, theirs, paired_samples=paired)

    report.baseline = str(baseline_fingerprint.get("method", baseline[0].method if baseline else "unknown"))
    report.baseline_coverage = coverage(baseline, ens)
    report.baseline_d_mean = d_mean(baseline, spec)
    report.n_compared = int(mine.size)
    report.n_zero_baseline = n_zero
    report.d_rmean = float(np.mean(ratios)) if ratios.size else None
    report.pct_closer = float(np.mean(mine < theirs))
    report.p_value = p_value
    report.baseline_fingerprint = baseline_fingerprint
    return report
