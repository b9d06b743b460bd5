"""
Differentiable distances d(x, xbar) and their gradients with respect to xbar.

smooth_eps is added under square roots (euclidean, mahalanobis) and inside
|u| ~ sqrt(u^2 + eps) (manhattan) so the optimizer never meets a kink.
Reported distances always use exact(), i.e. smooth_eps = 0.
"""
from dataclasses import dataclass, replace
from typing import Optional
import math

import numpy as np

from config import settings
from dataio.covariance import CovarianceContext
from errors import ArgumentError, DistanceError

KINDS = ("euclidean", "cosine", "manhattan", "mahalanobis")


@dataclass(frozen=True)
class DistanceSpec:
    kind: str
    covariance: Optional[CovarianceContext] = None
    smooth_eps: float = settings.DISTANCE_SMOOTH_EPS

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ArgumentError(f"unknown distance '{self.kind}', expected one of {', '.join(KINDS)}")
        if not (math.isfinite(self.smooth_eps) and self.smooth_eps >= 0):
            raise ArgumentError(f"smooth_eps must be >= 0, got {self.smooth_eps}")
        if self.kind == "mahalanobis" and self.covariance is None:
            raise DistanceError(
                "mahalanobis distance needs a covariance context; pass --train-data "
                "so the training covariance can be computed"
            )
        if self.kind != "mahalanobis" and self.covariance is not None:
            raise DistanceError(f"covariance context given for {self.kind} distance")

    def exact(self) -> "DistanceSpec":
        return replace(self, smooth_eps=0.0)


def _check_pair(spec: DistanceSpec, x: np.ndarray, xbar: np.ndarray):
    x = np.asarray(x, dtype=np.float64)
    xbar = np.asarray(xbar, dtype=np.float64)
    if x.shape != xbar.shape or x.ndim != 1:
        raise DistanceError(f"distance needs two vectors of equal length, got {x.shape} and {xbar.shape}")
    if spec.kind == "mahalanobis" and spec.covariance.n_features != x.shape[0]:
        raise DistanceError(
            f"covariance is {spec.covariance.n_features}x{spec.covariance.n_features} "
            f"but vectors have {x.shape[0]} features"
        )
    return x, xbar


def _norms(x: np.ndarray, xbar: np.ndarray):
    nx, nxbar = float(np.linalg.norm(x)), float(np.linalg.norm(xbar))
    if nx == 0.0 or nxbar == 0.0:
        raise DistanceError("cosine distance is undefined for a zero vector")
    return nx, nxbar


def _quadratic(spec: DistanceSpec, u: np.ndarray) -> float:
    if spec.kind == "mahalanobis":
        # inverse is symmetric positive definite; clip tiny negative rounding
        return max(float(u @ spec.covariance.inverse @ u), 0.0)
    return float(u @ u)


def dist(spec: DistanceSpec, x: np.ndarray, xbar: np.ndarray) -> float:
    x, xbar = _check_pair(spec, x, xbar)
    if spec.kind == "cosine":
        nx, nxbar = _norms(x, xbar)
        return float(1.0 - (x @ xbar) / (nx * nxbar))
    u = x - xbar
    if spec.kind == "manhattan":
        if spec.smooth_eps == 0.0:
            return float(np.abs(u).sum())
        return float(np.sqrt(u * u + spec.smooth_eps).sum())
    return math.sqrt(_quadratic(spec, u) + spec.smooth_eps)


def dist_gradient(spec: DistanceSpec, x: np.ndarray, xbar: np.ndarray) -> np.ndarray:
    """Analytic d dist / d xbar"""
    x, xbar = _check_pair(spec, x, xbar)

    if spec.kind == "cosine":
        nx, nxbar = _norms(x, xbar)
        similarity = (x @ xbar) / (nx * nxbar)
        return -(x / (nx * nxbar) - similarity * xbar / (nxbar * nxbar))

    u = x - xbar
    if spec.kind == "manhattan":
        if spec.smooth_eps == 0.0:
            return -np.sign(u)
        return -u / np.sqrt(u * u + spec.smooth_eps)

    d = math.sqrt(_quadratic(spec, u) + spec.smooth_eps)
    if d == 0.0:
        raise DistanceError(f"{spec.kind} gradient is singular at xbar == x; set smooth_eps > 0")
    if spec.kind == "mahalanobis":
        return -(spec.covariance.inverse @ u) / d
    return -u / d


def dist_rows(spec: DistanceSpec, originals: np.ndarray, perturbed: np.ndarray) -> np.ndarray:
    """Row-wise dist for two equally shaped matrices"""
    originals = np.atleast_2d(np.asarray(originals, dtype=np.float64))
    perturbed = np.atleast_2d(np.asarray(perturbed, dtype=np.float64))
    return np.array([dist(spec, a, b) for a, b in zip(originals, perturbed)])
