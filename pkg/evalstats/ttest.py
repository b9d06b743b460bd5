from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import betainc

from errors import DataError

# per-sample variance floor, keeps t finite for constant samples
VARIANCE_FLOOR = 1e-12


class TTestResult(NamedTuple):
    t: float
    df: float
    p_value: float


def _two_tailed_p(t: float, df: float) -> float:
    """Student-t two-tailed tail mass through the regularized incomplete beta function"""
    p = float(betainc(0.5 * df, 0.5, df / (df + t * t)))
    return min(max(p, np.finfo(np.float64).tiny), 1.0)


def welch(a: Sequence[float], b: Sequence[float]) -> TTestResult:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise DataError(f"t-test needs at least 2 values per sample, got {a.size} and {b.size}")

    va = max(float(a.var(ddof=1)), VARIANCE_FLOOR) / a.size
    vb = max(float(b.var(ddof=1)), VARIANCE_FLOOR) / b.size
    t = (float(a.mean()) - float(b.mean())) / np.sqrt(va + vb)
    df = (va + vb) ** 2 / (va ** 2 / (a.size - 1) + vb ** 2 / (b.size - 1))
    return TTestResult(t=float(t), df=float(df), p_value=_two_tailed_p(float(t), float(df)))


def paired(a: Sequence[float], b: Sequence[float]) -> TTestResult:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DataError("paired t-test needs samples of equal length")
    if a.size < 2:
        raise DataError(f"t-test needs at least 2 pairs, got {a.size}")

    diff = a - b
    variance = max(float(diff.var(ddof=1)), VARIANCE_FLOOR)
    t = float(diff.mean()) / np.sqrt(variance / diff.size)
    df = float(diff.size - 1)
    return TTestResult(t=float(t), df=df, p_value=_two_tailed_p(float(t), df))


def t_test_two_tailed(a: Sequence[float], b: Sequence[float], paired_samples: bool = False) -> float:
    """Welch's unequal-variance test by default; p lies in (0, 1]"""
    result = paired(a, b) if paired_samples else welch(a, b)
    return result.p_value
