from dataclasses import dataclass
from typing import Optional

import numpy as np

from config import settings
from dataio.loader import Dataset
from errors import CovarianceError, DataError
from logs.log import logger


@dataclass(frozen=True, eq=False)
class CovarianceContext:
    """Training-set covariance and its ridge-regularised inverse"""
    matrix: np.ndarray
    inverse: np.ndarray
    ridge: float

    def __post_init__(self):
        for name in ("matrix", "inverse"):
            array = np.array(getattr(self, name), dtype=np.float64, copy=True)
            array.flags.writeable = False
            object.__setattr__(self, name, array)

    @property
    def n_features(self) -> int:
        return int(self.matrix.shape[0])

    @classmethod
    def identity(cls, n_features: int) -> "CovarianceContext":
        eye = np.eye(n_features)
        return cls(matrix=eye, inverse=eye, ridge=0.0)


def covariance(train: Dataset, ridge: Optional[float] = None) -> CovarianceContext:
    """
    Sample covariance (divisor n - 1) of the training rows with ridge * I
    added to the diagonal before inversion.
    """
    ridge = settings.COVARIANCE_RIDGE if ridge is None else ridge
    if train.n_rows < 2:
        raise DataError(f"covariance needs at least 2 rows, got {train.n_rows}")

    matrix = np.atleast_2d(np.cov(train.rows, rowvar=False, ddof=1))
    matrix = 0.5 * (matrix + matrix.T)
    regularised = matrix + ridge * np.eye(matrix.shape[0])

    try:
        inverse = np.linalg.inv(regularised)
    except np.linalg.LinAlgError as exc:
        raise CovarianceError(f"covariance inversion failed with ridge={ridge}; raise the ridge") from exc

    inverse = 0.5 * (inverse + inverse.T)
    residual = np.abs(inverse @ regularised - np.eye(matrix.shape[0])).max()
    if not np.isfinite(residual) or residual > 1e-6:
        raise CovarianceError(
            f"covariance inverse is ill-conditioned (residual={residual:.3g}) with ridge={ridge}; "
            f"raise the ridge"
        )

    logger.info(f"covariance_computed - features={matrix.shape[0]}, rows={train.n_rows}, ridge={ridge}")
    return CovarianceContext(matrix=matrix, inverse=inverse, ridge=ridge)
