from typing import Optional


class FocusError(Exception):
    """Base error carrying the process exit code the CLI should return"""

    exit_code: int = 1
    component: str = "core"

    def __init__(self, detail: str, exit_code: Optional[int] = None):
        super().__init__(detail)
        self.detail = detail
        if exit_code is not None:
            self.exit_code = exit_code


class ArgumentError(FocusError):
    exit_code = 2
    component = "cli"


class DataError(FocusError):
    exit_code = 3
    component = "dataio"


class CovarianceError(DataError):
    component = "covariance"


class TrainingError(FocusError):
    exit_code = 3
    component = "ensemble"


class SchemaError(FocusError):
    exit_code = 4
    component = "schema"


class DistanceError(FocusError):
    exit_code = 4
    component = "distance"


class OptimizationError(FocusError):
    """Non-finite loss or gradient; reported per instance, never for a whole batch"""

    exit_code = 1
    component = "focus"

    def __init__(self, detail: str, iteration: int):
        super().__init__(detail)
        self.iteration = iteration
