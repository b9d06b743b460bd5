from prometheus_client import Counter, Histogram, Gauge
from prometheus_client import write_to_textfile, REGISTRY
import time

# ============================================================================
# EXPLANATION METRICS
# ============================================================================

explanations_total = Counter(
    'explanations_total',
    'Total explanation jobs',
    ['method', 'status']  # status: found, not_found, error
)

explanation_duration_seconds = Histogram(
    'explanation_duration_seconds',
    'Wall-clock time per batch of explanations',
    ['method'],
    buckets=(0.01, 0.05, 0.1, 0.5, 1.0, 5.0, 10.0, 30.0, 60.0, 300.0, 1800.0)
)

optimizer_iterations_total = Counter(
    'optimizer_iterations_total',
    'Total gradient iterations performed'
)

counterfactual_found_iteration = Histogram(
    'counterfactual_found_iteration',
    'Iteration at which the best counterfactual was found',
    buckets=(1, 5, 10, 25, 50, 100, 250, 500, 750, 1000, 5000)
)

# ============================================================================
# TRAINING METRICS
# ============================================================================

models_trained_total = Counter(
    'models_trained_total',
    'Total models trained',
    ['kind']
)

training_duration_seconds = Histogram(
    'training_duration_seconds',
    'Model training latency',
    ['kind'],
    buckets=(0.01, 0.1, 0.5, 1.0, 5.0, 10.0, 30.0, 60.0, 300.0)
)

# ============================================================================
# SEARCH METRICS
# ============================================================================

grid_cells_evaluated_total = Counter(
    'grid_cells_evaluated_total',
    'Total hyperparameter cells evaluated',
    ['method']
)

best_cell_coverage = Gauge(
    'best_cell_coverage',
    'Coverage of the most recently selected grid cell',
    ['method']
)

# ============================================================================
# ERROR METRICS
# ============================================================================

errors_total = Counter(
    'errors_total',
    'Total errors',
    ['error_type', 'component']
)

# ============================================================================
# HELPER FUNCTIONS
# ============================================================================

class MetricsTimer:
    """Context manager for timing operations"""

    def __init__(self, histogram, labels: dict = None):
        self.histogram = histogram
        self.labels = labels or {}
        self.start_time = None
        self.duration = None

    def __enter__(self):
        self.start_time = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.duration = time.perf_counter() - self.start_time
        if self.labels:
            self.histogram.labels(**self.labels).observe(self.duration)
        else:
            self.histogram.observe(self.duration)


def track_explanation(method: str, found: bool, error: bool = False, iterations: int = 0,
                      found_at_iteration: int = None):
    """Track one explanation outcome"""
    status = "error" if error else ("found" if found else "not_found")
    explanations_total.labels(method=method, status=status).inc()

    if iterations:
        optimizer_iterations_total.inc(iterations)

    if found and found_at_iteration is not None:
        counterfactual_found_iteration.observe(found_at_iteration)


def track_training(kind: str):
    """Count a trained model; its duration is observed by MetricsTimer"""
    models_trained_total.labels(kind=kind).inc()


def track_grid_cell(method: str):
    grid_cells_evaluated_total.labels(method=method).inc()


def track_best_cell(method: str, coverage: float):
    best_cell_coverage.labels(method=method).set(coverage)


def track_error(error_type: str, component: str):
    """Track error occurrence"""
    errors_total.labels(error_type=error_type, component=component).inc()


def write_metrics(path: str):
    """Write a Prometheus text-format snapshot to path"""
    write_to_textfile(path, REGISTRY)
