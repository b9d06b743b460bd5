import logging
from logging.handlers import RotatingFileHandler
import os
import json
import uuid
from datetime import datetime, timezone
from typing import Optional
import contextvars

from config import settings

# Context variables for run tracking
run_id_var = contextvars.ContextVar('run_id', default=None)
instance_id_var = contextvars.ContextVar('instance_id', default=None)
model_digest_var = contextvars.ContextVar('model_digest', default=None)


class ProductionFormatter(logging.Formatter):
    """Structured formatter with run_id, instance_id, model_digest"""

    def format(self, record):
        run_id = run_id_var.get()
        instance_id = instance_id_var.get()
        model_digest = model_digest_var.get()

        log_data = {
            "timestamp": datetime.now(timezone.utc).isoformat().replace("+00:00", "Z"),
            "level": record.levelname,
            "logger": record.name,
            "module": record.module,
            "function": record.funcName,
            "line": record.lineno,
            "message": record.getMessage(),
            "run_id": run_id,
            "instance_id": instance_id,
            "model_digest": model_digest,
        }

        if record.exc_info:
            log_data["exception"] = self.formatException(record.exc_info)

        if hasattr(record, 'extra_data'):
            log_data["extra"] = record.extra_data

        return json.dumps(log_data)


class ContextLogger(logging.LoggerAdapter):
    """Logger adapter that adds context information"""

    def process(self, msg, kwargs):
        extra = kwargs.get('extra', {})
        extra.update({
            'run_id': run_id_var.get(),
            'instance_id': instance_id_var.get(),
            'model_digest': model_digest_var.get(),
        })
        kwargs['extra'] = extra
        return msg, kwargs


json_formatter = ProductionFormatter()
console_formatter = logging.Formatter(
    "%(asctime)s [%(levelname)s] %(name)s:%(lineno)d - %(message)s"
)

base_logger = logging.getLogger("focus_logger")
base_logger.setLevel(getattr(logging, settings.LOG_LEVEL.upper(), logging.INFO))
base_logger.propagate = False

if settings.LOG_TO_FILE:
    os.makedirs(settings.LOG_DIR, exist_ok=True)

    # Main application log (JSON structured)
    app_handler = RotatingFileHandler(
        os.path.join(settings.LOG_DIR, "app.log"),
        maxBytes=settings.LOG_MAX_SIZE_MB * 1024 * 1024,
        backupCount=settings.LOG_BACKUP_COUNT
    )
    app_handler.setFormatter(json_formatter)
    app_handler.setLevel(logging.INFO)
    base_logger.addHandler(app_handler)

    # Error log (separate file for errors only)
    error_handler = RotatingFileHandler(
        os.path.join(settings.LOG_DIR, "error.log"),
        maxBytes=settings.LOG_MAX_SIZE_MB * 1024 * 1024,
        backupCount=5
    )
    error_handler.setFormatter(json_formatter)
    error_handler.setLevel(logging.ERROR)
    base_logger.addHandler(error_handler)

# Console handler; stdout is reserved for command output
console_handler = logging.StreamHandler()
console_handler.setFormatter(
    json_formatter if settings.LOG_FORMAT == "json" else console_formatter
)
console_handler.setLevel(logging.WARNING)
base_logger.addHandler(console_handler)

logger = ContextLogger(base_logger, {})


def set_log_level(level: str):
    """Change the level of the base logger and the console handler"""
    numeric = getattr(logging, level.upper(), None)
    if not isinstance(numeric, int):
        raise ValueError(f"Unknown log level: {level}")
    base_logger.setLevel(numeric)
    console_handler.setLevel(numeric)


# Context management functions
def set_run_id(run_id: Optional[str] = None) -> str:
    """Set run ID for current context"""
    if run_id is None:
        run_id = str(uuid.uuid4())
    run_id_var.set(run_id)
    return run_id


def set_instance_id(instance_id: Optional[int]):
    """Set the index of the instance being explained"""
    instance_id_var.set(instance_id)


def set_model_digest(digest: str):
    model_digest_var.set(digest)


def clear_context():
    """Clear all context variables"""
    run_id_var.set(None)
    instance_id_var.set(None)
    model_digest_var.set(None)


def log_training(kind: str, n_trees: int, n_rows: int, duration_ms: float):
    """Log a finished training run"""
    logger.info(
        "model_trained",
        extra={
            'extra_data': {
                'kind': kind,
                'n_trees': n_trees,
                'n_rows': n_rows,
                'duration_ms': duration_ms
            }
        }
    )


def log_explanation(
    method: str,
    instance_index: int,
    found: bool,
    iteration: Optional[int],
    distance: Optional[float]
):
    """Log the outcome of one explanation job"""
    logger.debug(
        "explanation_finished",
        extra={
            'extra_data': {
                'method': method,
                'instance_index': instance_index,
                'found': found,
                'found_at_iteration': iteration,
                'distance': distance
            }
        }
    )
