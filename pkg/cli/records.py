"""
Counterfactual result files: a JSON array with one record per explained
instance, in input order.
"""
import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ValidationError

from errors import SchemaError
from focus.engine import CfResult, ExplanationDelta
from logs.log import logger
from cli.manifest import write_json


class CfRecord(BaseModel):
    instance_index: int
    method: str
    original: List[float]
    counterfactual: Optional[List[float]] = None
    original_label: int
    cf_label: Optional[int] = None
    distance: Optional[float] = None
    found_at_iteration: Optional[int] = None
    features_changed: Optional[int] = None
    delta_original_units: Optional[List[float]] = None
    error: Optional[str] = None
    fingerprint: Dict[str, Any]
    manifest_digest: str


def to_record(
    result: CfResult,
    fingerprint: Dict[str, Any],
    manifest_digest: str,
    scale_min: Optional[np.ndarray] = None,
    scale_max: Optional[np.ndarray] = None
) -> CfRecord:
    delta = ExplanationDelta.from_result(result, scale_min, scale_max)
    return CfRecord(
        instance_index=result.instance_index,
        method=result.method,
        original=[float(v) for v in result.original],
        counterfactual=None if not result.found else [float(v) for v in result.counterfactual],
        original_label=result.original_label,
        cf_label=result.cf_label,
        distance=result.distance,
        found_at_iteration=result.found_at_iteration,
        features_changed=None if delta is None else delta.n_changed,
        delta_original_units=(None if delta is None or delta.original_units is None
                              else [float(v) for v in delta.original_units]),
        error=result.error,
        fingerprint=fingerprint,
        manifest_digest=manifest_digest,
    )


def from_record(record: CfRecord) -> CfResult:
    return CfResult(
        instance_index=record.instance_index,
        original=np.asarray(record.original, dtype=np.float64),
        original_label=record.original_label,
        counterfactual=None if record.counterfactual is None else np.asarray(record.counterfactual, dtype=np.float64),
        cf_label=record.cf_label,
        distance=record.distance,
        found_at_iteration=record.found_at_iteration,
        error=record.error,
        method=record.method,
    )


def write_cf_file(path: Union[str, Path], records: Sequence[CfRecord]):
    write_json(path, [r.model_dump() for r in records])
    logger.info(f"cf_file_written - path={path}, records={len(records)}")


def read_cf_file(path: Union[str, Path]) -> Tuple[List[CfResult], Dict[str, Any]]:
    """Results and the fingerprint shared by the records"""
    path = Path(path)
    if not path.is_file():
        raise SchemaError(f"counterfactual file not found: {path}")
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
        if not isinstance(payload, list):
            raise SchemaError(f"counterfactual file {path} must hold a JSON array")
        records = [CfRecord.model_validate(item) for item in payload]
    except json.JSONDecodeError as exc:
        raise SchemaError(f"counterfactual file is not valid JSON: {exc}") from exc
    except ValidationError as exc:
        raise SchemaError(f"counterfactual file schema violation: {exc}") from exc

    indices = [r.instance_index for r in records]
    if len(set(indices)) != len(indices):
        raise SchemaError(f"duplicate instance indices in {path}")
    fingerprint = records[0].fingerprint if records else {}
    return [from_record(r) for r in records], fingerprint
