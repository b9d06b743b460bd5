from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union
import math

import numpy as np
import pandas as pd

from config import settings
from errors import DataError, SchemaError
from logs.log import logger


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, copy=True)
    array.flags.writeable = False
    return array


@dataclass(frozen=True, eq=False)
class Dataset:
    """
    Tabular dataset with integer class labels.

    rows is (n_rows, n_features). scale_min/scale_max are set once the
    affine [0,1] scaling has been applied; row_ids track rows through splits.
    """
    feature_names: Tuple[str, ...]
    rows: np.ndarray
    labels: np.ndarray
    label_name: str
    class_names: Tuple[str, ...]
    row_ids: np.ndarray
    scale_min: Optional[np.ndarray] = None
    scale_max: Optional[np.ndarray] = None
    warnings: Tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "rows", _frozen(np.asarray(self.rows, dtype=np.float64)))
        object.__setattr__(self, "labels", _frozen(np.asarray(self.labels, dtype=np.int64)))
        object.__setattr__(self, "row_ids", _frozen(np.asarray(self.row_ids, dtype=np.int64)))
        if self.scale_min is not None:
            object.__setattr__(self, "scale_min", _frozen(np.asarray(self.scale_min, dtype=np.float64)))
            object.__setattr__(self, "scale_max", _frozen(np.asarray(self.scale_max, dtype=np.float64)))

    @property
    def n_rows(self) -> int:
        return int(self.rows.shape[0])

    @property
    def n_features(self) -> int:
        return int(self.rows.shape[1])

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def is_scaled(self) -> bool:
        return self.scale_min is not None

    def subset(self, indices: Sequence[int]) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return replace(
            self,
            rows=self.rows[indices],
            labels=self.labels[indices],
            row_ids=self.row_ids[indices],
        )


# ============================================================================
# INGESTION
# ============================================================================

def _resolve_label_column(columns: List[str], label_column: Union[str, int]) -> str:
    if isinstance(label_column, int) or (isinstance(label_column, str) and label_column.isdigit()
                                         and label_column not in columns):
        index = int(label_column)
        if not 0 <= index < len(columns):
            raise DataError(f"label column index {index} out of range for {len(columns)} columns")
        return columns[index]
    if label_column not in columns:
        raise DataError(f"label column '{label_column}' not found")
    return label_column


def _encode_labels(raw: pd.Series, positive_threshold: Optional[float]) -> Tuple[np.ndarray, Tuple[str, ...]]:
    if positive_threshold is not None:
        numeric = pd.to_numeric(raw, errors="coerce")
        if numeric.isna().any():
            raise DataError(f"label column '{raw.name}' is not numeric; cannot apply threshold")
        labels = (numeric.to_numpy() >= positive_threshold).astype(np.int64)
        return labels, (f"<{positive_threshold:g}", f">={positive_threshold:g}")

    numeric = pd.to_numeric(raw, errors="coerce")
    if not numeric.isna().any():
        distinct = np.unique(numeric.to_numpy(dtype=np.float64))
        labels = np.searchsorted(distinct, numeric.to_numpy(dtype=np.float64))
        names = tuple(f"{value:g}" for value in distinct)
    else:
        distinct = np.unique(raw.to_numpy(dtype=str))
        labels = np.searchsorted(distinct, raw.to_numpy(dtype=str))
        names = tuple(str(value) for value in distinct)
    return labels.astype(np.int64), names


def load_csv(
    path: Union[str, Path],
    label_column: Union[str, int],
    positive_threshold: Optional[float] = None,
    min_classes: int = 2
) -> Dataset:
    """
    Load a headed, comma-separated file into an unscaled Dataset.

    Non-numeric feature columns are dropped. With positive_threshold the
    label becomes 1 where label >= threshold, else 0; otherwise distinct
    label values are mapped to 0..K-1 in sorted order. Files that are only
    explained, not trained on, may pass min_classes=1.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"data file not found: {path}")

    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, na_values=[""], encoding="utf-8")
    except pd.errors.ParserError as exc:
        raise DataError(f"ragged rows in {path}: {exc}") from exc
    except pd.errors.EmptyDataError as exc:
        raise DataError(f"empty data file: {path}") from exc

    # short rows are padded with empty fields, which read back as NaN
    if frame.isna().to_numpy().any():
        bad_row = int(np.flatnonzero(frame.isna().any(axis=1).to_numpy())[0])
        raise DataError(f"ragged rows in {path}: row {bad_row + 1} has missing or empty fields")

    columns = [str(c) for c in frame.columns]
    label_name = _resolve_label_column(columns, label_column)
    labels, class_names = _encode_labels(frame[label_name], positive_threshold)
    if len(np.unique(labels)) < min_classes:
        raise DataError(f"fewer than {min_classes} classes in label column '{label_name}'")

    feature_names: List[str] = []
    feature_columns: List[np.ndarray] = []
    dropped: List[str] = []
    for name in columns:
        if name == label_name:
            continue
        numeric = pd.to_numeric(frame[name], errors="coerce")
        if numeric.isna().any():
            dropped.append(name)
            continue
        feature_names.append(name)
        feature_columns.append(numeric.to_numpy(dtype=np.float64))

    warnings: Tuple[str, ...] = ()
    if dropped:
        warnings = (f"dropped non-numeric columns: {', '.join(dropped)}",)
        logger.warning(f"categorical_columns_dropped - path={path}, columns={dropped}")

    if not feature_names:
        raise DataError(f"zero numeric features remaining in {path}")

    rows = np.column_stack(feature_columns)
    logger.info(
        f"csv_loaded - path={path}, rows={rows.shape[0]}, features={len(feature_names)}, "
        f"classes={len(class_names)}"
    )
    return Dataset(
        feature_names=tuple(feature_names),
        rows=rows,
        labels=labels,
        label_name=label_name,
        class_names=class_names,
        row_ids=np.arange(rows.shape[0]),
        warnings=warnings,
    )


# ============================================================================
# SCALING
# ============================================================================

def minmax_scale(ds: Dataset) -> Dataset:
    """Map every column to [0,1] by (v - min) / (max - min); constant columns are dropped"""
    col_min = ds.rows.min(axis=0)
    col_max = ds.rows.max(axis=0)
    keep = col_max > col_min

    warnings = ds.warnings
    if not keep.all():
        constant = [name for name, k in zip(ds.feature_names, keep) if not k]
        warnings = warnings + (f"dropped constant columns: {', '.join(constant)}",)
        logger.warning(f"constant_columns_dropped - columns={constant}")
    if not keep.any():
        raise DataError("zero numeric features remaining after dropping constant columns")

    scale_min = col_min[keep]
    scale_max = col_max[keep]
    scaled = (ds.rows[:, keep] - scale_min) / (scale_max - scale_min)

    return replace(
        ds,
        feature_names=tuple(n for n, k in zip(ds.feature_names, keep) if k),
        rows=scaled,
        scale_min=scale_min,
        scale_max=scale_max,
        warnings=warnings,
    )


def apply_scaling(
    ds: Dataset,
    feature_names: Sequence[str],
    scale_min: Sequence[float],
    scale_max: Sequence[float],
    allow_out_of_range: bool = False,
    tolerance: float = 1e-9
) -> Dataset:
    """Scale a raw Dataset with stored scaling metadata, selecting the stored features"""
    missing = [name for name in feature_names if name not in ds.feature_names]
    if missing:
        raise SchemaError(f"data is missing model features: {missing}")

    index = [ds.feature_names.index(name) for name in feature_names]
    scale_min = np.asarray(scale_min, dtype=np.float64)
    scale_max = np.asarray(scale_max, dtype=np.float64)
    scaled = (ds.rows[:, index] - scale_min) / (scale_max - scale_min)

    if not allow_out_of_range:
        if (scaled < -tolerance).any() or (scaled > 1.0 + tolerance).any():
            raise DataError("scaled values fall outside [0,1]; data does not match the model's scaling")
        scaled = np.clip(scaled, 0.0, 1.0)

    return replace(
        ds,
        feature_names=tuple(feature_names),
        rows=scaled,
        scale_min=scale_min,
        scale_max=scale_max,
    )


def unscale(matrix: np.ndarray, scale_min: np.ndarray, scale_max: np.ndarray) -> np.ndarray:
    """Inverse of the affine [0,1] scaling"""
    return np.asarray(matrix, dtype=np.float64) * (scale_max - scale_min) + scale_min


# ============================================================================
# SPLITTING
# ============================================================================

def split_70_30(
    ds: Dataset,
    seed: int,
    stratify: bool = False,
    train_fraction: Optional[float] = None
) -> Tuple[Dataset, Dataset]:
    """
    Deterministic shuffled split; the train part gets floor(fraction * n) rows.

    With stratify the floor is taken per class, so the train part can be a
    few rows smaller than the unstratified one.
    """
    fraction = settings.TRAIN_FRACTION if train_fraction is None else train_fraction
    if ds.n_rows < settings.MIN_SPLIT_ROWS:
        raise DataError(f"too few rows to split: {ds.n_rows} < {settings.MIN_SPLIT_ROWS}")

    rng = np.random.default_rng(seed)
    if stratify:
        train_parts, test_parts = [], []
        for label in np.unique(ds.labels):
            members = np.flatnonzero(ds.labels == label)
            members = members[rng.permutation(members.size)]
            cut = math.floor(members.size * fraction + 1e-9)
            train_parts.append(members[:cut])
            test_parts.append(members[cut:])
        train_idx = np.sort(np.concatenate(train_parts))
        test_idx = np.sort(np.concatenate(test_parts))
        train_idx = train_idx[rng.permutation(train_idx.size)]
        test_idx = test_idx[rng.permutation(test_idx.size)]
    else:
        order = rng.permutation(ds.n_rows)
        cut = math.floor(ds.n_rows * fraction + 1e-9)
        train_idx, test_idx = order[:cut], order[cut:]

    logger.info(
        f"dataset_split - seed={seed}, train={train_idx.size}, test={test_idx.size}, "
        f"stratify={stratify}"
    )
    return ds.subset(train_idx), ds.subset(test_idx)


def write_csv(ds: Dataset, path: Union[str, Path]):
    """Write rows in original units (unscaled when scaling metadata is present) plus the label"""
    rows = unscale(ds.rows, ds.scale_min, ds.scale_max) if ds.is_scaled else ds.rows
    frame = pd.DataFrame(rows, columns=list(ds.feature_names))
    frame[ds.label_name] = ds.labels
    frame.to_csv(path, index=False, float_format="%.17g")
    logger.info(f"csv_written - path={path}, rows={ds.n_rows}")
