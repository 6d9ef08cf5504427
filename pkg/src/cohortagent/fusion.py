"""Patient-to-vector fusion: metadata encoding, feature aggregation, weighting.

The fused representation is concat(encoded_metadata, w * aggregated_features),
with the feature weight applied before concatenation. Encoding statistics are
always fitted on the retrieval database, never on held-out patients.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core import (
    CATEGORICAL,
    DEFAULT_FEATURE_WEIGHT,
    FEATURE_COLS,
    FEATURE_ROWS,
    NUMERIC,
    MetadataSchema,
    PatientRecord,
)

POOLED = "pooled"
FLATTENED = "flattened"
AGGREGATIONS = (POOLED, FLATTENED)


class UnknownCategoryWarning(UserWarning):
    """A categorical value outside the declared set was encoded as all-zero."""


@dataclass(frozen=True)
class FusionConfig:
    """Aggregation mode and feature weight for the fused vector."""

    aggregation: str = POOLED
    feature_weight: float = DEFAULT_FEATURE_WEIGHT

    def __post_init__(self) -> None:
        if self.aggregation not in AGGREGATIONS:
            raise ValueError(f"unknown aggregation {self.aggregation!r}")
        if not math.isfinite(self.feature_weight) or self.feature_weight < 0:
            raise ValueError("feature_weight must be finite and >= 0")


@dataclass(frozen=True)
class NumericStats:
    """Fitted mean/sd for one numeric field; constant means encode as 0."""

    mean: float
    sd: float
    constant: bool


@dataclass(frozen=True)
class EncodingStats:
    """Database-fitted encoding statistics plus the schema that shaped them."""

    schema: MetadataSchema
    numeric: dict[str, NumericStats]
    categorical: dict[str, tuple[str, ...]]

    @property
    def encoded_dim(self) -> int:
        # numeric: z column + missing indicator; categorical: one-hot block
        dim = 0
        for f in self.schema.fields:
            dim += 2 if f.kind == NUMERIC else len(f.categories)
        return dim


def fit_encoding(database: list[PatientRecord], schema: MetadataSchema) -> EncodingStats:
    """Fit z-score statistics on the retrieval database.

    Sample standard deviation (n-1 denominator) over observed values; fields
    with fewer than two observations or zero variance are marked constant and
    encode as 0.
    """
    if not database:
        raise ValueError("cannot fit encoding on an empty database")
    numeric: dict[str, NumericStats] = {}
    categorical: dict[str, tuple[str, ...]] = {}
    for f in schema.fields:
        if f.kind == CATEGORICAL:
            categorical[f.name] = f.categories
            continue
        observed = [
            float(r.metadata[f.name])
            for r in database
            if r.metadata.get(f.name) is not None
        ]
        if len(observed) < 2:
            mean = observed[0] if observed else 0.0
            numeric[f.name] = NumericStats(mean=mean, sd=0.0, constant=True)
            continue
        arr = np.asarray(observed, dtype=np.float64)
        mean = float(arr.mean())
        sd = float(arr.std(ddof=1))
        numeric[f.name] = NumericStats(mean=mean, sd=sd, constant=(sd == 0.0))
    return EncodingStats(schema=schema, numeric=numeric, categorical=categorical)


def encode_metadata(record: PatientRecord, stats: EncodingStats) -> np.ndarray:
    """Encode metadata into a fixed-width float64 vector.

    Numeric fields: (v - mean) / sd plus a missing-indicator column (1 when
    the value is absent, in which case the z column is 0). Categorical fields:
    one-hot in declared order; a missing or undeclared value encodes as an
    all-zero block, the undeclared case additionally raising
    UnknownCategoryWarning.
    """
    out = np.zeros(stats.encoded_dim, dtype=np.float64)
    pos = 0
    for f in stats.schema.fields:
        value = record.metadata.get(f.name)
        if f.kind == NUMERIC:
            st = stats.numeric[f.name]
            if value is None:
                out[pos + 1] = 1.0
            elif not st.constant:
                out[pos] = (float(value) - st.mean) / st.sd
            pos += 2
        else:
            cats = stats.categorical[f.name]
            if value is not None:
                if value in cats:
                    out[pos + cats.index(value)] = 1.0
                else:
                    warnings.warn(
                        f"record {record.patient_id!r}: field {f.name!r} value "
                        f"{value!r} is not a declared category",
                        UnknownCategoryWarning,
                        stacklevel=2,
                    )
            pos += len(cats)
    return out


def _check_feature_shape(feature_map: np.ndarray) -> np.ndarray:
    arr = np.asarray(feature_map, dtype=np.float64)
    if arr.shape != (FEATURE_ROWS, FEATURE_COLS):
        raise ValueError(
            f"feature map shape {arr.shape} != ({FEATURE_ROWS}, {FEATURE_COLS})"
        )
    return arr


def pool_features(feature_map: np.ndarray) -> np.ndarray:
    """Column means over the timepoint rows: 5x128 -> 128."""
    return _check_feature_shape(feature_map).mean(axis=0)


def flatten_features(feature_map: np.ndarray) -> np.ndarray:
    """Row-major flattening: 5x128 -> 640."""
    return _check_feature_shape(feature_map).ravel().copy()


def fused_dim(stats: EncodingStats, config: FusionConfig) -> int:
    feat = FEATURE_COLS if config.aggregation == POOLED else FEATURE_ROWS * FEATURE_COLS
    return stats.encoded_dim + feat


def fuse(record: PatientRecord, stats: EncodingStats, config: FusionConfig) -> np.ndarray:
    """Build the fused vector: concat(encoded metadata, weight * aggregated features)."""
    meta = encode_metadata(record, stats)
    if config.aggregation == POOLED:
        agg = pool_features(record.features)
    else:
        agg = flatten_features(record.features)
    return np.concatenate([meta, config.feature_weight * agg])
