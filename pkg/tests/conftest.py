"""Shared builders for test data. Kept tiny on purpose."""

from __future__ import annotations

import numpy as np

from cohortagent import FieldSpec, MetadataSchema, PatientRecord
from cohortagent.core import FEATURE_COLS, FEATURE_ROWS


def make_features(fill: float = 0.0, rng: np.random.Generator | None = None) -> np.ndarray:
    if rng is not None:
        return rng.normal(size=(FEATURE_ROWS, FEATURE_COLS))
    return np.full((FEATURE_ROWS, FEATURE_COLS), fill, dtype=np.float64)


def make_record(
    patient_id: str = "p0",
    cohort: str = "A",
    metadata: dict | None = None,
    features: np.ndarray | None = None,
    label: int = 0,
    timepoints: int = 1,
) -> PatientRecord:
    return PatientRecord(
        patient_id=patient_id,
        cohort=cohort,
        metadata=metadata if metadata is not None else {},
        features=features if features is not None else make_features(),
        label=label,
        timepoints=timepoints,
    )


def demo_schema() -> MetadataSchema:
    return MetadataSchema(
        fields=(
            FieldSpec(name="age", kind="numeric"),
            FieldSpec(name="gender", kind="categorical", categories=("male", "female", "unknown")),
        )
    )
