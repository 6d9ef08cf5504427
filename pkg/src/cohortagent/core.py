"""Shared domain types: patient records, metadata schema, validation, errors."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

# Imaging feature maps are fixed-shape: one row per sampled timepoint.
FEATURE_ROWS = 5
FEATURE_COLS = 128

DEFAULT_SEED = 1337
DEFAULT_K = 15
DEFAULT_FEATURE_WEIGHT = 0.1
DEFAULT_HOLDOUT_FRACTION = 0.30

NUMERIC = "numeric"
CATEGORICAL = "categorical"

# The nine cohorts of the bundled reference suite.
REFERENCE_COHORTS = (
    "BRONCH",
    "MCL_VUMC",
    "MCL_UPMC",
    "MCL_DECAMP",
    "MCL_UCD",
    "VLSP",
    "LI-VUMC",
    "NLST_test_nodule",
    "NLST_test",
)

REFERENCE_MODELS = ("Mayo", "Brock", "TD-ViT", "DLSTM", "Liao", "Sybil", "DLS", "DLI")

# Historical per-cohort AUC of the three imaging models that are runnable on
# every reference cohort. Used to seed the default performance table and the
# synthetic stub targets.
REFERENCE_MODEL_AUCS: dict[str, dict[str, float]] = {
    "BRONCH": {"DLI": 0.609, "DLS": 0.643, "Sybil": 0.657},
    "MCL_VUMC": {"DLI": 0.827, "DLS": 0.765, "Sybil": 0.829},
    "MCL_UPMC": {"DLI": 0.983, "DLS": 0.880, "Sybil": 0.923},
    "MCL_DECAMP": {"DLI": 0.738, "DLS": 0.753, "Sybil": 0.654},
    "MCL_UCD": {"DLI": 0.938, "DLS": 0.805, "Sybil": 0.801},
    "VLSP": {"DLI": 0.510, "DLS": 0.811, "Sybil": 0.783},
    "LI-VUMC": {"DLI": 0.824, "DLS": 0.545, "Sybil": 0.725},
    "NLST_test_nodule": {"DLI": 0.545, "DLS": 0.627, "Sybil": 0.853},
    "NLST_test": {"DLI": 0.534, "DLS": 0.634, "Sybil": 0.838},
}


class CohortAgentError(Exception):
    """Base class for errors raised by this package."""


class RecordValidationError(CohortAgentError):
    """A patient record violated one or more schema or type constraints."""

    def __init__(self, patient_id: str, errors: list[str]):
        self.patient_id = patient_id
        self.errors = list(errors)
        super().__init__(f"invalid record {patient_id!r}: " + "; ".join(self.errors))


class ModelNotApplicableError(CohortAgentError):
    """The record does not satisfy the model's input requirements."""


class NoApplicableModelError(CohortAgentError):
    """No registered model is applicable for the cohort/record combination."""


class AdapterUnavailableError(CohortAgentError):
    """An external model adapter could not be reached or replied malformed."""


class LlmUnavailableError(CohortAgentError):
    """The selection LLM endpoint could not be reached."""


class IndexFormatError(CohortAgentError):
    """A persisted index file is corrupt, truncated, or of an unknown version."""


@dataclass(frozen=True)
class FieldSpec:
    """One declared metadata field; categorical fields list categories in order."""

    name: str
    kind: str
    categories: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in (NUMERIC, CATEGORICAL):
            raise ValueError(f"field {self.name!r}: unknown kind {self.kind!r}")
        object.__setattr__(self, "categories", tuple(self.categories))
        if self.kind == CATEGORICAL and not self.categories:
            raise ValueError(f"categorical field {self.name!r} declares no categories")
        if self.kind == NUMERIC and self.categories:
            raise ValueError(f"numeric field {self.name!r} must not declare categories")
        if len(set(self.categories)) != len(self.categories):
            raise ValueError(f"field {self.name!r}: duplicate categories")


@dataclass(frozen=True)
class MetadataSchema:
    """Declared metadata fields, in encoding order."""

    fields: tuple[FieldSpec, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "fields", tuple(self.fields))
        names = [f.name for f in self.fields]
        if len(set(names)) != len(names):
            raise ValueError("duplicate field names in schema")

    def field_names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.fields)

    def to_dict(self) -> dict[str, Any]:
        out = []
        for f in self.fields:
            entry: dict[str, Any] = {"name": f.name, "kind": f.kind}
            if f.kind == CATEGORICAL:
                entry["categories"] = list(f.categories)
            out.append(entry)
        return {"fields": out}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "MetadataSchema":
        if not isinstance(data, dict) or "fields" not in data:
            raise ValueError("schema document must be an object with a 'fields' list")
        fields = []
        for entry in data["fields"]:
            fields.append(
                FieldSpec(
                    name=entry["name"],
                    kind=entry["kind"],
                    categories=tuple(entry.get("categories", ())),
                )
            )
        return cls(fields=tuple(fields))


@dataclass(frozen=True)
class PatientRecord:
    """One patient: identity, cohort, metadata, a 5x128 feature map, outcome label.

    metadata maps declared field names to values; None marks a missing value.
    timepoints is the number of longitudinal scans backing the feature map.
    """

    patient_id: str
    cohort: str
    metadata: dict[str, Any]
    features: np.ndarray
    label: int
    timepoints: int = 1

    def __post_init__(self) -> None:
        feats = np.asarray(self.features, dtype=np.float64)
        feats.setflags(write=False)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "metadata", dict(self.metadata))


@dataclass(frozen=True)
class RiskPrediction:
    """Final agent output for one patient."""

    probability: float
    model: str
    cohort: str
    neighbor_ids: tuple[str, ...]


def record_errors(
    record: PatientRecord,
    schema: MetadataSchema,
    cohorts: tuple[str, ...] | None = None,
) -> list[str]:
    """Collect every constraint violated by the record (empty list means valid)."""
    errors: list[str] = []
    if not record.patient_id:
        errors.append("empty patient_id")
    if record.label not in (0, 1):
        errors.append(f"label {record.label!r} outside {{0, 1}}")
    if not isinstance(record.timepoints, int) or record.timepoints < 1:
        errors.append(f"timepoints {record.timepoints!r} must be an integer >= 1")
    if record.features.shape != (FEATURE_ROWS, FEATURE_COLS):
        errors.append(
            f"feature shape {record.features.shape} != ({FEATURE_ROWS}, {FEATURE_COLS})"
        )
    elif not np.isfinite(record.features).all():
        errors.append("non-finite feature value")
    if cohorts is not None and record.cohort not in cohorts:
        errors.append(f"unknown cohort {record.cohort!r}")
    declared = {f.name: f for f in schema.fields}
    for name, value in record.metadata.items():
        spec = declared.get(name)
        if spec is None:
            errors.append(f"metadata field {name!r} not in schema")
            continue
        if value is None:
            continue
        if spec.kind == NUMERIC:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                errors.append(f"metadata field {name!r} must be numeric, got {value!r}")
            elif not math.isfinite(float(value)):
                errors.append(f"metadata field {name!r} is non-finite")
        else:
            if not isinstance(value, str):
                errors.append(f"metadata field {name!r} must be a string, got {value!r}")
    return errors


def validate_record(
    record: PatientRecord,
    schema: MetadataSchema,
    cohorts: tuple[str, ...] | None = None,
) -> PatientRecord:
    """Return the record unchanged if valid, else raise with every violation."""
    errors = record_errors(record, schema, cohorts)
    if errors:
        raise RecordValidationError(record.patient_id, errors)
    return record
