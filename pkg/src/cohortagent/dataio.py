"""On-disk dataset formats.

Records are line-delimited JSON objects with exactly the fields patient_id,
cohort, metadata, label, timepoints, feature_ref; unknown fields are rejected
unless lenient parsing is requested. feature_ref is the zero-based record
index into the companion binary feature file (magic CAFV, little-endian:
version u32, count u32, rows u32, cols u32, then count * rows * cols float32
row-major). Everything written here re-reads losslessly.
"""

from __future__ import annotations

import json
import struct
from typing import Sequence

import numpy as np

from .core import (
    FEATURE_COLS,
    FEATURE_ROWS,
    IndexFormatError,
    MetadataSchema,
    PatientRecord,
)
from .fusion import EncodingStats, NumericStats

_FEATURE_MAGIC = b"CAFV"
_FEATURE_VERSION = 1
_FEATURE_HEADER = struct.Struct("<4sIIII")

RECORD_FIELDS = ("patient_id", "cohort", "metadata", "label", "timepoints", "feature_ref")


def write_features(path: str, maps: np.ndarray) -> None:
    """Write an (n, 5, 128) stack of feature maps as float32."""
    arr = np.ascontiguousarray(maps, dtype="<f4")
    if arr.ndim != 3 or arr.shape[1:] != (FEATURE_ROWS, FEATURE_COLS):
        raise ValueError(
            f"feature stack shape {arr.shape} != (n, {FEATURE_ROWS}, {FEATURE_COLS})"
        )
    with open(path, "wb") as fh:
        fh.write(
            _FEATURE_HEADER.pack(
                _FEATURE_MAGIC,
                _FEATURE_VERSION,
                arr.shape[0],
                FEATURE_ROWS,
                FEATURE_COLS,
            )
        )
        fh.write(arr.tobytes())


def read_features(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _FEATURE_HEADER.size:
        raise IndexFormatError("corrupt header: feature file shorter than its header")
    magic, version, count, rows, cols = _FEATURE_HEADER.unpack_from(blob, 0)
    if magic != _FEATURE_MAGIC:
        raise IndexFormatError(f"corrupt header: bad magic {magic!r}")
    if version != _FEATURE_VERSION:
        raise IndexFormatError(f"unsupported version {version}")
    if (rows, cols) != (FEATURE_ROWS, FEATURE_COLS):
        raise IndexFormatError(
            f"feature file declares {rows}x{cols} maps, expected "
            f"{FEATURE_ROWS}x{FEATURE_COLS}"
        )
    expected = _FEATURE_HEADER.size + count * rows * cols * 4
    if len(blob) != expected:
        raise IndexFormatError(
            f"truncated payload: {len(blob)} bytes, expected {expected}"
        )
    data = np.frombuffer(blob, dtype="<f4", count=count * rows * cols,
                         offset=_FEATURE_HEADER.size)
    out = data.reshape(count, rows, cols).astype(np.float64)
    out.setflags(write=False)
    return out


def write_records(path: str, records: Sequence[PatientRecord]) -> None:
    """Write records as JSON lines; feature_ref is the record's position."""
    with open(path, "w", encoding="utf-8") as fh:
        for i, rec in enumerate(records):
            doc = {
                "patient_id": rec.patient_id,
                "cohort": rec.cohort,
                "metadata": rec.metadata,
                "label": rec.label,
                "timepoints": rec.timepoints,
                "feature_ref": i,
            }
            fh.write(json.dumps(doc, ensure_ascii=False))
            fh.write("\n")


def write_dataset(
    records_path: str, features_path: str, records: Sequence[PatientRecord]
) -> None:
    """Write the record file and its companion feature file together."""
    stack = np.stack([rec.features for rec in records]) if records else np.empty(
        (0, FEATURE_ROWS, FEATURE_COLS)
    )
    write_features(features_path, stack)
    write_records(records_path, records)


def read_records(
    records_path: str, features_path: str, lenient: bool = False
) -> list[PatientRecord]:
    """Parse a record file against its feature file.

    Strict by default: unknown fields, duplicate patient ids, missing required
    fields, type errors, and dangling feature_refs all raise with the line
    number or patient id named. lenient=True ignores unknown fields only.
    """
    features = read_features(features_path)
    records: list[PatientRecord] = []
    seen: set[str] = set()
    with open(records_path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(doc, dict):
                raise ValueError(f"line {lineno}: record must be a JSON object")
            unknown = set(doc) - set(RECORD_FIELDS)
            if unknown and not lenient:
                raise ValueError(
                    f"line {lineno}: unknown field(s) {sorted(unknown)}; "
                    "pass lenient parsing to ignore"
                )
            missing = [f for f in RECORD_FIELDS if f not in doc]
            if missing:
                raise ValueError(f"line {lineno}: missing field(s) {missing}")
            patient_id = doc["patient_id"]
            if not isinstance(patient_id, str) or not patient_id:
                raise ValueError(f"line {lineno}: patient_id must be a non-empty string")
            if patient_id in seen:
                raise ValueError(f"line {lineno}: duplicate patient_id {patient_id!r}")
            seen.add(patient_id)
            if not isinstance(doc["cohort"], str):
                raise ValueError(f"line {lineno}: cohort must be a string")
            if not isinstance(doc["metadata"], dict):
                raise ValueError(f"line {lineno}: metadata must be an object")
            if doc["label"] not in (0, 1):
                raise ValueError(f"line {lineno}: label must be 0 or 1")
            if not isinstance(doc["timepoints"], int) or doc["timepoints"] < 1:
                raise ValueError(f"line {lineno}: timepoints must be an integer >= 1")
            ref = doc["feature_ref"]
            if not isinstance(ref, int) or isinstance(ref, bool):
                raise ValueError(f"line {lineno}: feature_ref must be an integer")
            if not 0 <= ref < features.shape[0]:
                raise ValueError(
                    f"feature_ref {ref} out of range for patient {patient_id!r} "
                    f"(feature file holds {features.shape[0]} maps)"
                )
            records.append(
                PatientRecord(
                    patient_id=patient_id,
                    cohort=doc["cohort"],
                    metadata=doc["metadata"],
                    features=features[ref],
                    label=doc["label"],
                    timepoints=doc["timepoints"],
                )
            )
    return records


def save_schema(path: str, schema: MetadataSchema) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(schema.to_dict(), fh, indent=2)
        fh.write("\n")


def load_schema(path: str) -> MetadataSchema:
    with open(path, "r", encoding="utf-8") as fh:
        return MetadataSchema.from_dict(json.load(fh))


def save_encoding_stats(path: str, stats: EncodingStats) -> None:
    """Persist fitted encoding statistics with their schema (full precision)."""
    doc = {
        "schema": stats.schema.to_dict(),
        "numeric": {
            name: {"mean": st.mean, "sd": st.sd, "constant": st.constant}
            for name, st in stats.numeric.items()
        },
        "categorical": {name: list(cats) for name, cats in stats.categorical.items()},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def load_encoding_stats(path: str) -> EncodingStats:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    schema = MetadataSchema.from_dict(doc["schema"])
    numeric = {
        name: NumericStats(
            mean=float(entry["mean"]), sd=float(entry["sd"]), constant=bool(entry["constant"])
        )
        for name, entry in doc.get("numeric", {}).items()
    }
    categorical = {
        name: tuple(cats) for name, cats in doc.get("categorical", {}).items()
    }
    return EncodingStats(schema=schema, numeric=numeric, categorical=categorical)
