"""Thin HTTP prediction service over the assembled agent.

POST /v1/predict takes {"metadata": {...}, "features": 5x128 | "feature_ref":
int, "k": int?} with exactly one of features/feature_ref and returns the risk,
selected model, assigned cohort, neighbor ids, vote histogram, and timing.
A feature_ref resolves the full stored patient record, so those predictions
are bit-identical to CLI predict for the same patient. Inline features form
an anonymous query (label 0, one timepoint, content-digest patient id), which
keeps identical requests deterministic. GET /v1/health reports the loaded
index and registry. Handlers are pure functions over an immutable state
bundle, so the threading server needs no locks.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from .agent import AgentRuntime, predict_record
from .core import (
    FEATURE_COLS,
    FEATURE_ROWS,
    LlmUnavailableError,
    ModelNotApplicableError,
    NoApplicableModelError,
    PatientRecord,
    RecordValidationError,
)

MAX_BODY_BYTES = 1 << 20

_PREDICT_FIELDS = {"metadata", "features", "feature_ref", "k"}


@dataclass
class ServiceState:
    """Runtime plus the record store backing feature_ref lookups."""

    runtime: AgentRuntime | None = None
    records: list[PatientRecord] | None = None
    max_body_bytes: int = MAX_BODY_BYTES


def health_response(state: ServiceState) -> tuple[int, dict]:
    """503 until an index is loaded, else a summary of the loaded runtime."""
    if state.runtime is None:
        return 503, {"error": "no index loaded"}
    rt = state.runtime
    return 200, {
        "status": "ok",
        "index_size": rt.index.size,
        "dimension": rt.index.dimension,
        "metric": rt.index.metric,
        "models": len(rt.registry),
        "backend": getattr(rt.backend, "kind", "rule"),
    }


def _query_record(state: ServiceState, payload: dict) -> PatientRecord:
    has_features = "features" in payload
    has_ref = "feature_ref" in payload
    if has_features == has_ref:
        raise ValueError("exactly one of features or feature_ref must be present")
    if has_ref:
        ref = payload["feature_ref"]
        if not isinstance(ref, int) or isinstance(ref, bool):
            raise ValueError("feature_ref must be an integer")
        if state.records is None:
            raise ValueError("this service has no record store for feature_ref lookups")
        if not 0 <= ref < len(state.records):
            raise ValueError(
                f"feature_ref {ref} out of range (store holds {len(state.records)})"
            )
        record = state.records[ref]
        metadata = payload.get("metadata")
        if metadata is None:
            return record
        if not isinstance(metadata, dict):
            raise ValueError("metadata must be an object")
        return PatientRecord(
            patient_id=record.patient_id,
            cohort=record.cohort,
            metadata=metadata,
            features=record.features,
            label=record.label,
            timepoints=record.timepoints,
        )
    features = np.asarray(payload["features"], dtype=np.float64)
    if features.shape != (FEATURE_ROWS, FEATURE_COLS):
        raise ValueError(
            f"features must be {FEATURE_ROWS}x{FEATURE_COLS}, got shape {features.shape}"
        )
    if not np.isfinite(features).all():
        raise ValueError("non-finite feature value")
    metadata = payload.get("metadata", {})
    if not isinstance(metadata, dict):
        raise ValueError("metadata must be an object")
    digest = hashlib.sha256(
        json.dumps(
            {"metadata": metadata, "features": features.tolist()}, sort_keys=True
        ).encode("utf-8")
    ).hexdigest()
    return PatientRecord(
        patient_id=f"query-{digest[:12]}",
        cohort="",
        metadata=metadata,
        features=features,
        label=0,
        timepoints=1,
    )


def predict_response(state: ServiceState, body: bytes) -> tuple[int, dict]:
    """Handle one prediction request body; returns (status, reply document)."""
    if state.runtime is None:
        return 503, {"error": "no index loaded"}
    try:
        payload = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        return 400, {"error": f"malformed JSON body: {exc}"}
    if not isinstance(payload, dict):
        return 400, {"error": "request body must be a JSON object"}
    unknown = set(payload) - _PREDICT_FIELDS
    if unknown:
        return 400, {"error": f"unknown field(s) {sorted(unknown)}"}
    k = payload.get("k")
    if k is not None and (not isinstance(k, int) or isinstance(k, bool) or k < 1):
        return 400, {"error": "k must be an integer >= 1"}
    try:
        record = _query_record(state, payload)
        result = predict_record(state.runtime, record, k=k)
    except (ModelNotApplicableError, NoApplicableModelError) as exc:
        return 422, {"error": str(exc)}
    except LlmUnavailableError as exc:
        return 503, {"error": str(exc)}
    except (RecordValidationError, ValueError) as exc:
        return 400, {"error": str(exc)}
    return 200, {
        "risk": result.risk.probability,
        "model": result.risk.model,
        "cohort": result.risk.cohort,
        "neighbor_ids": list(result.risk.neighbor_ids),
        "votes": result.assignment.vote_counts,
        "timing_ms": result.output.wall_time * 1000.0,
    }


class _Handler(BaseHTTPRequestHandler):
    state: ServiceState  # set by make_server

    def _send(self, status: int, doc: dict) -> None:
        body = json.dumps(doc).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self) -> None:  # noqa: N802 (http.server API)
        if self.path == "/v1/health":
            status, doc = health_response(self.state)
            self._send(status, doc)
        else:
            self._send(404, {"error": f"no such path {self.path}"})

    def do_POST(self) -> None:  # noqa: N802 (http.server API)
        if self.path != "/v1/predict":
            self._send(404, {"error": f"no such path {self.path}"})
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
        except ValueError:
            self._send(400, {"error": "bad Content-Length"})
            return
        if length > self.state.max_body_bytes:
            self._send(413, {"error": f"body exceeds {self.state.max_body_bytes} bytes"})
            return
        body = self.rfile.read(length)
        status, doc = predict_response(self.state, body)
        self._send(status, doc)

    def log_message(self, format: str, *args) -> None:  # noqa: A002
        pass  # keep request logging out of stdout; callers can wrap if needed


def make_server(state: ServiceState, host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    """Build (but do not start) the threading HTTP server."""
    handler = type("Handler", (_Handler,), {"state": state})
    return ThreadingHTTPServer((host, port), handler)


def serve_forever(state: ServiceState, host: str, port: int) -> None:
    server = make_server(state, host, port)
    try:
        server.serve_forever()
    finally:
        server.server_close()
