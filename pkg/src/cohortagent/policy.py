"""Stage two of the agent: pick the historically best model for a cohort.

The default backend is a deterministic rule (argmax historical AUC among
applicable models, ties broken by lower per-patient cost then lexicographic
id). An LLM backend is an interchangeable endpoint descriptor whose reply is
parsed and validated against the registry and the performance table; any
invalid or unreachable reply falls back to the rule.
"""

from __future__ import annotations

import csv
import json
import math
import re
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable

import numpy as np

from .core import (
    REFERENCE_MODEL_AUCS,
    LlmUnavailableError,
    NoApplicableModelError,
    PatientRecord,
)
from .models import ModelRegistry, requirement_problems


@dataclass(frozen=True)
class PerfEntry:
    auc: float
    applicable: bool

    def __post_init__(self) -> None:
        if not 0.0 <= self.auc <= 1.0:
            raise ValueError(f"AUC {self.auc} outside [0, 1]")


class PerformanceTable:
    """Historical per-(cohort, model) AUC with an applicability flag.

    Every cohort must have at least one applicable model; a (cohort, model)
    pair absent from the table counts as not applicable.
    """

    def __init__(self, entries: dict[tuple[str, str], PerfEntry]):
        self._entries = dict(entries)
        cohorts: dict[str, bool] = {}
        models: dict[str, None] = {}
        for (cohort, model), entry in self._entries.items():
            cohorts[cohort] = cohorts.get(cohort, False) or entry.applicable
            models[model] = None
        for cohort, any_applicable in cohorts.items():
            if not any_applicable:
                raise ValueError(f"cohort {cohort!r} has no applicable model")
        if not cohorts:
            raise ValueError("empty performance table")
        self._cohorts = tuple(cohorts)
        self._models = tuple(models)

    @classmethod
    def from_rows(
        cls, rows: Iterable[tuple[str, str, float, bool]]
    ) -> "PerformanceTable":
        entries = {}
        for cohort, model, auc, applicable in rows:
            key = (str(cohort), str(model))
            if key in entries:
                raise ValueError(f"duplicate table row for {key}")
            entries[key] = PerfEntry(auc=float(auc), applicable=bool(applicable))
        return cls(entries)

    def cohorts(self) -> tuple[str, ...]:
        return self._cohorts

    def models(self) -> tuple[str, ...]:
        return self._models

    def entry(self, cohort: str, model: str) -> PerfEntry | None:
        return self._entries.get((cohort, model))

    def auc(self, cohort: str, model: str) -> float:
        entry = self._entries.get((cohort, model))
        if entry is None:
            raise ValueError(f"no table entry for ({cohort!r}, {model!r})")
        return entry.auc

    def applicable_models(self, cohort: str) -> list[str]:
        return [
            model
            for (c, model), entry in self._entries.items()
            if c == cohort and entry.applicable
        ]

    def rows(self) -> list[tuple[str, str, float, bool]]:
        return [
            (cohort, model, entry.auc, entry.applicable)
            for (cohort, model), entry in self._entries.items()
        ]

    def to_csv(self, path: str) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["cohort", "model", "auc", "applicable"])
            for cohort, model, auc, applicable in self.rows():
                writer.writerow([cohort, model, repr(auc), "true" if applicable else "false"])

    @classmethod
    def from_csv(cls, path: str) -> "PerformanceTable":
        rows = []
        with open(path, "r", newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            expected = {"cohort", "model", "auc", "applicable"}
            if reader.fieldnames is None or set(reader.fieldnames) != expected:
                raise ValueError(
                    f"performance table header must be {sorted(expected)}, "
                    f"got {reader.fieldnames}"
                )
            for lineno, row in enumerate(reader, start=2):
                flag = row["applicable"].strip().lower()
                if flag not in ("true", "false"):
                    raise ValueError(f"line {lineno}: applicable must be true/false")
                rows.append(
                    (row["cohort"], row["model"], float(row["auc"]), flag == "true")
                )
        return cls.from_rows(rows)


def reference_performance_table() -> PerformanceTable:
    """Table built from the bundled historical per-cohort AUC profiles."""
    rows = []
    for cohort, profile in REFERENCE_MODEL_AUCS.items():
        for model, auc in profile.items():
            rows.append((cohort, model, auc, True))
    return PerformanceTable.from_rows(rows)


@dataclass(frozen=True)
class SelectionDecision:
    """Which model was chosen for a cohort, by which backend, and why."""

    model: str
    cohort: str
    backend: str
    rationale: str
    fell_back: bool = False


def best_model(
    table: PerformanceTable,
    cohort: str,
    registry: ModelRegistry,
    record: PatientRecord | None = None,
) -> SelectionDecision:
    """Argmax historical AUC among applicable, requirement-satisfying models.

    Ties break by lower configured per-patient cost, then lexicographic id.
    Table rows naming unregistered models are skipped.
    """
    candidates = []
    for model in table.applicable_models(cohort):
        if model not in registry:
            continue
        spec = registry.get(model)
        if record is not None and requirement_problems(spec, record):
            continue
        cost = spec.cost_per_patient if spec.cost_per_patient is not None else 0.0
        candidates.append((-table.auc(cohort, model), cost, model))
    if not candidates:
        detail = f" for record {record.patient_id!r}" if record is not None else ""
        raise NoApplicableModelError(
            f"no applicable model for cohort {cohort!r}{detail}"
        )
    candidates.sort()
    _, _, model = candidates[0]
    return SelectionDecision(
        model=model,
        cohort=cohort,
        backend="rule",
        rationale=(
            f"highest historical AUC {table.auc(cohort, model):.3f} "
            f"among {len(candidates)} applicable model(s) for cohort {cohort!r}"
        ),
    )


def render_prompt(
    query_text: str,
    record: PatientRecord,
    cohort: str,
    table: PerformanceTable,
    char_budget: int = 2000,
) -> str:
    """Deterministic selection prompt, truncated to the character budget.

    Features are summarized (norms only), never inlined.
    """
    if char_budget < 1:
        raise ValueError("char_budget must be >= 1")
    meta_parts = []
    for name in sorted(record.metadata):
        value = record.metadata[name]
        if isinstance(value, float):
            meta_parts.append(f"{name}={value:.4f}")
        else:
            meta_parts.append(f"{name}={value}")
    row_norms = np.linalg.norm(np.asarray(record.features, dtype=np.float64), axis=1)
    perf_lines = []
    scored = sorted(
        ((table.auc(cohort, m), m) for m in table.applicable_models(cohort)),
        key=lambda pair: (-pair[0], pair[1]),
    )
    for auc, model in scored:
        perf_lines.append(f"  {model}: historical AUC {auc:.3f}")
    prompt = "\n".join(
        [
            f"Task: {query_text}",
            "Patient profile:",
            f"  metadata: {'; '.join(meta_parts) if meta_parts else '(none)'}",
            f"  timepoints: {record.timepoints}",
            "  feature row norms: "
            + ", ".join(f"{x:.4f}" for x in row_norms),
            f"Assigned reference cohort: {cohort}",
            f"Candidate models for {cohort} (best first):",
            *perf_lines,
            "Reply with the name of the single most suitable model.",
        ]
    )
    return prompt[:char_budget]


def parse_model_reply(reply: str, registry: ModelRegistry) -> str | None:
    """Extract the first registered model name mentioned in the reply.

    Matching is exact and word-bounded so 'DLS' does not match inside 'DLSTM';
    at equal positions the longer id wins. Returns None when no registered
    name appears.
    """
    best: tuple[int, int, str] | None = None
    for model_id in registry.ids():
        pattern = r"(?<![A-Za-z0-9_])" + re.escape(model_id) + r"(?![A-Za-z0-9_])"
        match = re.search(pattern, reply)
        if match is None:
            continue
        key = (match.start(), -len(model_id), model_id)
        if best is None or key < best:
            best = key
    return best[2] if best else None


@dataclass(frozen=True)
class RuleBackend:
    """Deterministic argmax selection; the default."""

    kind: str = "rule"


@dataclass(frozen=True)
class LlmBackend:
    """Generic text-completion endpoint descriptor.

    The wire format is POST {"model", "prompt", "temperature"} returning a
    JSON object with a "text" field. completion_fn overrides the transport
    (used by tests); max_in_flight bounds concurrent calls for batch drivers.
    When fallback is False an unreachable endpoint raises instead of falling
    back (the service maps that to 503).
    """

    url: str
    model: str = ""
    temperature: float = 0.0
    timeout_s: float = 10.0
    retries: int = 2
    max_in_flight: int = 4
    fallback: bool = True
    completion_fn: Callable[[str], str] | None = field(
        default=None, repr=False, compare=False
    )
    kind: str = "llm"

    def complete(self, prompt: str) -> str:
        if self.completion_fn is not None:
            return self.completion_fn(prompt)
        payload = {"model": self.model, "prompt": prompt, "temperature": self.temperature}
        body = json.dumps(payload).encode("utf-8")
        last: Exception | None = None
        for attempt in range(self.retries + 1):
            try:
                req = urllib.request.Request(
                    self.url,
                    data=body,
                    headers={"Content-Type": "application/json"},
                    method="POST",
                )
                with urllib.request.urlopen(req, timeout=self.timeout_s) as resp:
                    reply = json.loads(resp.read().decode("utf-8"))
                if isinstance(reply, dict) and isinstance(reply.get("text"), str):
                    return reply["text"]
                raise ValueError(f"completion reply missing text field: {reply!r}")
            except (urllib.error.URLError, OSError, ValueError) as exc:
                last = exc
                if attempt < self.retries:
                    time.sleep(min(0.1 * (attempt + 1), 0.5))
        raise LlmUnavailableError(
            f"completion endpoint {self.url} failed after {self.retries + 1} attempts: {last}"
        )


Backend = RuleBackend | LlmBackend


def select_model(
    backend: Backend,
    query_text: str,
    record: PatientRecord,
    cohort: str,
    table: PerformanceTable,
    registry: ModelRegistry,
) -> SelectionDecision:
    """Select a model for the record's assigned cohort via the given backend.

    The returned model is always registered and applicable: an LLM reply that
    is unparseable, names an unknown model, or names an inapplicable one falls
    back to the deterministic rule, and the decision records that fallback.
    """
    if isinstance(backend, RuleBackend):
        return best_model(table, cohort, registry, record)

    reason: str
    try:
        reply = backend.complete(render_prompt(query_text, record, cohort, table))
    except LlmUnavailableError:
        if not backend.fallback:
            raise
        reply = None
        reason = "endpoint unreachable"
    if reply is not None:
        name = parse_model_reply(reply, registry)
        if name is None:
            reason = "reply names no registered model"
        else:
            entry = table.entry(cohort, name)
            if entry is None or not entry.applicable:
                reason = f"reply names {name!r}, not applicable for cohort {cohort!r}"
            else:
                problems = requirement_problems(registry.get(name), record)
                if problems:
                    reason = f"reply names {name!r}, record fails: {'; '.join(problems)}"
                else:
                    return SelectionDecision(
                        model=name,
                        cohort=cohort,
                        backend="llm",
                        rationale=f"endpoint selected {name!r}",
                    )
    fallback = best_model(table, cohort, registry, record)
    return SelectionDecision(
        model=fallback.model,
        cohort=cohort,
        backend="rule",
        rationale=f"fallback ({reason}); {fallback.rationale}",
        fell_back=True,
    )
