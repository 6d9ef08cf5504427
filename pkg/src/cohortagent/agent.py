"""The assembled two-stage agent: retrieve a cohort, pick a model, score.

CLI predict and the HTTP service both call predict_record on the same runtime
bundle, which is what makes their outputs bit-identical for the same patient
and configuration.
"""

from __future__ import annotations

from dataclasses import dataclass

from .core import DEFAULT_K, PatientRecord, RiskPrediction
from .dataio import load_encoding_stats, read_records
from .evaluation import DEFAULT_QUERY_TEXT
from .fusion import EncodingStats, FusionConfig
from .models import ModelRegistry, PredictionOutput, load_specs, predict
from .policy import (
    Backend,
    PerformanceTable,
    RuleBackend,
    SelectionDecision,
    select_model,
)
from .retrieval import CohortAssignment, retrieve_cohort
from .vindex import VectorIndex, load as load_index


@dataclass
class AgentRuntime:
    """Everything the agent needs at prediction time (read-only after setup)."""

    stats: EncodingStats
    fusion_config: FusionConfig
    index: VectorIndex
    registry: ModelRegistry
    table: PerformanceTable
    backend: Backend
    k: int = DEFAULT_K
    query_text: str = DEFAULT_QUERY_TEXT


@dataclass(frozen=True)
class AgentPrediction:
    """Full trace of one agent run: final risk plus both stage outcomes."""

    risk: RiskPrediction
    assignment: CohortAssignment
    decision: SelectionDecision
    output: PredictionOutput


def predict_record(
    runtime: AgentRuntime, record: PatientRecord, k: int | None = None
) -> AgentPrediction:
    """Run both agent stages for one record."""
    assignment = retrieve_cohort(
        runtime.index,
        record,
        runtime.stats,
        runtime.fusion_config,
        k if k is not None else runtime.k,
    )
    decision = select_model(
        runtime.backend,
        runtime.query_text,
        record,
        assignment.cohort,
        runtime.table,
        runtime.registry,
    )
    output = predict(runtime.registry.get(decision.model), record)
    risk = RiskPrediction(
        probability=output.probability,
        model=decision.model,
        cohort=assignment.cohort,
        neighbor_ids=tuple(n.patient_id for n in assignment.neighbors),
    )
    return AgentPrediction(
        risk=risk, assignment=assignment, decision=decision, output=output
    )


def runtime_from_paths(
    records_path: str,
    features_path: str,
    index_path: str,
    stats_path: str,
    models_path: str,
    table_path: str,
    fusion_config: FusionConfig = FusionConfig(),
    backend: Backend | None = None,
    k: int = DEFAULT_K,
    lenient: bool = False,
) -> tuple[AgentRuntime, list[PatientRecord]]:
    """Load a ready-to-serve runtime plus the record store backing feature_refs."""
    records = read_records(records_path, features_path, lenient=lenient)
    runtime = AgentRuntime(
        stats=load_encoding_stats(stats_path),
        fusion_config=fusion_config,
        index=load_index(index_path),
        registry=ModelRegistry(load_specs(models_path)),
        table=PerformanceTable.from_csv(table_path),
        backend=backend if backend is not None else RuleBackend(),
        k=k,
    )
    return runtime, records
