"""Cohort-aware model routing for individualized risk prediction.

A two-stage agent: fuse patient metadata with pooled imaging features,
retrieve the most similar reference cohort by exact nearest-neighbor
majority vote, then route the patient to the model with the best recorded
performance on that cohort.
"""

from .core import (
    DEFAULT_FEATURE_WEIGHT,
    DEFAULT_HOLDOUT_FRACTION,
    DEFAULT_K,
    DEFAULT_SEED,
    FEATURE_COLS,
    FEATURE_ROWS,
    REFERENCE_COHORTS,
    REFERENCE_MODEL_AUCS,
    REFERENCE_MODELS,
    AdapterUnavailableError,
    CohortAgentError,
    FieldSpec,
    IndexFormatError,
    LlmUnavailableError,
    MetadataSchema,
    ModelNotApplicableError,
    NoApplicableModelError,
    PatientRecord,
    RecordValidationError,
    RiskPrediction,
    record_errors,
    validate_record,
)
from .fusion import (
    FLATTENED,
    POOLED,
    EncodingStats,
    FusionConfig,
    UnknownCategoryWarning,
    encode_metadata,
    fit_encoding,
    flatten_features,
    fuse,
    fused_dim,
    pool_features,
)
from .vindex import COSINE, L2, Neighbor, VectorIndex, load as load_index
from .retrieval import CohortAssignment, majority_vote, retrieve_cohort
from .models import (
    ModelRegistry,
    ModelSpec,
    PredictionOutput,
    Requirements,
    binormal_mu,
    binormal_scores,
    builtin_logistic_specs,
    load_specs,
    logistic_risk,
    predict,
    save_specs,
    sigmoid,
)
from .policy import (
    Backend,
    LlmBackend,
    PerfEntry,
    PerformanceTable,
    RuleBackend,
    SelectionDecision,
    best_model,
    parse_model_reply,
    reference_performance_table,
    render_prompt,
    select_model,
)
from .evaluation import (
    ConfusionMatrix,
    DeltaAucCI,
    SplitSpec,
    Strategy,
    StrategyReport,
    auc,
    bootstrap_delta_auc,
    confusion,
    overall_auc_ci,
    parse_strategy,
    retrieval_assignments,
    retrieval_configuration_rows,
    run_strategy,
    split,
)
from .models import requirement_problems
from .synth import (
    REFERENCE_SIZES,
    CohortSpec,
    SyntheticDataset,
    generate,
    reference_cohort_specs,
    reference_registry,
    separability_specs,
    stub_registry,
)
from .agent import AgentPrediction, AgentRuntime, predict_record, runtime_from_paths
from . import dataio, service

__version__ = "0.1.0"

__all__ = [
    "AdapterUnavailableError",
    "AgentPrediction",
    "AgentRuntime",
    "Backend",
    "CohortAgentError",
    "CohortAssignment",
    "CohortSpec",
    "ConfusionMatrix",
    "COSINE",
    "DEFAULT_FEATURE_WEIGHT",
    "DEFAULT_HOLDOUT_FRACTION",
    "DEFAULT_K",
    "DEFAULT_SEED",
    "DeltaAucCI",
    "EncodingStats",
    "FEATURE_COLS",
    "FEATURE_ROWS",
    "FieldSpec",
    "FLATTENED",
    "FusionConfig",
    "IndexFormatError",
    "L2",
    "LlmBackend",
    "LlmUnavailableError",
    "MetadataSchema",
    "ModelNotApplicableError",
    "ModelRegistry",
    "ModelSpec",
    "Neighbor",
    "NoApplicableModelError",
    "PatientRecord",
    "PerfEntry",
    "PerformanceTable",
    "POOLED",
    "PredictionOutput",
    "RecordValidationError",
    "REFERENCE_COHORTS",
    "REFERENCE_MODEL_AUCS",
    "REFERENCE_MODELS",
    "Requirements",
    "RiskPrediction",
    "RuleBackend",
    "SelectionDecision",
    "SplitSpec",
    "Strategy",
    "StrategyReport",
    "SyntheticDataset",
    "UnknownCategoryWarning",
    "VectorIndex",
    "auc",
    "best_model",
    "binormal_mu",
    "binormal_scores",
    "bootstrap_delta_auc",
    "builtin_logistic_specs",
    "confusion",
    "dataio",
    "encode_metadata",
    "fit_encoding",
    "flatten_features",
    "fuse",
    "fused_dim",
    "generate",
    "load_index",
    "load_specs",
    "logistic_risk",
    "majority_vote",
    "overall_auc_ci",
    "parse_model_reply",
    "parse_strategy",
    "pool_features",
    "predict",
    "predict_record",
    "record_errors",
    "reference_cohort_specs",
    "REFERENCE_SIZES",
    "reference_performance_table",
    "reference_registry",
    "render_prompt",
    "requirement_problems",
    "retrieval_assignments",
    "retrieval_configuration_rows",
    "retrieve_cohort",
    "run_strategy",
    "runtime_from_paths",
    "save_specs",
    "select_model",
    "separability_specs",
    "service",
    "sigmoid",
    "split",
    "stub_registry",
    "validate_record",
]
