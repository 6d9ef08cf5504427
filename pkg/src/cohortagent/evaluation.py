"""Evaluation harness: stratified split, AUC, confusion, routing strategies.

AUC is the Mann-Whitney statistic with midrank tie handling:
(sum over pairs of [s+ > s-] + 0.5 [s+ = s-]) / (n+ n-). Per-cohort results
are always grouped by the true cohort, never the assigned one. Cohort-level
bootstrap resamples cohorts with replacement; the patient-level bootstrap
resamples patients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import rankdata

from .core import (
    DEFAULT_HOLDOUT_FRACTION,
    DEFAULT_K,
    DEFAULT_SEED,
    PatientRecord,
)
from .fusion import EncodingStats, FusionConfig, fuse
from .models import ModelRegistry, predict, requirement_problems
from .policy import (
    Backend,
    PerformanceTable,
    RuleBackend,
    SelectionDecision,
    best_model,
    select_model,
)
from .retrieval import CohortAssignment, majority_vote
from .vindex import COSINE, L2, VectorIndex

DEFAULT_QUERY_TEXT = "Estimate the probability that this patient develops lung cancer."

SINGLE = "single"
PER_COHORT_BEST = "per_cohort_best"
RETRIEVAL = "retrieval"


@dataclass(frozen=True)
class SplitSpec:
    """Deterministic stratified-per-cohort holdout split."""

    holdout_fraction: float = DEFAULT_HOLDOUT_FRACTION
    seed: int = DEFAULT_SEED

    def __post_init__(self) -> None:
        if not 0.0 < self.holdout_fraction < 1.0:
            raise ValueError("holdout_fraction must be in (0, 1)")


def split(
    records: Sequence[PatientRecord], spec: SplitSpec = SplitSpec()
) -> tuple[list[PatientRecord], list[PatientRecord]]:
    """Partition records into (database, holdout), stratified per cohort.

    Every cohort lands in both partitions; a cohort with fewer than two
    patients is an error. Deterministic for a given seed and input order.
    """
    by_cohort: dict[str, list[int]] = {}
    for i, rec in enumerate(records):
        by_cohort.setdefault(rec.cohort, []).append(i)
    rng = np.random.default_rng(spec.seed)
    holdout_idx: set[int] = set()
    for cohort in sorted(by_cohort):
        idx = by_cohort[cohort]
        n = len(idx)
        if n < 2:
            raise ValueError(
                f"cohort {cohort!r} has {n} patient(s); cannot appear in both partitions"
            )
        h = min(max(1, round(spec.holdout_fraction * n)), n - 1)
        perm = rng.permutation(n)
        holdout_idx.update(idx[j] for j in perm[:h])
    database = [rec for i, rec in enumerate(records) if i not in holdout_idx]
    holdout = [rec for i, rec in enumerate(records) if i in holdout_idx]
    return database, holdout


def auc(scores: Iterable[float], labels: Iterable[int]) -> float:
    """Mann-Whitney AUC with midrank ties; single-class input is undefined."""
    s = np.asarray(list(scores), dtype=np.float64)
    y = np.asarray(list(labels))
    if s.shape != y.shape:
        raise ValueError("scores and labels disagree in length")
    if s.size == 0:
        raise ValueError("AUC undefined: empty input")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC undefined: single-class input")
    ranks = rankdata(s, method="average")
    pos_rank_sum = float(ranks[y == 1].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


@dataclass(frozen=True)
class ConfusionMatrix:
    """Cohort retrieval confusion: rows are true cohorts, columns assigned."""

    cohorts: tuple[str, ...]
    counts: np.ndarray

    def __post_init__(self) -> None:
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.shape != (len(self.cohorts), len(self.cohorts)):
            raise ValueError("confusion counts are not square over the cohort order")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def row_total(self, cohort: str) -> int:
        return int(self.counts[self.cohorts.index(cohort)].sum())

    def accuracy(self, cohort: str) -> float:
        i = self.cohorts.index(cohort)
        total = int(self.counts[i].sum())
        if total == 0:
            raise ValueError(f"no rows for cohort {cohort!r}")
        return float(self.counts[i, i]) / total

    @property
    def overall_accuracy(self) -> float:
        return float(np.trace(self.counts)) / self.total

    def format(self) -> str:
        width = max(len(c) for c in self.cohorts)
        lines = [" " * (width + 2) + "  ".join(f"{c:>{width}}" for c in self.cohorts)]
        for i, cohort in enumerate(self.cohorts):
            row = "  ".join(f"{int(v):>{width}}" for v in self.counts[i])
            lines.append(f"{cohort:>{width}}  {row}")
        correct = int(np.trace(self.counts))
        lines.append(
            f"overall: {correct} / {self.total} ({self.overall_accuracy:.3f})"
        )
        return "\n".join(lines)


def confusion(
    pairs: Iterable[tuple[str, str]], cohort_order: Sequence[str] | None = None
) -> ConfusionMatrix:
    """Count (true, assigned) cohort pairs into a square matrix."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("confusion over zero assignments")
    if cohort_order is None:
        seen = {c for pair in pairs for c in pair}
        cohort_order = sorted(seen)
    order = tuple(cohort_order)
    pos = {c: i for i, c in enumerate(order)}
    counts = np.zeros((len(order), len(order)), dtype=np.int64)
    for true, assigned in pairs:
        if true not in pos or assigned not in pos:
            raise ValueError(f"cohort pair ({true!r}, {assigned!r}) outside the order")
        counts[pos[true], pos[assigned]] += 1
    return ConfusionMatrix(cohorts=order, counts=counts)


@dataclass(frozen=True)
class Strategy:
    """A routing strategy: a fixed single model, the oracle, or retrieval."""

    kind: str
    model: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in (SINGLE, PER_COHORT_BEST, RETRIEVAL):
            raise ValueError(f"unknown strategy kind {self.kind!r}")
        if self.kind == SINGLE and not self.model:
            raise ValueError("single strategy needs a model id")
        if self.kind != SINGLE and self.model is not None:
            raise ValueError(f"{self.kind} strategy takes no model id")

    @property
    def label(self) -> str:
        return f"single_{self.model}" if self.kind == SINGLE else self.kind


def parse_strategy(text: str) -> Strategy:
    """Parse CLI strategy syntax: 'retrieval', 'per_cohort_best', 'single:ID'."""
    if text == RETRIEVAL:
        return Strategy(RETRIEVAL)
    if text == PER_COHORT_BEST:
        return Strategy(PER_COHORT_BEST)
    if text.startswith("single:"):
        return Strategy(SINGLE, model=text.split(":", 1)[1])
    raise ValueError(
        f"unknown strategy {text!r}; expected retrieval, per_cohort_best, or single:MODEL"
    )


@dataclass(frozen=True)
class PatientOutcome:
    patient_id: str
    true_cohort: str
    assigned_cohort: str | None
    model: str
    score: float
    label: int
    wall_time: float


@dataclass(frozen=True)
class CohortResult:
    auc: float  # nan when the cohort's holdout is single-class
    wall_time: float
    n: int
    n_pos: int


@dataclass(frozen=True)
class StrategyReport:
    """Everything measured for one routing strategy on one holdout."""

    strategy: str
    per_cohort: dict[str, CohortResult]
    overall_auc: float
    overall_time: float
    outcomes: tuple[PatientOutcome, ...]
    confusion: ConfusionMatrix | None = None
    fallback_count: int = 0
    config: dict = field(default_factory=dict)


def _decide(
    strategy: Strategy,
    record: PatientRecord,
    assignment: CohortAssignment | None,
    registry: ModelRegistry,
    table: PerformanceTable,
    backend: Backend,
    query_text: str,
) -> tuple[SelectionDecision, bool]:
    """Pick the model for one record; the flag marks a next-best substitution."""
    if strategy.kind == SINGLE:
        spec = registry.get(strategy.model)
        if not requirement_problems(spec, record):
            decision = SelectionDecision(
                model=strategy.model,
                cohort=record.cohort,
                backend="rule",
                rationale="fixed single-model strategy",
            )
            return decision, False
        # record cannot feed the fixed model: score with the true cohort's
        # next-best applicable model and flag it for the report footnote
        return best_model(table, record.cohort, registry, record), True
    if strategy.kind == PER_COHORT_BEST:
        decision = best_model(table, record.cohort, registry, record)
    else:
        decision = select_model(
            backend, query_text, record, assignment.cohort, table, registry
        )
    ideal = best_model(table, decision.cohort, registry).model
    return decision, decision.model != ideal


def run_strategy(
    strategy: Strategy,
    database: Sequence[PatientRecord],
    holdout: Sequence[PatientRecord],
    registry: ModelRegistry,
    table: PerformanceTable,
    stats: EncodingStats | None = None,
    fusion_config: FusionConfig = FusionConfig(),
    k: int = DEFAULT_K,
    metric: str = COSINE,
    backend: Backend | None = None,
    query_text: str = DEFAULT_QUERY_TEXT,
) -> StrategyReport:
    """Score every holdout patient under one routing strategy.

    Encoding statistics are fitted on the database unless supplied. Per-cohort
    results group by the true cohort; a single-class cohort reports AUC nan.
    The index is built (and the confusion matrix reported) only for the
    retrieval strategy.
    """
    if not holdout:
        raise ValueError("empty holdout")
    backend = backend if backend is not None else RuleBackend()
    index = None
    if strategy.kind == RETRIEVAL:
        if not database:
            raise ValueError("retrieval strategy needs a non-empty database")
        if stats is None:
            raise ValueError(
                "retrieval strategy needs encoding stats fitted on the database"
            )
        index = VectorIndex.build(
            [
                (fuse(rec, stats, fusion_config), rec.cohort, rec.patient_id)
                for rec in database
            ],
            metric,
        )

    outcomes: list[PatientOutcome] = []
    pairs: list[tuple[str, str]] = []
    fallback_count = 0
    for record in holdout:
        assignment = None
        if index is not None:
            assignment = majority_vote(index.search(fuse(record, stats, fusion_config), k))
            pairs.append((record.cohort, assignment.cohort))
        decision, substituted = _decide(
            strategy, record, assignment, registry, table, backend, query_text
        )
        if substituted:
            fallback_count += 1
        output = predict(registry.get(decision.model), record)
        outcomes.append(
            PatientOutcome(
                patient_id=record.patient_id,
                true_cohort=record.cohort,
                assigned_cohort=assignment.cohort if assignment else None,
                model=decision.model,
                score=output.probability,
                label=record.label,
                wall_time=output.wall_time,
            )
        )

    per_cohort: dict[str, CohortResult] = {}
    for cohort in sorted({o.true_cohort for o in outcomes}):
        group = [o for o in outcomes if o.true_cohort == cohort]
        labels = [o.label for o in group]
        n_pos = sum(labels)
        if 0 < n_pos < len(group):
            cohort_auc = auc([o.score for o in group], labels)
        else:
            cohort_auc = math.nan
        per_cohort[cohort] = CohortResult(
            auc=cohort_auc,
            wall_time=sum(o.wall_time for o in group),
            n=len(group),
            n_pos=n_pos,
        )

    overall = auc([o.score for o in outcomes], [o.label for o in outcomes])
    cm = confusion(pairs) if pairs else None
    return StrategyReport(
        strategy=strategy.label,
        per_cohort=per_cohort,
        overall_auc=overall,
        overall_time=sum(o.wall_time for o in outcomes),
        outcomes=tuple(outcomes),
        confusion=cm,
        fallback_count=fallback_count,
        config={
            "k": k,
            "metric": metric,
            "aggregation": fusion_config.aggregation,
            "feature_weight": fusion_config.feature_weight,
            "backend": getattr(backend, "kind", "rule"),
        },
    )


@dataclass(frozen=True)
class DeltaAucCI:
    mean_delta: float
    low: float
    high: float
    n_resamples: int
    level: float


def bootstrap_delta_auc(
    report_a: StrategyReport,
    report_b: StrategyReport,
    n_resamples: int = 1000,
    level: float = 0.95,
    seed: int = DEFAULT_SEED,
) -> DeltaAucCI:
    """Cohort-level bootstrap of the per-cohort AUC difference (a minus b).

    Cohorts are resampled with replacement; the percentile interval of the
    resampled mean difference is returned. Cohorts with an undefined AUC in
    either report are excluded; fewer than two usable cohorts is an error.
    """
    if not 0.0 < level < 1.0:
        raise ValueError("level must be in (0, 1)")
    if n_resamples < 1:
        raise ValueError("n_resamples must be >= 1")
    common = [
        c
        for c in report_a.per_cohort
        if c in report_b.per_cohort
        and math.isfinite(report_a.per_cohort[c].auc)
        and math.isfinite(report_b.per_cohort[c].auc)
    ]
    if len(common) < 2:
        raise ValueError(f"need >= 2 comparable cohorts, have {len(common)}")
    deltas = np.asarray(
        [report_a.per_cohort[c].auc - report_b.per_cohort[c].auc for c in sorted(common)]
    )
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, deltas.size, size=(n_resamples, deltas.size))
    means = deltas[idx].mean(axis=1)
    alpha = (1.0 - level) / 2.0
    low, high = np.quantile(means, [alpha, 1.0 - alpha])
    return DeltaAucCI(
        mean_delta=float(deltas.mean()),
        low=float(low),
        high=float(high),
        n_resamples=n_resamples,
        level=level,
    )


def overall_auc_ci(
    report: StrategyReport,
    level: float = 0.975,
    n_resamples: int = 1000,
    seed: int = DEFAULT_SEED,
) -> tuple[float, float]:
    """Patient-level percentile bootstrap of the pooled AUC.

    Single-class resamples are redrawn, at most ten attempts each.
    """
    if not 0.0 < level < 1.0:
        raise ValueError("level must be in (0, 1)")
    scores = np.asarray([o.score for o in report.outcomes])
    labels = np.asarray([o.label for o in report.outcomes])
    n = scores.size
    rng = np.random.default_rng(seed)
    aucs = np.empty(n_resamples)
    for i in range(n_resamples):
        for attempt in range(10):
            idx = rng.integers(0, n, size=n)
            picked = labels[idx]
            if 0 < picked.sum() < n:
                aucs[i] = auc(scores[idx], picked)
                break
        else:
            raise ValueError("bootstrap resample stayed single-class after 10 attempts")
    alpha = (1.0 - level) / 2.0
    low, high = np.quantile(aucs, [alpha, 1.0 - alpha])
    return float(low), float(high)


def retrieval_assignments(
    database: Sequence[PatientRecord],
    holdout: Sequence[PatientRecord],
    stats: EncodingStats,
    fusion_config: FusionConfig,
    metric: str,
    k: int = DEFAULT_K,
) -> list[tuple[str, str]]:
    """(true, assigned) cohort pairs for one retrieval configuration."""
    index = VectorIndex.build(
        [(fuse(r, stats, fusion_config), r.cohort, r.patient_id) for r in database],
        metric,
    )
    pairs = []
    for record in holdout:
        assignment = majority_vote(index.search(fuse(record, stats, fusion_config), k))
        pairs.append((record.cohort, assignment.cohort))
    return pairs


def retrieval_configuration_rows(
    database: Sequence[PatientRecord],
    holdout: Sequence[PatientRecord],
    stats: EncodingStats,
    k: int = DEFAULT_K,
    feature_weight: float | None = None,
) -> list[dict]:
    """Top-1 cohort accuracy across the four standard retrieval configurations.

    Rows: metadata only (zero feature weight) under L2, metadata + flattened
    features under L2, metadata + pooled features under L2 and under cosine.
    """
    from .core import DEFAULT_FEATURE_WEIGHT
    from .fusion import FLATTENED, POOLED

    w = DEFAULT_FEATURE_WEIGHT if feature_weight is None else feature_weight
    configs = [
        ("metadata_only", FusionConfig(aggregation=POOLED, feature_weight=0.0), L2),
        ("metadata+flattened", FusionConfig(aggregation=FLATTENED, feature_weight=w), L2),
        ("metadata+pooled", FusionConfig(aggregation=POOLED, feature_weight=w), L2),
        ("metadata+pooled", FusionConfig(aggregation=POOLED, feature_weight=w), COSINE),
    ]
    rows = []
    for label, config, metric in configs:
        pairs = retrieval_assignments(database, holdout, stats, config, metric, k)
        correct = sum(1 for true, assigned in pairs if true == assigned)
        rows.append(
            {
                "input": label,
                "aggregation": config.aggregation if config.feature_weight > 0 else None,
                "metric": metric,
                "accuracy": correct / len(pairs),
                "n": len(pairs),
            }
        )
    return rows
