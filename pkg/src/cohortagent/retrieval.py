"""Stage one of the agent: cohort assignment by majority vote over neighbors."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

from .core import DEFAULT_K, PatientRecord
from .fusion import EncodingStats, FusionConfig, fuse
from .vindex import Neighbor, VectorIndex


@dataclass(frozen=True)
class CohortAssignment:
    """Vote outcome: winning cohort, the full histogram, and the evidence."""

    cohort: str
    vote_counts: dict[str, int]
    neighbors: tuple[Neighbor, ...]
    tie_broken: bool


def majority_vote(neighbors: list[Neighbor]) -> CohortAssignment:
    """Assign the modal cohort among the neighbors.

    A tie between cohorts is broken in favor of the tied cohort containing the
    single nearest neighbor (smallest distance, then insertion order); the
    neighbor list is already sorted that way by the index.
    """
    if not neighbors:
        raise ValueError("majority vote over an empty neighbor set")
    counts = Counter(n.cohort for n in neighbors)
    top = max(counts.values())
    tied = [c for c, v in counts.items() if v == top]
    if len(tied) == 1:
        return CohortAssignment(tied[0], dict(counts), tuple(neighbors), False)
    winner = next(n.cohort for n in neighbors if n.cohort in tied)
    return CohortAssignment(winner, dict(counts), tuple(neighbors), True)


def retrieve_cohort(
    index: VectorIndex,
    record: PatientRecord,
    stats: EncodingStats,
    config: FusionConfig,
    k: int = DEFAULT_K,
) -> CohortAssignment:
    """Fuse the record, search the index, and vote."""
    return majority_vote(index.search(fuse(record, stats, config), k))
