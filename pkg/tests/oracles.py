"""Independent reference implementations used to cross-check the package.

These deliberately avoid the package's code paths: nearest neighbors come from
a full stable sort over distances computed with a different float formulation,
and AUC comes from explicit pairwise counting. Tests freeze expectations
against these, so keep them dumb and obvious.
"""

from __future__ import annotations

import numpy as np


def brute_force_knn(
    raw_vectors: np.ndarray, query: np.ndarray, metric: str, k: int
) -> list[tuple[int, float]]:
    """Exhaustive top-k scan over the full candidate list.

    Vectors are quantized to float32 first (mirroring what an index stores),
    then distances run in float64: L2 as the norm of the difference, cosine as
    1 - dot / (|v| |q|) without pre-normalizing the matrix. Returns
    [(index, distance)] sorted by (distance, insertion order), length
    min(k, n).
    """
    x = np.asarray(raw_vectors, dtype=np.float32).astype(np.float64)
    q = np.asarray(query, dtype=np.float64).ravel()
    if metric == "l2":
        dist = np.linalg.norm(x - q, axis=1)
    elif metric == "cosine":
        dist = 1.0 - (x @ q) / (np.linalg.norm(x, axis=1) * np.linalg.norm(q))
    else:
        raise ValueError(f"unknown metric {metric!r}")
    order = np.argsort(dist, kind="stable")[: min(k, x.shape[0])]
    return [(int(i), float(dist[i])) for i in order]


def full_distance_ranking(
    raw_vectors: np.ndarray, query: np.ndarray, metric: str
) -> list[tuple[int, float]]:
    """The complete ranking (k = n)."""
    return brute_force_knn(raw_vectors, query, metric, int(np.asarray(raw_vectors).shape[0]))


def assert_knn_equivalent(
    impl: list[tuple[int, float]],
    ranking: list[tuple[int, float]],
    k: int,
    tol: float = 1e-9,
) -> None:
    """Check an implementation's top-k against the oracle's full ranking.

    Equality is exact on the id set and on the ascending-distance order,
    except inside tie groups: runs of oracle distances whose consecutive gaps
    are below tol may permute (the implementations compute distances with
    different floating-point groupings, so exact ties and sub-tol near-ties
    are the one place order is not comparable).
    """
    n = len(ranking)
    want = min(k, n)
    assert len(impl) == want, f"returned {len(impl)} neighbors, expected {want}"
    ids = [i for i, _ in impl]
    assert len(set(ids)) == len(ids), "duplicate ids in result"

    oracle_dist = {i: d for i, d in ranking}
    for i, d in impl:
        ref = oracle_dist[i]
        assert abs(d - ref) <= tol * (1.0 + abs(ref)), (
            f"distance for id {i}: impl {d!r} vs oracle {ref!r}"
        )
    dists = [d for _, d in impl]
    assert all(a <= b for a, b in zip(dists, dists[1:])), "distances not sorted"

    # Walk oracle tie groups in order; each group must be consumed as a set.
    pos = 0
    remaining = want
    group: list[int] = []
    grouped: list[list[int]] = []
    for j, (idx, d) in enumerate(ranking):
        if group and d - ranking[j - 1][1] > tol:
            grouped.append(group)
            group = []
        group.append(idx)
    grouped.append(group)
    for members in grouped:
        if remaining == 0:
            break
        take = min(len(members), remaining)
        got = set(ids[pos : pos + take])
        assert got <= set(members), (
            f"positions {pos}..{pos + take - 1} returned {sorted(got)}, "
            f"expected members of tie group {sorted(members)}"
        )
        if take == len(members):
            assert got == set(members), (
                f"tie group {sorted(members)} not fully returned: {sorted(got)}"
            )
        pos += take
        remaining -= take


def brute_force_auc(scores, labels) -> float:
    """Probability a positive outscores a negative, ties counted half."""
    s = np.asarray(list(scores), dtype=np.float64)
    y = np.asarray(list(labels))
    pos = s[y == 1]
    neg = s[y == 0]
    if pos.size == 0 or neg.size == 0:
        raise ValueError("single-class input")
    greater = np.sum(pos[:, None] > neg[None, :])
    equal = np.sum(pos[:, None] == neg[None, :])
    return float((greater + 0.5 * equal) / (pos.size * neg.size))
