"""Exact flat nearest-neighbor index over fused vectors, with binary persistence.

Vectors are quantized to float32 when the index is built (the precision of the
file format), and all distances are computed and compared in float64 over the
stored values. Ties are broken by insertion order. Cosine distance is
1 - cosine similarity, computed as an inner product over L2-normalized copies
prepared at build time; queries are normalized per search.
"""

from __future__ import annotations

import struct
from typing import Iterable, NamedTuple

import numpy as np

from .core import IndexFormatError

L2 = "l2"
COSINE = "cosine"
METRICS = (L2, COSINE)

_MAGIC = b"CAVI"
_VERSION = 1
_HEADER = struct.Struct("<4sIBII")
_U16 = struct.Struct("<H")
_METRIC_CODE = {L2: 0, COSINE: 1}
_METRIC_NAME = {code: name for name, code in _METRIC_CODE.items()}


class Neighbor(NamedTuple):
    patient_id: str
    cohort: str
    distance: float


class VectorIndex:
    """Immutable exact-search index; build once, search many times."""

    def __init__(
        self,
        vectors: np.ndarray,
        patient_ids: tuple[str, ...],
        cohorts: tuple[str, ...],
        metric: str,
    ):
        if metric not in METRICS:
            raise ValueError(f"unknown metric {metric!r}")
        vectors = np.ascontiguousarray(vectors, dtype=np.float32)
        if vectors.ndim != 2 or vectors.shape[0] == 0 or vectors.shape[1] == 0:
            raise ValueError("index requires a non-empty 2-D vector array")
        if not (len(patient_ids) == len(cohorts) == vectors.shape[0]):
            raise ValueError("vectors, patient_ids, and cohorts disagree in length")
        if not np.isfinite(vectors).all():
            raise ValueError("non-finite vector component")
        self._metric = metric
        self._vectors = vectors
        self._patient_ids = tuple(patient_ids)
        self._cohorts = tuple(cohorts)
        self._x64 = vectors.astype(np.float64)
        if metric == COSINE:
            norms = np.linalg.norm(self._x64, axis=1)
            zero = np.flatnonzero(norms == 0.0)
            if zero.size:
                raise ValueError(
                    f"zero norm vector at position {int(zero[0])} "
                    f"({self._patient_ids[int(zero[0])]!r}) cannot be indexed under cosine"
                )
            self._unit = self._x64 / norms[:, None]
        else:
            self._unit = None
        for arr in (self._vectors, self._x64, self._unit):
            if arr is not None:
                arr.setflags(write=False)

    @classmethod
    def build(
        cls, entries: Iterable[tuple[np.ndarray, str, str]], metric: str
    ) -> "VectorIndex":
        """Build from (vector, cohort, patient_id) entries; order is preserved."""
        entries = list(entries)
        if not entries:
            raise ValueError("cannot build an index from zero entries")
        vecs, cohorts, ids = [], [], []
        dim = None
        for vector, cohort, patient_id in entries:
            v = np.asarray(vector, dtype=np.float64).ravel()
            if dim is None:
                dim = v.size
            elif v.size != dim:
                raise ValueError(
                    f"dimension mismatch: entry {patient_id!r} has {v.size}, expected {dim}"
                )
            vecs.append(v)
            cohorts.append(str(cohort))
            ids.append(str(patient_id))
        matrix = np.asarray(vecs, dtype=np.float32)
        return cls(matrix, tuple(ids), tuple(cohorts), metric)

    @property
    def metric(self) -> str:
        return self._metric

    @property
    def size(self) -> int:
        return self._vectors.shape[0]

    @property
    def dimension(self) -> int:
        return self._vectors.shape[1]

    @property
    def vectors(self) -> np.ndarray:
        """Stored float32 vectors (read-only view)."""
        return self._vectors

    @property
    def patient_ids(self) -> tuple[str, ...]:
        return self._patient_ids

    @property
    def cohorts(self) -> tuple[str, ...]:
        return self._cohorts

    def _distances(self, query: np.ndarray) -> np.ndarray:
        q = np.asarray(query, dtype=np.float64).ravel()
        if q.size != self.dimension:
            raise ValueError(
                f"dimension mismatch: query has {q.size}, index has {self.dimension}"
            )
        if not np.isfinite(q).all():
            raise ValueError("non-finite query component")
        if self._metric == L2:
            diff = self._x64 - q
            return np.sqrt(np.einsum("ij,ij->i", diff, diff))
        norm = np.linalg.norm(q)
        if norm == 0.0:
            raise ValueError("zero norm query has no cosine distance")
        return 1.0 - self._unit @ (q / norm)

    def search(self, query: np.ndarray, k: int) -> list[Neighbor]:
        """Exact top-k by ascending distance; ties resolve by insertion order.

        k larger than the index size returns all entries.
        """
        if not isinstance(k, int) or isinstance(k, bool) or k < 1:
            raise ValueError(f"k must be an integer >= 1, got {k!r}")
        dist = self._distances(query)
        order = np.argsort(dist, kind="stable")[: min(k, self.size)]
        return [
            Neighbor(self._patient_ids[i], self._cohorts[i], float(dist[i]))
            for i in order
        ]

    def search_batch(self, queries: Iterable[np.ndarray], k: int) -> list[list[Neighbor]]:
        """Search many queries; results are returned in input order."""
        return [self.search(q, k) for q in queries]

    def save(self, path: str) -> None:
        """Write the canonical binary form (load + save is byte-identical)."""
        parts = [
            _HEADER.pack(
                _MAGIC, _VERSION, _METRIC_CODE[self._metric], self.dimension, self.size
            )
        ]
        for i in range(self.size):
            for text in (self._patient_ids[i], self._cohorts[i]):
                raw = text.encode("utf-8")
                if len(raw) > 0xFFFF:
                    raise ValueError(f"string field too long to serialize: {text[:32]!r}...")
                parts.append(_U16.pack(len(raw)))
                parts.append(raw)
            parts.append(self._vectors[i].astype("<f4").tobytes())
        with open(path, "wb") as fh:
            fh.write(b"".join(parts))


def load(path: str) -> VectorIndex:
    """Load an index file, validating magic, version, and payload length."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise IndexFormatError("corrupt header: file shorter than the fixed header")
    magic, version, metric_code, dim, count = _HEADER.unpack_from(blob, 0)
    if magic != _MAGIC:
        raise IndexFormatError(f"corrupt header: bad magic {magic!r}")
    if version != _VERSION:
        raise IndexFormatError(f"unsupported version {version}")
    if metric_code not in _METRIC_NAME:
        raise IndexFormatError(f"corrupt header: unknown metric code {metric_code}")
    if dim == 0 or count == 0:
        raise IndexFormatError("corrupt header: zero dimension or count")
    offset = _HEADER.size
    ids, cohorts = [], []
    vectors = np.empty((count, dim), dtype=np.float32)
    vec_bytes = dim * 4
    for i in range(count):
        strings = []
        for _ in range(2):
            if offset + _U16.size > len(blob):
                raise IndexFormatError("truncated payload")
            (length,) = _U16.unpack_from(blob, offset)
            offset += _U16.size
            if offset + length > len(blob):
                raise IndexFormatError("truncated payload")
            try:
                strings.append(blob[offset : offset + length].decode("utf-8"))
            except UnicodeDecodeError as exc:
                raise IndexFormatError(f"corrupt string field at entry {i}") from exc
            offset += length
        if offset + vec_bytes > len(blob):
            raise IndexFormatError("truncated payload")
        vectors[i] = np.frombuffer(blob, dtype="<f4", count=dim, offset=offset)
        offset += vec_bytes
        ids.append(strings[0])
        cohorts.append(strings[1])
    if offset != len(blob):
        raise IndexFormatError("trailing data after the declared entry count")
    return VectorIndex(vectors, tuple(ids), tuple(cohorts), _METRIC_NAME[metric_code])
