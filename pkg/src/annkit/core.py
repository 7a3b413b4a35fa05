"""Vector types, distance kinds, the exact brute-force oracle, and metrics.

Every index family in this package is tested against :func:`brute_force_topk`,
so the conventions here (float32 storage, float64 accumulation, smaller-is-
better scores, ``(score, id)`` tie-breaking) are the ground truth for the
whole toolkit.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

__all__ = [
    "DistanceKind",
    "SparseVector",
    "Collection",
    "TopKResult",
    "dense_vector",
    "distance",
    "brute_force_topk",
    "recall",
    "epsilon_valid",
]


class DistanceKind(enum.Enum):
    """Distance flavors, all normalized so that smaller means more similar."""

    L2_SQUARED = "l2sq"
    ANGULAR = "angular"
    NEG_INNER_PRODUCT = "neg_ip"
    NEG_JACCARD = "neg_jaccard"


def dense_vector(values: Sequence[float]) -> np.ndarray:
    """Validate and convert ``values`` into a float32 dense vector."""
    arr = np.asarray(values, dtype=np.float32)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("dense vector must be one-dimensional and non-empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError("dense vector entries must be finite")
    return arr


@dataclass(frozen=True)
class SparseVector:
    """Sparse vector: strictly increasing indices paired with non-zero values."""

    indices: np.ndarray
    values: np.ndarray
    dim: int

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        val = np.asarray(self.values, dtype=np.float32)
        if idx.shape != val.shape or idx.ndim != 1:
            raise ValueError("indices and values must be 1-d and equally long")
        if idx.size and (np.any(np.diff(idx) <= 0) or idx[0] < 0 or idx[-1] >= self.dim):
            raise ValueError("indices must be strictly increasing and in [0, dim)")
        if np.any(val == 0) or not np.all(np.isfinite(val)):
            raise ValueError("values must be non-zero and finite")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim, dtype=np.float32)
        out[self.indices] = self.values
        return out


Vector = Union[np.ndarray, SparseVector]


@dataclass
class Collection:
    """An ordered, immutable set of ``m`` same-dimensional vectors, ids 0..m-1.

    Dense collections are stored as one ``(m, d)`` float32 matrix; sparse
    collections as a tuple of :class:`SparseVector`.
    """

    vectors: Union[np.ndarray, tuple]
    dim: int = field(init=False)

    def __post_init__(self):
        if isinstance(self.vectors, np.ndarray):
            mat = np.asarray(self.vectors, dtype=np.float32)
            if mat.ndim != 2 or mat.shape[0] < 1 or mat.shape[1] < 1:
                raise ValueError("dense collection must be a non-empty (m, d) matrix")
            if not np.all(np.isfinite(mat)):
                raise ValueError("collection entries must be finite")
            mat.setflags(write=False)
            self.vectors = mat
            self.dim = mat.shape[1]
        else:
            vecs = tuple(self.vectors)
            if not vecs:
                raise ValueError("collection must hold at least one vector")
            if not all(isinstance(v, SparseVector) for v in vecs):
                raise ValueError("sparse collection must hold SparseVector entries only")
            dims = {v.dim for v in vecs}
            if len(dims) != 1:
                raise ValueError("collection vectors must share one dimensionality")
            self.vectors = vecs
            self.dim = vecs[0].dim

    @property
    def is_dense(self) -> bool:
        return isinstance(self.vectors, np.ndarray)

    def __len__(self) -> int:
        return len(self.vectors)

    def __getitem__(self, i: int) -> Vector:
        return self.vectors[i]


@dataclass(frozen=True)
class TopKResult:
    """Neighbors as parallel (ids, scores) arrays, non-decreasing in score."""

    ids: np.ndarray
    scores: np.ndarray
    k: int

    def __post_init__(self):
        ids = np.asarray(self.ids, dtype=np.int64)
        scores = np.asarray(self.scores, dtype=np.float64)
        if ids.shape != scores.shape or ids.ndim != 1:
            raise ValueError("ids and scores must be parallel 1-d arrays")
        if len(set(ids.tolist())) != ids.size:
            raise ValueError("result ids must be unique")
        if ids.size > 1 and np.any(np.diff(scores) < 0):
            raise ValueError("scores must be non-decreasing")
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "scores", scores)

    def __len__(self) -> int:
        return self.ids.size


def _as_f64(u: np.ndarray) -> np.ndarray:
    return np.asarray(u, dtype=np.float64)


def _nz_set(u: Vector) -> np.ndarray:
    if isinstance(u, SparseVector):
        return u.indices
    return np.flatnonzero(np.asarray(u))


def _sparse_ip(u: SparseVector, v: SparseVector) -> float:
    i = j = 0
    acc = 0.0
    ui, uv, vi, vv = u.indices, u.values, v.indices, v.values
    while i < ui.size and j < vi.size:
        if ui[i] == vi[j]:
            acc += float(uv[i]) * float(vv[j])
            i += 1
            j += 1
        elif ui[i] < vi[j]:
            i += 1
        else:
            j += 1
    return acc


def _ip(u: Vector, v: Vector) -> float:
    if isinstance(u, SparseVector) and isinstance(v, SparseVector):
        return _sparse_ip(u, v)
    if isinstance(u, SparseVector):
        return float(_as_f64(np.asarray(v)[u.indices]) @ _as_f64(u.values))
    if isinstance(v, SparseVector):
        return float(_as_f64(np.asarray(u)[v.indices]) @ _as_f64(v.values))
    return float(_as_f64(u) @ _as_f64(v))


def _norm_sq(u: Vector) -> float:
    if isinstance(u, SparseVector):
        vals = _as_f64(u.values)
        return float(vals @ vals)
    vals = _as_f64(u)
    return float(vals @ vals)


def _dim_of(u: Vector) -> int:
    return u.dim if isinstance(u, SparseVector) else int(np.asarray(u).shape[0])


def distance(kind: DistanceKind, u: Vector, v: Vector) -> float:
    """Distance between two vectors under ``kind``; smaller = more similar."""
    if _dim_of(u) != _dim_of(v):
        raise ValueError(f"dimension mismatch: {_dim_of(u)} vs {_dim_of(v)}")
    if kind is DistanceKind.L2_SQUARED:
        return _norm_sq(u) - 2.0 * _ip(u, v) + _norm_sq(v)
    if kind is DistanceKind.ANGULAR:
        nu, nv = _norm_sq(u), _norm_sq(v)
        if nu == 0.0 or nv == 0.0:
            raise ValueError("angular distance undefined for zero vectors")
        return 1.0 - _ip(u, v) / np.sqrt(nu * nv)
    if kind is DistanceKind.NEG_INNER_PRODUCT:
        return -_ip(u, v)
    if kind is DistanceKind.NEG_JACCARD:
        a, b = _nz_set(u), _nz_set(v)
        union = np.union1d(a, b).size
        if union == 0:
            return 0.0
        inter = np.intersect1d(a, b).size
        return -inter / union
    raise ValueError(f"unknown distance kind {kind!r}")


def pairwise_scores(X: Collection, q: Vector, kind: DistanceKind) -> np.ndarray:
    """Scores of ``q`` against every vector in ``X`` (float64).

    The dense paths use einsum reductions only: per-row results are then
    bit-identical no matter how the rows are batched, which lets exact tree
    searches reproduce oracle scores exactly.
    """
    if X.is_dense and not isinstance(q, SparseVector):
        mat = _as_f64(X.vectors)
        qv = _as_f64(q)
        if qv.shape[0] != X.dim:
            raise ValueError(f"dimension mismatch: {qv.shape[0]} vs {X.dim}")
        if kind is DistanceKind.L2_SQUARED:
            diff = mat - qv
            return np.einsum("ij,ij->i", diff, diff)
        if kind is DistanceKind.NEG_INNER_PRODUCT:
            return -np.einsum("ij,j->i", mat, qv)
        if kind is DistanceKind.ANGULAR:
            norms = np.sqrt(np.einsum("ij,ij->i", mat, mat))
            qn = np.sqrt(qv @ qv)
            if qn == 0.0 or np.any(norms == 0.0):
                raise ValueError("angular distance undefined for zero vectors")
            return 1.0 - np.einsum("ij,j->i", mat, qv) / (norms * qn)
    return np.array([distance(kind, q, X[i]) for i in range(len(X))], dtype=np.float64)


def top_k_from_scores(scores: np.ndarray, k: int) -> TopKResult:
    """Select the k smallest scores with (score, id) lexicographic ties."""
    scores = np.asarray(scores, dtype=np.float64)
    k_eff = min(k, scores.size)
    order = np.lexsort((np.arange(scores.size), scores))[:k_eff]
    return TopKResult(ids=order, scores=scores[order], k=k)


def brute_force_topk(X: Collection, q: Vector, k: int, kind: DistanceKind) -> TopKResult:
    """Exact top-k of X for q: the oracle every other index is compared to."""
    if k < 1:
        raise ValueError("k must be at least 1")
    return top_k_from_scores(pairwise_scores(X, q, kind), k)


def recall(exact: TopKResult, approx: TopKResult, k: int) -> float:
    """|exact ids ∩ approx ids| / k."""
    if len(exact) < k:
        raise ValueError("exact result must have k entries")
    shared = np.intersect1d(exact.ids[:k], approx.ids).size
    return shared / k


def epsilon_valid(exact_kth_score: float, candidate_score: float, eps: float) -> bool:
    """Is the candidate within a (1+eps) factor of the exact k-th score?

    Only meaningful for non-negative (metric) scores; negative inner-product
    scores are rejected.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if exact_kth_score < 0 or candidate_score < 0:
        raise ValueError("epsilon validity requires non-negative metric scores")
    return candidate_score <= (1.0 + eps) * exact_kth_score
