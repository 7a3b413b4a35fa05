"""Rank-preserving reductions between MIPS, NN and MCS.

Metric-only indexes (trees, L2/angular LSH) can serve inner-product queries
once data and query points are mapped into a space where the target metric
ranks candidates exactly like the original inner product did.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from annkit.core import Collection, DistanceKind

__all__ = [
    "TransformedPair",
    "AugmentedTransform",
    "nn_to_mips",
    "mips_to_nn",
    "mips_to_mcs",
    "mips_to_nn_augmented",
]


@dataclass(frozen=True)
class TransformedPair:
    """Paired data/query maps plus the metric the transformed space targets.

    ``scale`` records the data rescaling constant (1.0 when no rescale was
    needed) so score estimates in the transformed space can be mapped back.
    """

    data_map: Callable[[np.ndarray], np.ndarray]
    query_map: Callable[[np.ndarray], np.ndarray]
    target_kind: DistanceKind
    output_dim: int
    scale: float = 1.0

    def transform_collection(self, X: Collection) -> Collection:
        return Collection(np.stack([self.data_map(X.vectors[i]) for i in range(len(X))]))


def nn_to_mips(X: Collection) -> TransformedPair:
    """NN over R^d becomes MIPS over R^{d+1}: append the squared norm to
    each data point and -1/2 to queries, so maximizing <q', u'> minimizes
    the original Euclidean distance (the query's own norm is a constant in
    the argmin and drops out)."""
    d = X.dim

    def data_map(u: np.ndarray) -> np.ndarray:
        u64 = np.asarray(u, dtype=np.float64)
        return np.append(u, np.float32(u64 @ u64)).astype(np.float32)

    def query_map(q: np.ndarray) -> np.ndarray:
        return np.append(q, np.float32(-0.5)).astype(np.float32)

    return TransformedPair(data_map, query_map, DistanceKind.NEG_INNER_PRODUCT, d + 1)


def mips_to_nn(X: Collection) -> TransformedPair:
    """MIPS over R^d becomes NN over R^{d+1} by the unit-sphere lift.

    Data points are rescaled into the unit ball (harmless for MIPS) and
    lifted onto the sphere; queries are zero-padded. With unit-norm data
    the transformed squared distance is 2 - 2<q, u/scale> plus a constant,
    so the L2 ranking equals the original inner-product ranking.
    """
    lifted = mips_to_mcs(X)
    return TransformedPair(
        data_map=lifted.data_map,
        query_map=lifted.query_map,
        target_kind=DistanceKind.L2_SQUARED,
        output_dim=lifted.output_dim,
        scale=lifted.scale,
    )


def _max_norm(X: Collection) -> float:
    mat = np.asarray(X.vectors, dtype=np.float64)
    return float(np.sqrt(np.einsum("ij,ij->i", mat, mat).max()))


def mips_to_mcs(X: Collection) -> TransformedPair:
    """MIPS becomes MCS: rescale data inside the unit ball, then append the
    coordinate that lifts every data point onto the unit sphere.

    Rescaling by the max data norm leaves the MIPS ranking unchanged, and
    <query_map(q), data_map(u)> equals <q, u/scale> exactly.
    """
    d = X.dim
    scale = _max_norm(X)
    inv = 1.0 / scale if scale > 0 else 1.0

    def data_map(u: np.ndarray) -> np.ndarray:
        u64 = np.asarray(u, dtype=np.float64) * inv
        tail = np.sqrt(max(0.0, 1.0 - u64 @ u64))
        return np.append(u64, tail).astype(np.float32)

    def query_map(q: np.ndarray) -> np.ndarray:
        return np.append(q, np.float32(0.0)).astype(np.float32)

    return TransformedPair(data_map, query_map, DistanceKind.ANGULAR, d + 1, scale=scale)


@dataclass(frozen=True)
class AugmentedTransform(TransformedPair):
    """MIPS-to-NN transform into R^{d+m} with one-hot tails.

    Data point i keeps its (rescaled) head and gains a tail that is non-zero
    only at slot i, chosen so every transformed point is a unit vector. The
    tail block is stored sparsely: ``heads`` is (m, d) and ``tails`` is (m,),
    so pairwise transformed distances cost O(d) instead of O(d + m).
    """

    heads: np.ndarray = None
    tails: np.ndarray = None

    def pairwise_sq_distance(self, i: int, j: int) -> float:
        hi = np.asarray(self.heads[i], dtype=np.float64)
        hj = np.asarray(self.heads[j], dtype=np.float64)
        diff = hi - hj
        base = float(diff @ diff)
        if i == j:
            return base
        return base + float(self.tails[i]) ** 2 + float(self.tails[j]) ** 2


def mips_to_nn_augmented(X: Collection) -> AugmentedTransform:
    """Data-to-data rank-preserving MIPS-to-NN map: pairwise transformed
    L2^2 equals 2 - 2<u, v> for distinct points (after rescaling into the
    unit ball), so k-NN graphs over the transforms are k-MIPS graphs over
    the originals. Queries are padded with m zeros; query rescaling never
    changes a MIPS ranking, so only the data side is rescaled."""
    d = X.dim
    m = len(X)
    scale = _max_norm(X)
    inv = 1.0 / scale if scale > 0 else 1.0
    heads = np.asarray(X.vectors, dtype=np.float64) * inv
    tails = np.sqrt(np.maximum(0.0, 1.0 - np.einsum("ij,ij->i", heads, heads)))

    def query_map(q: np.ndarray) -> np.ndarray:
        out = np.zeros(d + m, dtype=np.float32)
        out[:d] = q
        return out

    def data_map(u_and_id) -> np.ndarray:
        # Dense materialization, for tests and small m; pass (vector, id).
        u, i = u_and_id
        out = np.zeros(d + m, dtype=np.float32)
        out[:d] = heads[i]
        out[d + i] = tails[i]
        return out

    return AugmentedTransform(
        data_map=data_map,
        query_map=query_map,
        target_kind=DistanceKind.L2_SQUARED,
        output_dim=d + m,
        scale=scale,
        heads=heads.astype(np.float32),
        tails=tails.astype(np.float32),
    )
