"""annkit: a from-scratch approximate vector retrieval toolkit.

Index families (trees, hashes, graphs, clusters, samplers, quantizers,
sketches) all answer the same question -- top-k retrieval over a vector
collection -- and are all validated against the exact brute-force oracle
in :mod:`annkit.core`.
"""

from annkit.core import (
    Collection,
    DistanceKind,
    SparseVector,
    TopKResult,
    brute_force_topk,
    dense_vector,
    distance,
    epsilon_valid,
    recall,
)

__version__ = "0.1.0"

__all__ = [
    "Collection",
    "DistanceKind",
    "SparseVector",
    "TopKResult",
    "brute_force_topk",
    "dense_vector",
    "distance",
    "epsilon_valid",
    "recall",
]
