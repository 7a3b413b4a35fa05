"""MIPS without full inner products: wedge sampling and dimension-sampling
candidate elimination.

Wedge sampling draws (dimension, point) pairs whose point-marginal is
proportional to |q_t u_t| and tallies signed counts, so the count of each
point estimates its inner-product rank without computing inner products.
The eliminator accumulates partial inner products over dimensions sampled
without replacement and repeatedly discards the weaker half of the
candidates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from annkit.core import Collection, TopKResult

__all__ = [
    "AliasTable",
    "alias_build",
    "alias_sample",
    "alias_sample_many",
    "WedgeIndex",
    "build_wedge_index",
    "wedge_topk",
    "boundedme_topk",
    "boundedme_schedule",
    "sample_size_h",
]


@dataclass(frozen=True)
class AliasTable:
    """Walker/Vose table: one uniform draw plus one comparison per sample."""

    prob: np.ndarray  # acceptance probability per slot
    alias: np.ndarray  # fallback index per slot
    weight_sum: float

    def __len__(self) -> int:
        return self.prob.size


def alias_build(weights) -> AliasTable:
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("weights must be a non-empty 1-d sequence")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be non-negative and finite")
    total = float(w.sum())
    if total == 0.0:
        raise ValueError("weights must not all be zero")
    n = w.size
    scaled = w * (n / total)
    prob = np.ones(n)
    alias = np.arange(n, dtype=np.int64)
    small = [i for i in range(n) if scaled[i] < 1.0]
    large = [i for i in range(n) if scaled[i] >= 1.0]
    while small and large:
        s = small.pop()
        g = large.pop()
        prob[s] = scaled[s]
        alias[s] = g
        scaled[g] = (scaled[g] + scaled[s]) - 1.0
        (small if scaled[g] < 1.0 else large).append(g)
    for i in small + large:
        prob[i] = 1.0
    return AliasTable(prob=prob, alias=alias, weight_sum=total)


def alias_sample(table: AliasTable, rng: np.random.Generator) -> int:
    i = int(rng.integers(len(table)))
    return i if rng.random() < table.prob[i] else int(table.alias[i])


def alias_sample_many(table: AliasTable, rng: np.random.Generator, n: int) -> np.ndarray:
    slots = rng.integers(len(table), size=n)
    coins = rng.random(n)
    take = coins < table.prob[slots]
    return np.where(take, slots, table.alias[slots])


@dataclass
class WedgeIndex:
    """Per-dimension alias tables over |u_t| plus the per-dimension column
    sums; dimensions whose column sum is zero are dropped entirely."""

    dims: np.ndarray  # active dimension ids
    tables: list  # alias table per active dimension
    column_sums: np.ndarray  # sum_u |u_t| per active dimension
    dim: int


def build_wedge_index(X: Collection) -> WedgeIndex:
    mat = np.abs(X.vectors.astype(np.float64))
    sums = mat.sum(axis=0)
    dims = np.flatnonzero(sums > 0).astype(np.int64)
    tables = [alias_build(mat[:, t]) for t in dims]
    return WedgeIndex(dims=dims, tables=tables, column_sums=sums[dims], dim=X.dim)


def wedge_topk(
    index: WedgeIndex,
    X: Collection,
    q: np.ndarray,
    samples: int,
    k: int,
    k_prime: int = 0,
    seed: int = 0,
) -> TopKResult:
    """Draw (dimension, point) samples, tally Sign(q_t u_t) per point, then
    rescore the k' highest-count points exactly and return the top k."""
    if samples < 1:
        raise ValueError("need at least one sample")
    if k_prime == 0:
        k_prime = max(10 * k, 50)
    if k_prime < k:
        raise ValueError("k_prime must be at least k")
    q64 = np.asarray(q, dtype=np.float64)
    dim_weights = np.abs(q64[index.dims]) * index.column_sums
    if not np.any(dim_weights > 0):
        raise ValueError("query has no mass on the index's non-zero dimensions")
    rng = np.random.default_rng(seed)
    dim_table = alias_build(dim_weights)

    counts = np.zeros(len(X), dtype=np.float64)
    dim_draws = alias_sample_many(dim_table, rng, samples)
    mat = X.vectors
    for slot in range(index.dims.size):
        n_t = int(np.count_nonzero(dim_draws == slot))
        if n_t == 0:
            continue
        t = int(index.dims[slot])
        points = alias_sample_many(index.tables[slot], rng, n_t)
        signs = np.sign(q64[t] * mat[points, t].astype(np.float64))
        np.add.at(counts, points, signs)

    top = np.lexsort((np.arange(len(X)), -counts))[: min(k_prime, len(X))]
    top = np.sort(top)
    mat64 = X.vectors[top].astype(np.float64)
    scores = -np.einsum("ij,j->i", mat64, q64)
    order = np.lexsort((top, scores))[: min(k, top.size)]
    return TopKResult(ids=top[order], scores=scores[order], k=k)


def sample_size_h(x: float, d: int) -> float:
    """Minimum without-replacement sample count for an epsilon-accurate
    mean, as a function of x = (budget exponent) and the universe size d."""
    return min((1.0 + x) / (1.0 + x / d), (x + x / d) / (1.0 + x / d))


def boundedme_schedule(n_alive: int, k: int, eps_i: float, delta_i: float, d: int) -> int:
    """Dimension budget t_i for one halving round (natural log), capped at d."""
    gap = n_alive - k
    if gap <= 0:
        return 0
    x = (2.0 / eps_i**2) * math.log(2.0 * gap / (delta_i * (gap // 2 + 1)))
    return min(d, max(1, math.ceil(sample_size_h(x, d))))


def _normalize_for_bounds(X: Collection, q: np.ndarray):
    """Affine per-coordinate maps putting every per-dimension contribution
    into [0, 1] while preserving the inner-product ranking.

    Data coordinates map into [0, 1]; the query is scaled by the data span
    per coordinate (compensating the data scaling) then by its max
    magnitude. The final contribution (q'_t u'_t + 1) / 2 lies in [0, 1]
    and, summed over any shared dimension set, ranks points exactly like
    the raw partial inner products.
    """
    mat = X.vectors.astype(np.float64)
    q64 = np.asarray(q, dtype=np.float64)
    lo = mat.min(axis=0)
    span = mat.max(axis=0) - lo
    safe_span = np.where(span > 0, span, 1.0)
    data = (mat - lo) / safe_span
    q_scaled = q64 * span
    q_max = np.abs(q_scaled).max()
    if q_max > 0:
        q_scaled = q_scaled / q_max
    return data, q_scaled


def boundedme_topk(
    X: Collection,
    q: np.ndarray,
    k: int,
    eps: float,
    delta: float,
    seed: int = 0,
) -> tuple[TopKResult, dict]:
    """Iterative halving over partial inner products.

    Dimensions come from one global seeded permutation shared by every
    survivor (sampling without replacement; accumulators stay comparable).
    Each round extends accumulators by the schedule's step, keeps points
    strictly above the median-ish threshold (ties die), and halves eps /
    delta for the next round. Survivors are rescored with exact inner
    products for the final ranking.

    Returns the result plus diagnostics with the total coordinate-product
    count and the per-round schedule.
    """
    m = len(X)
    if k < 1:
        raise ValueError("k must be at least 1")
    if not (0 < eps < 1 and 0 < delta < 1):
        raise ValueError("eps and delta must lie in (0, 1)")
    d = X.dim
    if k >= m:
        q64 = np.asarray(q, dtype=np.float64)
        scores = -np.einsum("ij,j->i", X.vectors.astype(np.float64), q64)
        order = np.lexsort((np.arange(m), scores))
        return (
            TopKResult(ids=order, scores=scores[order], k=k),
            {"products": 0, "schedule": [], "rounds": 0},
        )

    data, q_scaled = _normalize_for_bounds(X, q)
    contrib = (data * q_scaled + 1.0) / 2.0  # (m, d), entries in [0, 1]

    rng = np.random.default_rng(seed)
    perm = rng.permutation(d)

    alive = np.arange(m, dtype=np.int64)
    acc = np.zeros(m)
    eps_i, delta_i = eps / 4.0, delta / 2.0
    t_prev = 0
    products = 0
    schedule = []

    while alive.size > k:
        t_i = max(boundedme_schedule(alive.size, k, eps_i, delta_i, d), t_prev)
        schedule.append(t_i)
        new_dims = perm[t_prev:t_i]
        if new_dims.size:
            acc[alive] += contrib[np.ix_(alive, new_dims)].sum(axis=1)
            products += alive.size * new_dims.size
        t_prev = t_i

        gap = alive.size - k
        rank = math.ceil(gap / 2)  # threshold at the rank-th smallest score
        alive_scores = acc[alive]
        threshold = np.partition(alive_scores, rank - 1)[rank - 1]
        survivors = alive[alive_scores > threshold]
        if survivors.size < k:
            # strict thresholding can over-kill on ties; refill by best scores
            order = np.lexsort((alive, -alive_scores))
            survivors = np.sort(alive[order[:k]])
        alive = survivors
        eps_i *= 0.75
        delta_i /= 2.0

    q64 = np.asarray(q, dtype=np.float64)
    mat = X.vectors[alive].astype(np.float64)
    scores = -np.einsum("ij,j->i", mat, q64)
    order = np.lexsort((alive, scores))[: min(k, alive.size)]
    result = TopKResult(ids=alive[order], scores=scores[order], k=k)
    diag = {"products": products, "schedule": schedule, "rounds": len(schedule),
            "contrib_matrix": contrib}
    return result, diag
