"""Locality-sensitive hash families and the multi-table PLEB index.

Four families: bit sampling (Hamming), hyperplane and cross-polytope
(angular), and the p-stable construction for Euclidean distance. An index
is L tables of composite buckets, each bucket key the tuple of l hash
values mixed into one 64-bit key. Mixer collisions only ever add spurious
candidates, never remove true ones.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate

from annkit.core import Collection, DistanceKind, TopKResult, pairwise_scores
from annkit.transforms import TransformedPair, mips_to_mcs

__all__ = [
    "FamilyKind",
    "HashFamily",
    "LshIndex",
    "PlebAnswer",
    "derive_params",
    "build_index",
    "pleb_query",
    "lsh_topk",
    "RadiusLadder",
    "build_radius_ladder",
    "approx_nn",
    "MipsHashIndex",
    "mips_hash_index",
    "pstable_collision_probability",
]


class FamilyKind(enum.Enum):
    BIT_SAMPLING = "bit"
    HYPERPLANE = "hyperplane"
    CROSS_POLYTOPE = "cross_polytope"
    P_STABLE_L2 = "pstable"


def _next_pow2(n: int) -> int:
    return 1 << (n - 1).bit_length()


def _fwht(x: np.ndarray) -> np.ndarray:
    """Orthonormal fast Walsh-Hadamard transform along the last axis."""
    shape = x.shape
    n = shape[-1]
    y = x.reshape(-1, n).copy()
    h = 1
    while h < n:
        blocks = y.reshape(-1, n // (2 * h), 2, h)
        a = blocks[:, :, 0, :] + blocks[:, :, 1, :]
        b = blocks[:, :, 0, :] - blocks[:, :, 1, :]
        y = np.stack([a, b], axis=2).reshape(-1, n)
        h *= 2
    return (y / math.sqrt(n)).reshape(shape)


@dataclass
class HashFamily:
    """A seeded family; function ``f`` of the family is fully determined by
    (kind, seed, d, f), so rebuilding with the same seed is bit-identical."""

    kind: FamilyKind
    seed: int
    d: int
    r: float = 1.0  # bucket width, p-stable family only
    _cache: dict = field(default_factory=dict, repr=False)

    def _rng(self, func_index: int) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence(entropy=(self.seed, func_index)))

    def _params(self, func_index: int):
        if func_index not in self._cache:
            rng = self._rng(func_index)
            if self.kind is FamilyKind.BIT_SAMPLING:
                p = int(rng.integers(self.d))
            elif self.kind is FamilyKind.HYPERPLANE:
                v = rng.standard_normal(self.d)
                p = v / np.linalg.norm(v)
            elif self.kind is FamilyKind.CROSS_POLYTOPE:
                n = _next_pow2(self.d)
                p = rng.choice([-1.0, 1.0], size=(3, n))
            elif self.kind is FamilyKind.P_STABLE_L2:
                alpha = rng.standard_normal(self.d)
                beta = rng.uniform(0.0, self.r)
                p = (alpha, beta)
            else:
                raise ValueError(f"unknown family kind {self.kind!r}")
            self._cache[func_index] = p
        return self._cache[func_index]

    def hash_many(self, func_index: int, mat: np.ndarray) -> np.ndarray:
        """Hash every row of ``mat``; einsum projections keep the result
        independent of how rows are batched."""
        mat = np.atleast_2d(np.asarray(mat, dtype=np.float64))
        if mat.shape[1] != self.d:
            raise ValueError("input dimension mismatch")
        params = self._params(func_index)
        if self.kind is FamilyKind.BIT_SAMPLING:
            if not np.all((mat == 0.0) | (mat == 1.0)):
                raise ValueError("bit sampling requires binary vectors")
            return mat[:, params].astype(np.int64)
        if self.kind is FamilyKind.HYPERPLANE:
            return (np.einsum("ij,j->i", mat, params) >= 0.0).astype(np.int64)
        if self.kind is FamilyKind.CROSS_POLYTOPE:
            n = params.shape[1]
            x = np.zeros((mat.shape[0], n), dtype=np.float64)
            x[:, : self.d] = mat
            for o in range(3):  # pseudo-rotation: three rounds of sign flips + Hadamard
                x = _fwht(x * params[o])
            i = np.argmax(np.abs(x), axis=1)
            neg = x[np.arange(x.shape[0]), i] < 0
            return (2 * i + neg).astype(np.int64)
        if self.kind is FamilyKind.P_STABLE_L2:
            alpha, beta = params
            return np.floor((np.einsum("ij,j->i", mat, alpha) + beta) / self.r).astype(np.int64)
        raise ValueError(f"unknown family kind {self.kind!r}")

    def hash(self, func_index: int, u: np.ndarray) -> int:
        return int(self.hash_many(func_index, np.asarray(u)[None, :])[0])

    def distance(self, u: np.ndarray, v: np.ndarray) -> float:
        """The distance this family is sensitive to."""
        u64 = np.asarray(u, dtype=np.float64)
        v64 = np.asarray(v, dtype=np.float64)
        if self.kind is FamilyKind.BIT_SAMPLING:
            return float(np.abs(u64 - v64).sum())
        if self.kind in (FamilyKind.HYPERPLANE, FamilyKind.CROSS_POLYTOPE):
            cos = u64 @ v64 / (np.linalg.norm(u64) * np.linalg.norm(v64))
            return float(np.arccos(np.clip(cos, -1.0, 1.0)))
        return float(np.linalg.norm(u64 - v64))


def derive_params(m: int, p1: float, p2: float) -> tuple[int, int, float]:
    """Table geometry (l, L, rho) for a family with collision rates p1 > p2."""
    if not 0.0 < p2 < p1 < 1.0:
        raise ValueError("need 0 < p2 < p1 < 1")
    rho = math.log(p1) / math.log(p2)
    ell = max(1, math.ceil(math.log(m) / math.log(1.0 / p2)))
    big_l = max(1, math.ceil(m**rho))
    return ell, big_l, rho


def _mix_keys(columns: np.ndarray) -> np.ndarray:
    """Mix rows of hash values (n, ell) into 64-bit bucket keys (n,)."""
    with np.errstate(over="ignore"):
        h = np.full(columns.shape[0], 0x9E3779B97F4A7C15, dtype=np.uint64)
        for j in range(columns.shape[1]):
            x = columns[:, j].astype(np.uint64)
            x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
            x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
            x = x ^ (x >> np.uint64(31))
            h = (h ^ x) * np.uint64(0x85EBCA77C2B2AE63)
    return h


@dataclass
class LshIndex:
    family: HashFamily
    ell: int
    big_l: int
    tables: list  # one dict per table: bucket key -> sorted id list
    eps: float = 0.0

    def bucket_keys(self, table: int, mat: np.ndarray) -> np.ndarray:
        cols = np.stack(
            [self.family.hash_many(table * self.ell + j, mat) for j in range(self.ell)],
            axis=1,
        )
        return _mix_keys(cols)

    def bucket_key(self, table: int, u: np.ndarray) -> int:
        return int(self.bucket_keys(table, np.asarray(u)[None, :])[0])


@dataclass
class PlebAnswer:
    yes: bool
    point_id: Optional[int] = None
    score: Optional[float] = None
    visited: int = 0


def build_index(X: Collection, family: HashFamily, ell: int, big_l: int, eps: float = 0.0) -> LshIndex:
    if ell < 1 or big_l < 1:
        raise ValueError("need at least one hash per bucket and one table")
    index = LshIndex(family=family, ell=ell, big_l=big_l, tables=[], eps=eps)
    mat = np.asarray(X.vectors, dtype=np.float64)
    for t in range(big_l):
        keys = index.bucket_keys(t, mat)
        table: dict[int, list[int]] = {}
        for i, key in enumerate(keys.tolist()):
            table.setdefault(key, []).append(i)
        index.tables.append(table)
    return index


def pleb_query(index: LshIndex, X: Collection, q: np.ndarray, r: float, eps: float) -> PlebAnswer:
    """Decision query: is anything within r?  Scans the query's bucket in
    each table in order, ascending id within a bucket, touching at most
    4L candidates; answers Yes with the first point within (1+eps)r."""
    budget = 4 * index.big_l
    visited = 0
    for t in range(index.big_l):
        bucket = index.tables[t].get(index.bucket_key(t, q), [])
        for i in bucket:
            if visited >= budget:
                return PlebAnswer(yes=False, visited=visited)
            visited += 1
            dist = index.family.distance(q, X.vectors[i])
            if dist <= (1.0 + eps) * r:
                return PlebAnswer(yes=True, point_id=i, score=dist, visited=visited)
    return PlebAnswer(yes=False, visited=visited)


def lsh_topk(index: LshIndex, X: Collection, q: np.ndarray, k: int,
             kind: DistanceKind = DistanceKind.L2_SQUARED) -> TopKResult:
    """Practical retrieval: union of the query's L buckets, rescored exactly."""
    seen: set[int] = set()
    for t in range(index.big_l):
        seen.update(index.tables[t].get(index.bucket_key(t, q), []))
    if not seen:
        return TopKResult(ids=np.array([], dtype=np.int64), scores=np.array([]), k=k)
    candidates = np.array(sorted(seen), dtype=np.int64)
    scores = pairwise_scores(Collection(X.vectors[candidates]), q, kind)
    order = np.lexsort((candidates, scores))[: min(k, candidates.size)]
    return TopKResult(ids=candidates[order], scores=scores[order], k=k)


def pstable_collision_probability(dist: float, r: float) -> float:
    """Collision probability of the p-stable family at separation ``dist``,
    by numeric quadrature (1e-6 absolute tolerance)."""
    if dist <= 0:
        return 1.0

    def integrand(t: float) -> float:
        z = t / dist
        f = math.sqrt(2.0 / math.pi) * math.exp(-z * z / 2.0)  # pdf of |N(0,1)|
        return (f / dist) * (1.0 - t / r)

    val, _ = integrate.quad(integrand, 0.0, r, epsabs=1e-6)
    return float(val)


def _sample_aspect_ratio(X: Collection, seed: int, pairs: int = 1000) -> tuple[float, float]:
    """Estimate (min, max) pairwise distance from a random pair sample."""
    rng = np.random.default_rng(seed)
    m = len(X)
    mat = X.vectors.astype(np.float64)
    lo, hi = math.inf, 0.0
    for _ in range(pairs):
        i, j = rng.integers(m), rng.integers(m)
        if i == j:
            continue
        dist = float(np.linalg.norm(mat[i] - mat[j]))
        if dist > 0:
            lo = min(lo, dist)
            hi = max(hi, dist)
    if not math.isfinite(lo) or hi == 0.0:
        raise ValueError("collection is degenerate: all sampled points identical")
    return lo, hi


@dataclass
class RadiusLadder:
    """Reusable stack of PLEB indexes at geometrically spaced radii.

    The ladder spacing and the PLEB witness each contribute their own
    approximation factor, so both run at sqrt(1+eps)-1 internally and the
    end-to-end factor of a ladder query stays within the requested
    (1+eps). A huge eps (at least the aspect ratio) collapses the ladder
    to a single level. Indexes are built lazily, at most once per level.
    """

    X: Collection
    eps: float
    seed: int
    levels: list
    pleb_eps: float
    _indexes: dict = field(default_factory=dict, repr=False)

    def _index_for(self, j: int) -> LshIndex:
        if j not in self._indexes:
            r = self.levels[j]
            p1 = pstable_collision_probability(r, r)
            p2 = pstable_collision_probability((1.0 + self.pleb_eps) * r, r)
            ell, big_l, _ = derive_params(len(self.X), p1, p2)
            fam = HashFamily(FamilyKind.P_STABLE_L2, seed=self.seed * 1_000_003 + j,
                             d=self.X.dim, r=r)
            self._indexes[j] = build_index(self.X, fam, ell, big_l, eps=self.pleb_eps)
        return self._indexes[j]

    def query(self, q: np.ndarray) -> PlebAnswer:
        """Binary search for the smallest radius whose PLEB answers Yes."""
        best: Optional[PlebAnswer] = None
        lo_j, hi_j = 0, len(self.levels) - 1
        while lo_j <= hi_j:
            mid = (lo_j + hi_j) // 2
            ans = pleb_query(self._index_for(mid), self.X, q, self.levels[mid], self.pleb_eps)
            if ans.yes:
                best = ans
                hi_j = mid - 1
            else:
                lo_j = mid + 1
        if best is None:
            # every level said No (can happen with unlucky hashes); report
            # the top level's answer
            best = pleb_query(self._index_for(len(self.levels) - 1), self.X, q,
                              self.levels[-1], self.pleb_eps)
        return best


def build_radius_ladder(X: Collection, eps: float, seed: int = 0,
                        pleb_eps: Optional[float] = None) -> RadiusLadder:
    """Size the radius ladder from a sampled aspect ratio."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    step = math.sqrt(1.0 + eps) - 1.0
    pe = step if pleb_eps is None else pleb_eps
    lo, hi = _sample_aspect_ratio(X, seed)
    n_levels = max(1, math.ceil(math.log(hi / lo) / math.log(1.0 + step)))
    levels = [lo * (1.0 + step) ** j for j in range(n_levels)]
    return RadiusLadder(X=X, eps=eps, seed=seed, levels=levels, pleb_eps=pe)


def approx_nn(X: Collection, q: np.ndarray, eps: float, seed: int = 0,
              pleb_eps: Optional[float] = None,
              with_levels: bool = False):
    """One-shot (1+eps)-approximate NN; see :class:`RadiusLadder` for the
    reusable build-once form."""
    ladder = build_radius_ladder(X, eps, seed, pleb_eps)
    best = ladder.query(q)
    if with_levels:
        return best, ladder.levels
    return best


@dataclass
class MipsHashIndex:
    """Angular LSH over the MIPS-to-MCS transform of a collection."""

    pair: TransformedPair
    index: LshIndex
    transformed: Collection

    def topk(self, X: Collection, q: np.ndarray, k: int) -> TopKResult:
        tq = self.pair.query_map(q)
        res = lsh_topk(self.index, self.transformed, tq, k, DistanceKind.ANGULAR)
        # rescore in the original space: ranking is preserved, scores are not
        if res.ids.size == 0:
            return res
        scores = pairwise_scores(Collection(X.vectors[res.ids]), q, DistanceKind.NEG_INNER_PRODUCT)
        order = np.lexsort((res.ids, scores))
        return TopKResult(ids=res.ids[order], scores=scores[order], k=k)


def mips_hash_index(X: Collection, ell: int, big_l: int, seed: int,
                    kind: FamilyKind = FamilyKind.HYPERPLANE) -> MipsHashIndex:
    pair = mips_to_mcs(X)
    transformed = pair.transform_collection(X)
    family = HashFamily(kind, seed=seed, d=X.dim + 1)
    index = build_index(transformed, family, ell, big_l)
    return MipsHashIndex(pair=pair, index=index, transformed=transformed)
