"""Seeded synthetic vector generators.

The four dense distributions are per-coordinate iid: standard Gaussian,
uniform centered at zero with unit variance, uniform on the positive side
with the same width, and exponential with rate 1. The first two have zero
mean (self-coincidence under MIPS emerges in high dimensions); the last
two do not.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from annkit.core import Collection, SparseVector

__all__ = ["Distribution", "SyntheticSpec", "generate", "generate_sparse"]

_HALF_WIDTH = math.sqrt(12.0) / 2.0


class Distribution(enum.Enum):
    GAUSSIAN_STD = "gaussian"
    UNIFORM_CENTERED = "uniform_centered"
    UNIFORM_POSITIVE = "uniform_positive"
    EXPONENTIAL = "exponential"


@dataclass(frozen=True)
class SyntheticSpec:
    distribution: Distribution
    m: int
    d: int
    seed: int

    def __post_init__(self):
        if self.m < 1 or self.d < 1:
            raise ValueError("m and d must be positive")


def _draw(dist: Distribution, rng: np.random.Generator, shape) -> np.ndarray:
    if dist is Distribution.GAUSSIAN_STD:
        return rng.standard_normal(shape)
    if dist is Distribution.UNIFORM_CENTERED:
        return rng.uniform(-_HALF_WIDTH, _HALF_WIDTH, size=shape)
    if dist is Distribution.UNIFORM_POSITIVE:
        return rng.uniform(0.0, 2.0 * _HALF_WIDTH, size=shape)
    if dist is Distribution.EXPONENTIAL:
        return rng.exponential(1.0, size=shape)
    raise ValueError(f"unknown distribution {dist!r}")


def generate(spec: SyntheticSpec) -> Collection:
    rng = np.random.default_rng(spec.seed)
    return Collection(_draw(spec.distribution, rng, (spec.m, spec.d)).astype(np.float32))


def generate_queries(spec: SyntheticSpec, n: int, seed_offset: int = 1_000_000) -> np.ndarray:
    """Query draws independent of the data stream."""
    rng = np.random.default_rng(spec.seed + seed_offset)
    return _draw(spec.distribution, rng, (n, spec.d)).astype(np.float32)


def generate_sparse(m: int, d: int, nnz: int, seed: int, positive: bool = True) -> Collection:
    """Sparse vectors with ``nnz`` exponential-magnitude non-zeros each."""
    if nnz < 1 or nnz > d:
        raise ValueError("need 1 <= nnz <= d")
    rng = np.random.default_rng(seed)
    vecs = []
    for _ in range(m):
        idx = np.sort(rng.choice(d, size=nnz, replace=False)).astype(np.int64)
        vals = rng.exponential(1.0, size=nnz) + 1e-6
        if not positive:
            vals *= rng.choice([-1.0, 1.0], size=nnz)
        vecs.append(SparseVector(indices=idx, values=vals.astype(np.float32), dim=d))
    return Collection(tuple(vecs))
