"""Branch-and-bound and randomized tree indexes."""

from annkit.trees.kd import KdTree, kd_build, kd_search_exact
from annkit.trees.rp import (
    RpTree,
    SpillTree,
    defeatist_search,
    potential_phi,
    rp_build,
    spill_build,
)
from annkit.trees.cover import (
    CoverTree,
    DuplicatePointError,
    cover_build,
    cover_insert,
    cover_nn,
    cover_nn_approx,
)

__all__ = [
    "KdTree",
    "kd_build",
    "kd_search_exact",
    "RpTree",
    "SpillTree",
    "rp_build",
    "spill_build",
    "defeatist_search",
    "potential_phi",
    "CoverTree",
    "DuplicatePointError",
    "cover_build",
    "cover_insert",
    "cover_nn",
    "cover_nn_approx",
]
