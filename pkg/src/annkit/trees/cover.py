"""Cover tree: a leveled metric tree with nesting, covering and separation.

The tree lives over true (unsquared) L2 because its invariants are metric
statements; squared-L2 queries are converted internally and squared scores
are returned. Levels are integers: a node at level l covers its attached
children within distance 2^l, and any two nodes present at level l are more
than 2^l apart. The root level is finite (chosen from the first observed
distance) and is raised lazily whenever a new point falls outside the
root's cover radius.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from annkit.core import Collection, TopKResult

__all__ = [
    "CoverNode",
    "CoverTree",
    "DuplicatePointError",
    "cover_build",
    "cover_insert",
    "cover_nn",
    "cover_nn_approx",
]


class DuplicatePointError(ValueError):
    """Raised when a point already present in the tree is inserted again."""


@dataclass
class CoverNode:
    point_id: int
    level: int  # level at which this node entered the tree
    children: dict = field(default_factory=dict)  # attach level -> list[CoverNode]

    def attach(self, child: "CoverNode", level: int) -> None:
        self.children.setdefault(level, []).append(child)


@dataclass
class CoverTree:
    X: Collection
    root: Optional[CoverNode] = None
    root_level: Optional[int] = None
    size: int = 0

    def _sq_dist_many(self, q64: np.ndarray, ids: np.ndarray) -> np.ndarray:
        # einsum keeps per-row sums bit-identical to the brute-force oracle
        diff = self.X.vectors[ids].astype(np.float64) - q64
        return np.einsum("ij,ij->i", diff, diff)

    def _dist_many(self, q64: np.ndarray, ids: np.ndarray) -> np.ndarray:
        return np.sqrt(self._sq_dist_many(q64, ids))


def _children_at(node: CoverNode, level: int) -> list:
    return node.children.get(level, [])


def cover_insert(tree: CoverTree, point_id: int) -> None:
    """Insert one point by the recursive candidate-descent procedure.

    The parent is the closest candidate at the level where the descent
    bottomed out; picking the closest among the valid parents is our
    convention (any candidate within the cover radius would satisfy the
    invariants).
    """
    q64 = tree.X.vectors[point_id].astype(np.float64)

    if tree.root is None:
        tree.root = CoverNode(point_id=point_id, level=0)
        tree.root_level = None  # pinned once a second point arrives
        tree.size = 1
        return

    root_dist = float(tree._dist_many(q64, np.array([tree.root.point_id]))[0])
    if root_dist == 0.0:
        raise DuplicatePointError(f"point {point_id} duplicates point {tree.root.point_id}")

    if tree.root_level is None:
        tree.root_level = max(int(math.ceil(math.log2(root_dist))), -60)
        tree.root.level = tree.root_level
    while root_dist > 2.0 ** tree.root_level:
        tree.root_level += 1
        tree.root.level = tree.root_level

    # candidate pruning during descent can skip a deep duplicate, so the
    # presence check must be an exact search
    nearest = cover_nn(tree, tree.X.vectors[point_id], 1)
    if nearest.scores[0] == 0.0:
        raise DuplicatePointError(
            f"point {point_id} duplicates point {int(nearest.ids[0])}")

    inserted = _insert_rec(tree, q64, point_id, [tree.root], tree.root_level)
    if not inserted:  # cannot happen once the root radius covers the point
        raise AssertionError("cover tree insertion failed to find a parent")
    tree.size += 1


def _insert_rec(tree: CoverTree, q64, point_id: int, q_nodes: list, level: int) -> bool:
    # candidate set for the next level: current nodes (self-children) plus
    # their explicitly attached children at level - 1
    candidates = list(q_nodes)
    for node in q_nodes:
        candidates.extend(_children_at(node, level - 1))
    ids = np.array([n.point_id for n in candidates], dtype=np.int64)
    dists = tree._dist_many(q64, ids)
    if np.any(dists == 0.0):
        raise DuplicatePointError(f"point {point_id} duplicates an indexed point")
    radius = 2.0 ** level
    if float(dists.min()) > radius:
        return False  # no parent found anywhere below
    keep = [candidates[i] for i in np.flatnonzero(dists <= radius)]
    if _insert_rec(tree, q64, point_id, keep, level - 1):
        return True
    # the deeper call failed: attach here if some current-level node covers p
    parent_ids = np.array([n.point_id for n in q_nodes], dtype=np.int64)
    parent_dists = tree._dist_many(q64, parent_ids)
    valid = np.flatnonzero(parent_dists <= radius)
    if valid.size == 0:
        return False
    best = valid[np.lexsort((parent_ids[valid], parent_dists[valid]))[0]]
    q_nodes[best].attach(CoverNode(point_id=point_id, level=level - 1), level - 1)
    return True


def cover_build(X: Collection) -> CoverTree:
    """Build by repeated insertion in id order."""
    tree = CoverTree(X=X)
    for i in range(len(X)):
        cover_insert(tree, i)
    return tree


def _descend(tree: CoverTree, q64: np.ndarray, keep_rule, stop_rule=None):
    """Shared level-by-level descent; returns the surviving candidate nodes.

    The cache maps point id to *squared* distance; rules receive true
    distances (sqrt applied) because the cover radii are metric statements.
    """
    root_sq = float(tree._sq_dist_many(q64, np.array([tree.root.point_id]))[0])
    frontier = {tree.root.point_id: tree.root}
    sq_cache = {tree.root.point_id: root_sq}
    level = tree.root_level if tree.root_level is not None else tree.root.level

    while True:
        if stop_rule is not None:
            best = math.sqrt(min(sq_cache[pid] for pid in frontier))
            if stop_rule(best, level):
                break
        pending = any(
            node.children and min(node.children) <= level - 1
            for node in frontier.values()
        )
        if not pending:
            break
        candidates = dict(frontier)
        new_nodes = []
        for node in frontier.values():
            for child in _children_at(node, level - 1):
                if child.point_id not in candidates:
                    candidates[child.point_id] = child
                    new_nodes.append(child)
        if new_nodes:
            ids = np.array([n.point_id for n in new_nodes], dtype=np.int64)
            for pid, sq in zip(ids, tree._sq_dist_many(q64, ids)):
                sq_cache[int(pid)] = float(sq)
        keep_ids = keep_rule(candidates, sq_cache, level)
        frontier = {pid: candidates[pid] for pid in keep_ids}
        level -= 1

    return frontier, sq_cache


def cover_nn(tree: CoverTree, q: np.ndarray, k: int = 1) -> TopKResult:
    """Exact top-k search; prunes a candidate only when the covering radius
    proves no descendant can enter the current top-k."""
    if tree.root is None:
        raise ValueError("cover tree is empty")
    if k < 1:
        raise ValueError("k must be at least 1")
    q64 = np.asarray(q, dtype=np.float64)

    def keep_rule(candidates, sq_cache, level):
        dists = np.sqrt(np.array([sq_cache[pid] for pid in candidates]))
        kth = np.partition(dists, min(k, dists.size) - 1)[min(k, dists.size) - 1]
        bound = kth + 2.0 ** level
        return [pid for pid, d in zip(candidates, dists) if d <= bound]

    frontier, sq_cache = _descend(tree, q64, keep_rule)
    ids = np.array(sorted(frontier), dtype=np.int64)
    sq = np.array([sq_cache[int(pid)] for pid in ids])
    k_eff = min(k, ids.size)
    order = np.lexsort((ids, sq))[:k_eff]
    return TopKResult(ids=ids[order], scores=sq[order], k=k)


def cover_nn_approx(tree: CoverTree, q: np.ndarray, eps: float) -> tuple:
    """(1+eps)-approximate top-1: stop descending once the remaining cover
    radius cannot improve the best candidate by more than a (1+eps) factor.

    Returns ``(point_id, squared_score)``.
    """
    if tree.root is None:
        raise ValueError("cover tree is empty")
    if eps <= 0:
        raise ValueError("eps must be positive")
    q64 = np.asarray(q, dtype=np.float64)

    def keep_rule(candidates, sq_cache, level):
        dists = np.sqrt(np.array([sq_cache[pid] for pid in candidates]))
        bound = dists.min() + 2.0 ** level
        return [pid for pid, d in zip(candidates, dists) if d <= bound]

    def stop_rule(best_dist, level):
        return best_dist >= 2.0 ** (level + 1) * (1.0 + 1.0 / eps)

    frontier, sq_cache = _descend(tree, q64, keep_rule, stop_rule)
    best_pid = min(frontier, key=lambda pid: (sq_cache[pid], pid))
    return best_pid, sq_cache[best_pid]
