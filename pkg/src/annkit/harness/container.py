"""Tagged, versioned binary envelope shared by every index family.

Layout: magic ``AKIX``, u16 version, u16 family tag, a compact JSON meta
block, then named arrays (dtype string, shape, raw little-endian bytes).
Writing is fully deterministic: meta keys are sorted and arrays are
emitted in sorted name order. PQ codes are packed little-endian with
ceil(log2 C) bits rounded up to whole bytes per subspace.
"""

from __future__ import annotations

import json
import math
import struct
from typing import Optional

import numpy as np

from annkit.core import Collection, DistanceKind
from annkit.graph import NeighborGraph
from annkit.ivf import IvfIndex, KMeansKind, KMeansModel
from annkit.lsh import FamilyKind, HashFamily, LshIndex
from annkit.quant import AqCodebook, OpqModel, PqCodebook
from annkit.sampling import AliasTable, WedgeIndex
from annkit.sketch import AsymSketch, JlSketcher, ThresholdSketch
from annkit.trees.cover import CoverNode, CoverTree
from annkit.trees.kd import KdNode, KdTree
from annkit.trees.rp import ProjNode, RpTree, SpillTree

__all__ = ["save_index", "load_index", "pack_pq_codes", "unpack_pq_codes"]

_MAGIC = b"AKIX"
_VERSION = 1

_TAGS = {
    "kd": 1,
    "rp_forest": 2,
    "spill_forest": 3,
    "cover": 4,
    "lsh": 5,
    "graph": 6,
    "ivf": 7,
    "pq": 8,
    "opq": 9,
    "aq": 10,
    "wedge": 11,
    "jl": 12,
    "asym_set": 13,
    "threshold_set": 14,
}
_TAG_NAMES = {v: k for k, v in _TAGS.items()}


def _write_blob(fh, family: str, meta: dict, arrays: dict) -> None:
    fh.write(_MAGIC)
    fh.write(struct.pack("<HH", _VERSION, _TAGS[family]))
    meta_bytes = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode()
    fh.write(struct.pack("<I", len(meta_bytes)))
    fh.write(meta_bytes)
    fh.write(struct.pack("<I", len(arrays)))
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        arr = arr.astype(arr.dtype.newbyteorder("<"))
        name_b = name.encode()
        dtype_b = arr.dtype.str.encode()
        fh.write(struct.pack("<H", len(name_b)))
        fh.write(name_b)
        fh.write(struct.pack("<H", len(dtype_b)))
        fh.write(dtype_b)
        fh.write(struct.pack("<B", arr.ndim))
        for dim in arr.shape:
            fh.write(struct.pack("<Q", dim))
        fh.write(arr.tobytes())


def _read_blob(path) -> tuple[str, dict, dict]:
    raw = open(path, "rb").read()
    if raw[:4] != _MAGIC:
        raise ValueError(f"{path}: not an index container")
    version, tag = struct.unpack_from("<HH", raw, 4)
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported container version {version}")
    if tag not in _TAG_NAMES:
        raise ValueError(f"{path}: unknown family tag {tag}")
    offset = 8
    (meta_len,) = struct.unpack_from("<I", raw, offset)
    offset += 4
    meta = json.loads(raw[offset:offset + meta_len])
    offset += meta_len
    (n_arrays,) = struct.unpack_from("<I", raw, offset)
    offset += 4
    arrays = {}
    for _ in range(n_arrays):
        (name_len,) = struct.unpack_from("<H", raw, offset)
        offset += 2
        name = raw[offset:offset + name_len].decode()
        offset += name_len
        (dtype_len,) = struct.unpack_from("<H", raw, offset)
        offset += 2
        dtype = np.dtype(raw[offset:offset + dtype_len].decode())
        offset += dtype_len
        (ndim,) = struct.unpack_from("<B", raw, offset)
        offset += 1
        shape = []
        for _ in range(ndim):
            (dim,) = struct.unpack_from("<Q", raw, offset)
            offset += 8
            shape.append(dim)
        count = int(np.prod(shape)) if shape else 1
        arrays[name] = np.frombuffer(raw, dtype=dtype, count=count, offset=offset).reshape(shape).copy()
        offset += count * dtype.itemsize
    return _TAG_NAMES[tag], meta, arrays


# ---------------------------------------------------------------------------
# PQ code packing


def pack_pq_codes(codes: np.ndarray, n_codewords: int) -> np.ndarray:
    """(m, L) int codes -> (m, L * bytes_per) uint8, little-endian per code."""
    bits = max(1, math.ceil(math.log2(n_codewords)))
    nbytes = (bits + 7) // 8
    codes = np.asarray(codes, dtype=np.uint64)
    m, L = codes.shape
    out = np.empty((m, L * nbytes), dtype=np.uint8)
    for b in range(nbytes):
        out[:, b::nbytes] = ((codes >> np.uint64(8 * b)) & np.uint64(0xFF)).astype(np.uint8)
    return out


def unpack_pq_codes(packed: np.ndarray, n_codewords: int, n_subspaces: int) -> np.ndarray:
    bits = max(1, math.ceil(math.log2(n_codewords)))
    nbytes = (bits + 7) // 8
    packed = np.asarray(packed, dtype=np.uint8)
    m = packed.shape[0]
    codes = np.zeros((m, n_subspaces), dtype=np.int64)
    for b in range(nbytes):
        codes |= packed[:, b::nbytes].astype(np.int64) << (8 * b)
    return codes


# ---------------------------------------------------------------------------
# per-family encoders: object -> (meta, arrays); decoders invert them


def _flatten_kd(root: KdNode):
    axes, splits, lefts, rights, leaf_ptr = [], [], [], [], []
    flat_ids = []

    def walk(node: KdNode) -> int:
        idx = len(axes)
        axes.append(node.axis)
        splits.append(node.split_value)
        lefts.append(-1)
        rights.append(-1)
        if node.is_leaf:
            leaf_ptr.append((idx, len(flat_ids), len(flat_ids) + node.ids.size))
            flat_ids.extend(node.ids.tolist())
        return idx

    def recurse(node: KdNode) -> int:
        idx = walk(node)
        if not node.is_leaf:
            lefts[idx] = recurse(node.left)
            rights[idx] = recurse(node.right)
        return idx

    recurse(root)
    starts = np.full(len(axes), -1, dtype=np.int64)
    ends = np.full(len(axes), -1, dtype=np.int64)
    for idx, s, e in leaf_ptr:
        starts[idx], ends[idx] = s, e
    return {
        "axis": np.array(axes, dtype=np.int64),
        "split": np.array(splits, dtype=np.float64),
        "left": np.array(lefts, dtype=np.int64),
        "right": np.array(rights, dtype=np.int64),
        "leaf_start": starts,
        "leaf_end": ends,
        "leaf_ids": np.array(flat_ids, dtype=np.int64),
    }


def _rebuild_kd(arrays) -> KdNode:
    def build(idx: int) -> KdNode:
        if arrays["leaf_start"][idx] >= 0:
            s, e = arrays["leaf_start"][idx], arrays["leaf_end"][idx]
            return KdNode(ids=arrays["leaf_ids"][s:e].copy())
        node = KdNode(axis=int(arrays["axis"][idx]), split_value=float(arrays["split"][idx]))
        node.left = build(int(arrays["left"][idx]))
        node.right = build(int(arrays["right"][idx]))
        return node

    return build(0)


def _flatten_proj_tree(root: ProjNode, prefix: str, arrays: dict) -> None:
    dirs, thresholds, lefts, rights = [], [], [], []
    sizes, lc, rc = [], [], []
    starts, ends, flat_ids = [], [], []

    def recurse(node: ProjNode) -> int:
        idx = len(thresholds)
        thresholds.append(node.threshold)
        sizes.append(node.size)
        lc.append(node.left_count)
        rc.append(node.right_count)
        lefts.append(-1)
        rights.append(-1)
        if node.is_leaf:
            dirs.append(np.zeros(0))
            starts.append(len(flat_ids))
            ends.append(len(flat_ids) + node.ids.size)
            flat_ids.extend(node.ids.tolist())
        else:
            dirs.append(node.direction)
            starts.append(-1)
            ends.append(-1)
            lefts[idx] = recurse(node.left)
            rights[idx] = recurse(node.right)
        return idx

    recurse(root)
    dim = max((d.size for d in dirs), default=0)
    dir_mat = np.zeros((len(dirs), dim))
    for i, d in enumerate(dirs):
        if d.size:
            dir_mat[i] = d
    arrays[f"{prefix}dir"] = dir_mat
    arrays[f"{prefix}threshold"] = np.array(thresholds, dtype=np.float64)
    arrays[f"{prefix}left"] = np.array(lefts, dtype=np.int64)
    arrays[f"{prefix}right"] = np.array(rights, dtype=np.int64)
    arrays[f"{prefix}size"] = np.array(sizes, dtype=np.int64)
    arrays[f"{prefix}left_count"] = np.array(lc, dtype=np.int64)
    arrays[f"{prefix}right_count"] = np.array(rc, dtype=np.int64)
    arrays[f"{prefix}leaf_start"] = np.array(starts, dtype=np.int64)
    arrays[f"{prefix}leaf_end"] = np.array(ends, dtype=np.int64)
    arrays[f"{prefix}leaf_ids"] = np.array(flat_ids, dtype=np.int64)


def _rebuild_proj_tree(prefix: str, arrays: dict) -> ProjNode:
    def build(idx: int) -> ProjNode:
        if arrays[f"{prefix}leaf_start"][idx] >= 0:
            s, e = arrays[f"{prefix}leaf_start"][idx], arrays[f"{prefix}leaf_end"][idx]
            return ProjNode(ids=arrays[f"{prefix}leaf_ids"][s:e].copy(),
                            size=int(arrays[f"{prefix}size"][idx]))
        node = ProjNode(
            direction=arrays[f"{prefix}dir"][idx].copy(),
            threshold=float(arrays[f"{prefix}threshold"][idx]),
            size=int(arrays[f"{prefix}size"][idx]),
            left_count=int(arrays[f"{prefix}left_count"][idx]),
            right_count=int(arrays[f"{prefix}right_count"][idx]),
        )
        node.left = build(int(arrays[f"{prefix}left"][idx]))
        node.right = build(int(arrays[f"{prefix}right"][idx]))
        return node

    return build(0)


def _encode(obj):
    if isinstance(obj, KdTree):
        return "kd", {"leaf_capacity": obj.leaf_capacity, "dim": obj.dim, "size": obj.size}, _flatten_kd(obj.root)

    if isinstance(obj, (list, tuple)) and obj and isinstance(obj[0], RpTree):
        family = "spill_forest" if isinstance(obj[0], SpillTree) else "rp_forest"
        arrays: dict = {}
        meta: dict = {"n_trees": len(obj), "dim": obj[0].dim,
                      "leaf_capacity": obj[0].leaf_capacity,
                      "seeds": [t.seed for t in obj]}
        if family == "spill_forest":
            meta["alphas"] = [t.alpha for t in obj]
        for i, tree in enumerate(obj):
            _flatten_proj_tree(tree.root, f"t{i}_", arrays)
        return family, meta, arrays

    if isinstance(obj, CoverTree):
        points, levels, parents = [], [], []

        def walk(node: CoverNode, parent: int) -> None:
            my = len(points)
            points.append(node.point_id)
            levels.append(node.level)
            parents.append(parent)
            for lvl in sorted(node.children):
                for child in node.children[lvl]:
                    walk(child, my)

        if obj.root is not None:
            walk(obj.root, -1)
        meta = {"root_level": obj.root_level, "size": obj.size}
        return "cover", meta, {
            "point": np.array(points, dtype=np.int64),
            "level": np.array(levels, dtype=np.int64),
            "parent": np.array(parents, dtype=np.int64),
        }

    if isinstance(obj, LshIndex):
        keys, offsets, flat = [], [0], []
        for table in obj.tables:
            for key in sorted(table):
                keys.append(key)
                flat.extend(table[key])
                offsets.append(len(flat))
        table_sizes = [len(t) for t in obj.tables]
        meta = {
            "kind": obj.family.kind.value,
            "seed": obj.family.seed,
            "d": obj.family.d,
            "r": obj.family.r,
            "ell": obj.ell,
            "big_l": obj.big_l,
            "eps": obj.eps,
            "table_sizes": table_sizes,
        }
        return "lsh", meta, {
            "keys": np.array(keys, dtype=np.uint64),
            "offsets": np.array(offsets, dtype=np.int64),
            "ids": np.array(flat, dtype=np.int64),
        }

    if isinstance(obj, NeighborGraph):
        offsets = np.zeros(len(obj) + 1, dtype=np.int64)
        for i, adj in enumerate(obj.adjacency):
            offsets[i + 1] = offsets[i] + adj.size
        flat = np.concatenate(obj.adjacency) if len(obj) else np.array([], dtype=np.int64)
        meta = {
            "directed": obj.directed,
            "entry": obj.entry,
            "kind": obj.kind.value,
            "alpha": obj.alpha,
            "degree_cap": obj.degree_cap,
            "construction": obj.construction,
        }
        return "graph", meta, {"offsets": offsets, "ids": flat.astype(np.int64)}

    if isinstance(obj, IvfIndex):
        meta = {
            "kind": obj.kind.value,
            "kmeans_kind": obj.model.kind.value,
            "objective_trace": obj.model.objective_trace,
        }
        return "ivf", meta, {
            "centroids": obj.model.centroids.astype(np.float32),
            "assignment": obj.model.assignment.astype(np.int64),
        }

    if isinstance(obj, PqCodebook):
        meta = {"L": obj.n_subspaces, "C": obj.n_codewords, "d_sub": obj.sub_dim}
        return "pq", meta, {"codewords": obj.codewords.astype(np.float32)}

    if isinstance(obj, OpqModel):
        meta = {"L": obj.codebook.n_subspaces, "C": obj.codebook.n_codewords}
        return "opq", meta, {
            "rotation": obj.rotation.astype(np.float32),
            "codewords": obj.codebook.codewords.astype(np.float32),
        }

    if isinstance(obj, AqCodebook):
        meta = {"L": obj.n_codebooks, "C": obj.n_codewords, "beam": obj.beam_width}
        return "aq", meta, {"codewords": obj.codewords.astype(np.float32)}

    if isinstance(obj, WedgeIndex):
        probs = np.concatenate([t.prob for t in obj.tables]) if obj.tables else np.zeros(0)
        aliases = np.concatenate([t.alias for t in obj.tables]) if obj.tables else np.zeros(0, dtype=np.int64)
        lengths = np.array([len(t) for t in obj.tables], dtype=np.int64)
        sums = np.array([t.weight_sum for t in obj.tables])
        meta = {"dim": obj.dim}
        return "wedge", meta, {
            "dims": obj.dims.astype(np.int64),
            "column_sums": obj.column_sums.astype(np.float64),
            "prob": probs,
            "alias": aliases.astype(np.int64),
            "lengths": lengths,
            "weight_sums": sums,
        }

    if isinstance(obj, JlSketcher):
        return "jl", {"out_dim": obj.out_dim, "seed": obj.seed}, {}

    if isinstance(obj, (list, tuple)) and obj and isinstance(obj[0], AsymSketch):
        nz_offsets = [0]
        nz_flat = []
        has_nz = []
        has_lower = []
        for sk in obj:
            has_nz.append(sk.nz is not None)
            has_lower.append(sk.lower is not None)
            if sk.nz is not None:
                nz_flat.extend(sk.nz.tolist())
            nz_offsets.append(len(nz_flat))
        buckets = obj[0].buckets
        uppers = np.stack([sk.upper for sk in obj])
        lowers = np.stack([sk.lower if sk.lower is not None else np.zeros(buckets)
                           for sk in obj])
        meta = {
            "h": obj[0].h,
            "seed": obj[0].seed,
            "dims": [sk.dim for sk in obj],
            "has_nz": has_nz,
            "has_lower": has_lower,
        }
        return "asym_set", meta, {
            "upper": uppers,
            "lower": lowers,
            "nz": np.array(nz_flat, dtype=np.int64),
            "nz_offsets": np.array(nz_offsets, dtype=np.int64),
        }

    if isinstance(obj, (list, tuple)) and obj and isinstance(obj[0], ThresholdSketch):
        offsets = [0]
        idx_flat = []
        val_flat = []
        for sk in obj:
            idx_flat.extend(sk.indices.tolist())
            val_flat.extend(sk.values.tolist())
            offsets.append(len(idx_flat))
        meta = {"out_dim": obj[0].out_dim, "norms": [sk.norm_sq for sk in obj]}
        return "threshold_set", meta, {
            "indices": np.array(idx_flat, dtype=np.int64),
            "values": np.array(val_flat, dtype=np.float64),
            "offsets": np.array(offsets, dtype=np.int64),
        }

    raise TypeError(f"no container encoding for {type(obj).__name__}")


def save_index(path, obj) -> None:
    family, meta, arrays = _encode(obj)
    with open(path, "wb") as fh:
        _write_blob(fh, family, meta, arrays)


def load_index(path, X: Optional[Collection] = None):
    """Load an index; tree families that keep the collection inside
    (cover trees) need ``X`` supplied."""
    family, meta, arrays = _read_blob(path)

    if family == "kd":
        return KdTree(root=_rebuild_kd(arrays), leaf_capacity=meta["leaf_capacity"],
                      dim=meta["dim"], size=meta["size"])

    if family in ("rp_forest", "spill_forest"):
        trees = []
        for i in range(meta["n_trees"]):
            root = _rebuild_proj_tree(f"t{i}_", arrays)
            if family == "spill_forest":
                trees.append(SpillTree(root=root, leaf_capacity=meta["leaf_capacity"],
                                       dim=meta["dim"], seed=meta["seeds"][i],
                                       alpha=meta["alphas"][i]))
            else:
                trees.append(RpTree(root=root, leaf_capacity=meta["leaf_capacity"],
                                    dim=meta["dim"], seed=meta["seeds"][i]))
        return trees

    if family == "cover":
        if X is None:
            raise ValueError("cover tree loading requires the collection")
        tree = CoverTree(X=X)
        nodes = [CoverNode(point_id=int(p), level=int(lv))
                 for p, lv in zip(arrays["point"], arrays["level"])]
        for i, parent in enumerate(arrays["parent"]):
            if parent >= 0:
                nodes[int(parent)].attach(nodes[i], nodes[i].level)
        tree.root = nodes[0] if nodes else None
        tree.root_level = meta["root_level"]
        tree.size = meta["size"]
        return tree

    if family == "lsh":
        fam = HashFamily(FamilyKind(meta["kind"]), seed=meta["seed"], d=meta["d"], r=meta["r"])
        index = LshIndex(family=fam, ell=meta["ell"], big_l=meta["big_l"], tables=[], eps=meta["eps"])
        keys, offsets, ids = arrays["keys"], arrays["offsets"], arrays["ids"]
        pos = 0
        for size in meta["table_sizes"]:
            table = {}
            for j in range(size):
                start, end = offsets[pos], offsets[pos + 1]
                table[int(keys[pos])] = ids[start:end].tolist()
                pos += 1
            index.tables.append(table)
        return index

    if family == "graph":
        offsets, ids = arrays["offsets"], arrays["ids"]
        adjacency = [ids[offsets[i]:offsets[i + 1]].copy() for i in range(offsets.size - 1)]
        return NeighborGraph(
            adjacency=adjacency,
            directed=meta["directed"],
            entry=meta["entry"],
            kind=DistanceKind(meta["kind"]),
            alpha=meta["alpha"],
            degree_cap=meta["degree_cap"],
            construction=meta["construction"],
        )

    if family == "ivf":
        model = KMeansModel(
            centroids=arrays["centroids"],
            assignment=arrays["assignment"],
            objective_trace=meta["objective_trace"],
            kind=KMeansKind(meta["kmeans_kind"]),
        )
        lists = [np.flatnonzero(model.assignment == c).astype(np.int64)
                 for c in range(model.centroids.shape[0])]
        return IvfIndex(model=model, lists=lists, kind=DistanceKind(meta["kind"]))

    if family == "pq":
        return PqCodebook(codewords=arrays["codewords"])

    if family == "opq":
        return OpqModel(rotation=arrays["rotation"], codebook=PqCodebook(codewords=arrays["codewords"]))

    if family == "aq":
        return AqCodebook(codewords=arrays["codewords"], beam_width=meta["beam"])

    if family == "wedge":
        tables = []
        pos = 0
        for length, wsum in zip(arrays["lengths"], arrays["weight_sums"]):
            tables.append(AliasTable(prob=arrays["prob"][pos:pos + length].copy(),
                                     alias=arrays["alias"][pos:pos + length].copy(),
                                     weight_sum=float(wsum)))
            pos += length
        return WedgeIndex(dims=arrays["dims"], tables=tables,
                          column_sums=arrays["column_sums"], dim=meta["dim"])

    if family == "jl":
        return JlSketcher(out_dim=meta["out_dim"], seed=meta["seed"])

    if family == "asym_set":
        sketches = []
        offsets = arrays["nz_offsets"]
        for i, dim in enumerate(meta["dims"]):
            nz = None
            if meta["has_nz"][i]:
                nz = arrays["nz"][offsets[i]:offsets[i + 1]].copy()
            lower = arrays["lower"][i].copy() if meta["has_lower"][i] else None
            sketches.append(AsymSketch(nz=nz, upper=arrays["upper"][i].copy(),
                                       lower=lower, h=meta["h"], seed=meta["seed"], dim=dim))
        return sketches

    if family == "threshold_set":
        offsets = arrays["offsets"]
        return [
            ThresholdSketch(
                indices=arrays["indices"][offsets[i]:offsets[i + 1]].copy(),
                values=arrays["values"][offsets[i]:offsets[i + 1]].copy(),
                norm_sq=norm,
                out_dim=meta["out_dim"],
            )
            for i, norm in enumerate(meta["norms"])
        ]

    raise ValueError(f"unhandled family {family}")
