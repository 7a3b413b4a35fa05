"""Command-line harness: generate / build / query / bench / experiment /
selftest.

Every run with the same flags and seed writes byte-identical output
(benchmark wall-clock columns appear only behind --timings). Exit codes:
0 ok, 1 test failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from annkit.core import Collection, DistanceKind, TopKResult, brute_force_topk
from annkit.graph import NeighborGraph, build_knn_graph, build_alpha_sng_exact, build_vamana, greedy_search
from annkit.ivf import IvfIndex, build_ivf, ivf_search, route
from annkit.lsh import FamilyKind, HashFamily, LshIndex, build_index as lsh_build, lsh_topk
from annkit.quant import (
    AqCodebook, OpqModel, PqCodebook, aq_adc, aq_distance, aq_encode, aq_train,
    opq_train, pq_adc, pq_adc_distance, pq_encode_all, pq_train,
)
from annkit.sampling import WedgeIndex, build_wedge_index, wedge_topk
from annkit.trees import (
    CoverTree, KdTree, RpTree, cover_build, cover_nn,
    defeatist_search, kd_build, kd_search_exact, rp_build, spill_build,
)
from annkit.harness.container import load_index, save_index
from annkit.harness.experiments import ExperimentReport, benchmark, experiment_coincidence, experiment_instability
from annkit.harness.io import load_vecs, save_vecs
from annkit.harness.synth import Distribution, SyntheticSpec, generate

__all__ = ["main"]

_KINDS = {
    "l2": DistanceKind.L2_SQUARED,
    "ip": DistanceKind.NEG_INNER_PRODUCT,
    "angular": DistanceKind.ANGULAR,
}


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _ints(csv: str) -> list[int]:
    return [int(tok) for tok in csv.split(",") if tok]


def _cmd_generate(args) -> int:
    spec = SyntheticSpec(Distribution(args.dist), m=args.m, d=args.d, seed=args.seed)
    save_vecs(args.out, generate(spec))
    return 0


def _cmd_build(args) -> int:
    X = load_vecs(args.data)
    kind = _KINDS[args.kind]
    if args.index == "kd":
        obj = kd_build(X, args.leaf_capacity)
    elif args.index == "rp":
        obj = [rp_build(X, args.leaf_capacity, seed=args.seed + t) for t in range(args.trees)]
    elif args.index == "spill":
        obj = [spill_build(X, args.leaf_capacity, args.overlap, seed=args.seed + t)
               for t in range(args.trees)]
    elif args.index == "cover":
        obj = cover_build(X)
    elif args.index == "lsh":
        family = HashFamily(FamilyKind(args.family), seed=args.seed, d=X.dim, r=args.radius)
        obj = lsh_build(X, family, args.ell, args.tables, eps=args.eps)
    elif args.index == "knn":
        obj = build_knn_graph(X, args.k, kind)
    elif args.index == "sng":
        obj = build_alpha_sng_exact(X, args.alpha)
    elif args.index == "vamana":
        beam = args.beam if args.beam else 2 * args.degree
        obj = build_vamana(X, alpha=args.alpha, cap=args.degree, beam=beam, seed=args.seed)
    elif args.index == "ivf":
        C = 0 if args.clusters == "auto" else int(args.clusters)
        obj = build_ivf(X, C, kind, max_iters=args.iters, seed=args.seed)
    elif args.index == "pq":
        obj = pq_train(X, args.subspaces, args.codewords, seed=args.seed)
    elif args.index == "opq":
        obj = opq_train(X, args.subspaces, args.codewords, iters=args.iters, seed=args.seed)
    elif args.index == "aq":
        beam = args.beam if args.beam else args.codebooks
        cb, _, _ = aq_train(X, args.codebooks, args.codewords, beam=beam,
                            iters=args.iters, seed=args.seed)
        obj = cb
    elif args.index == "wedge":
        obj = build_wedge_index(X)
    else:
        raise ValueError(f"unknown index kind {args.index}")
    save_index(args.out, obj)
    return 0


def _query_index(obj, X, q, k, args) -> TopKResult:
    if isinstance(obj, KdTree):
        return kd_search_exact(obj, X, q, k)
    if isinstance(obj, list) and obj and isinstance(obj[0], RpTree):
        return defeatist_search(obj, X, q, k)
    if isinstance(obj, CoverTree):
        return cover_nn(obj, q, k)
    if isinstance(obj, LshIndex):
        return lsh_topk(obj, X, q, k, _KINDS[args.kind])
    if isinstance(obj, NeighborGraph):
        entry = None if args.entry < 0 else args.entry
        result, _ = greedy_search(obj, X, q, k, entry=entry, beam=args.beam)
        return result
    if isinstance(obj, IvfIndex):
        ell = args.ell or max(1, obj.model.n_clusters // 10)
        return ivf_search(obj, X, q, k, ell)
    if isinstance(obj, PqCodebook):
        codes = _cached_codes(obj, X)
        tables = pq_adc(obj, q)
        scores = np.array([pq_adc_distance(tables, codes[i]) for i in range(len(X))])
        order = np.lexsort((np.arange(len(X)), scores))[:k]
        return TopKResult(ids=order, scores=scores[order], k=k)
    if isinstance(obj, OpqModel):
        rot = obj.rotation.astype(np.float64)
        rx = Collection((X.vectors.astype(np.float64) @ rot.T).astype(np.float32))
        codes = _cached_codes(obj.codebook, rx)
        tables = pq_adc(obj.codebook, rot @ np.asarray(q, dtype=np.float64))
        scores = np.array([pq_adc_distance(tables, codes[i]) for i in range(len(X))])
        order = np.lexsort((np.arange(len(X)), scores))[:k]
        return TopKResult(ids=order, scores=scores[order], k=k)
    if isinstance(obj, AqCodebook):
        codes = [aq_encode(obj, X.vectors[i]) for i in range(len(X))]
        tables = aq_adc(obj, q)
        scores = np.array([aq_distance(obj, q, c, tables) for c in codes])
        order = np.lexsort((np.arange(len(X)), scores))[:k]
        return TopKResult(ids=order, scores=scores[order], k=k)
    if isinstance(obj, WedgeIndex):
        return wedge_topk(obj, X, q, samples=args.samples, k=k,
                          k_prime=args.k_prime, seed=args.seed)
    raise TypeError(f"cannot query {type(obj).__name__}")


_CODE_CACHE: dict = {}


def _cached_codes(cb: PqCodebook, X: Collection) -> np.ndarray:
    key = id(cb)
    if key not in _CODE_CACHE:
        _CODE_CACHE[key] = pq_encode_all(cb, X)
    return _CODE_CACHE[key]


def _cmd_query(args) -> int:
    X = load_vecs(args.data)
    queries = load_vecs(args.queries)
    obj = load_index(args.index_file, X=X)
    lines = ["query_id,rank,id,score"]
    for qi in range(len(queries)):
        result = _query_index(obj, X, queries.vectors[qi], args.k, args)
        for rank, (pid, score) in enumerate(zip(result.ids, result.scores)):
            lines.append(f"{qi},{rank},{int(pid)},{float(score)!r}")
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def _cmd_bench(args) -> int:
    X = load_vecs(args.data)
    queries = load_vecs(args.queries).vectors
    kind = _KINDS[args.kind]
    if args.target == "ivf":
        C = 0 if args.clusters == "auto" else int(args.clusters)
        index = build_ivf(X, C, kind, seed=args.seed)
        sweep = _ints(args.sweep_l)

        def run(ell, q):
            result = ivf_search(index, X, q, args.k, ell)
            clusters = route(index, q, ell)
            cost = index.model.n_clusters + sum(index.lists[int(c)].size for c in clusters)
            return result, cost

        report = benchmark("ivf", X, queries, args.k, kind, sweep, run, timings=args.timings)
    elif args.target == "vamana":
        G = build_vamana(X, alpha=args.alpha, cap=args.degree, beam=args.beam, seed=args.seed)
        sweep = _ints(args.sweep_beam)

        def run(beam, q):
            result, trace = greedy_search(G, X, q, args.k, beam=beam)
            return result, trace.visited

        report = benchmark("vamana", X, queries, args.k, kind, sweep, run, timings=args.timings)
    elif args.target == "forest":
        sweep = _ints(args.sweep_trees)
        forest = [rp_build(X, args.leaf_capacity, seed=args.seed + t) for t in range(max(sweep))]

        def run(n_trees, q):
            result = defeatist_search(forest[:n_trees], X, q, args.k)
            leaves = set()
            for tree in forest[:n_trees]:
                from annkit.trees.rp import _route_to_leaf

                leaves.update(_route_to_leaf(tree, q).tolist())
            return result, len(leaves)

        report = benchmark("forest", X, queries, args.k, kind, sweep, run, timings=args.timings)
    elif args.target == "boundedme":
        from annkit.sampling import boundedme_topk

        sweep = [float(tok) for tok in args.sweep_eps.split(",") if tok]

        def run(eps, q):
            result, diag = boundedme_topk(X, q, args.k, eps=eps, delta=args.delta,
                                          seed=args.seed)
            return result, diag["products"]

        report = benchmark("boundedme", X, queries, args.k,
                           DistanceKind.NEG_INNER_PRODUCT, sweep, run, timings=args.timings)
    else:
        raise ValueError(f"unknown bench target {args.target}")
    _emit(report.to_csv(), args.out)
    return 0


def _cmd_experiment(args) -> int:
    dist = Distribution(args.dist)
    if args.what == "coincidence":
        report = experiment_coincidence(dist, m=args.m, dims=_ints(args.dims), seed=args.seed)
    elif args.what == "instability":
        report = experiment_instability(dist, m=args.m, dims=_ints(args.dims),
                                        n_queries=args.queries, seed=args.seed)
    elif args.what == "sketch":
        report = _sketch_statistics(args)
    else:
        raise ValueError(f"unknown experiment {args.what}")
    _emit(report.to_csv(), args.out)
    return 0


def _sketch_statistics(args) -> "ExperimentReport":
    """Per-seed (estimate, truth) rows for the unbiased sketch estimators."""
    from annkit.sketch import JlSketcher, ThresholdSketcher, jl_ip_estimate, jl_project, threshold_ip_estimate

    rng = np.random.default_rng(args.seed)
    u = rng.standard_normal(args.d)
    v = rng.standard_normal(args.d)
    truth = float(u @ v)
    report = ExperimentReport(columns=["sketch", "d", "out_dim", "seed", "estimate", "truth"])
    for s in range(args.trials):
        if args.sketch == "jl":
            sk = JlSketcher(out_dim=args.out_dim, seed=s)
            est = jl_ip_estimate(jl_project(sk, u), jl_project(sk, v))
        else:
            ts = ThresholdSketcher(out_dim=args.out_dim, seed=s)
            est = threshold_ip_estimate(ts.sketch(u), ts.sketch(v))
        report.add(args.sketch, args.d, args.out_dim, s, float(est), truth)
    return report


def _cmd_selftest(args) -> int:
    failures = []
    rng = np.random.default_rng(args.seed)

    def check(label, ok):
        print(f"[selftest] {label}: {'PASS' if ok else 'FAIL'}")
        if not ok:
            failures.append(label)

    X = Collection(rng.standard_normal((300, 8)).astype(np.float32))
    queries = rng.standard_normal((20, 8)).astype(np.float32)

    tree = kd_build(X, 4)
    ok = all(
        np.array_equal(kd_search_exact(tree, X, q, 5).ids,
                       brute_force_topk(X, q, 5, DistanceKind.L2_SQUARED).ids)
        for q in queries
    )
    check("kd search matches oracle", ok)

    ct = cover_build(X)
    ok = all(
        np.array_equal(cover_nn(ct, q, 5).ids,
                       brute_force_topk(X, q, 5, DistanceKind.L2_SQUARED).ids)
        for q in queries
    )
    check("cover search matches oracle", ok)

    cb = pq_train(X, 2, 8, seed=1)
    ok = True
    for q in queries[:5]:
        code = pq_encode_all(cb, X)[0]
        adc = pq_adc_distance(pq_adc(cb, q), code)
        from annkit.quant import pq_decode

        direct = float(np.sum((q.astype(np.float64) - pq_decode(cb, code)) ** 2))
        ok = ok and abs(adc - direct) <= 1e-5 * max(direct, 1e-9)
    check("pq adc identity", ok)

    fam = HashFamily(FamilyKind.HYPERPLANE, seed=3, d=8)
    i1 = lsh_build(X, fam, 2, 3)
    i2 = lsh_build(X, HashFamily(FamilyKind.HYPERPLANE, seed=3, d=8), 2, 3)
    check("lsh deterministic rebuild", all(a == b for a, b in zip(i1.tables, i2.tables)))

    idx = build_ivf(X, 16, seed=2)
    q = queries[0]
    check(
        "ivf full sweep equals oracle",
        np.array_equal(ivf_search(idx, X, q, 5, 16).ids,
                       brute_force_topk(X, q, 5, DistanceKind.L2_SQUARED).ids),
    )

    if failures:
        print(f"[selftest] {len(failures)} failure(s)")
        return 1
    print("[selftest] all checks passed")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="annkit", description=__doc__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="RNG seed")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_parser(name: str, **kwargs):
        return sub.add_parser(name, parents=[common], **kwargs)

    p = add_parser("generate", help="write a synthetic .vecs file")
    p.add_argument("--dist", choices=[d.value for d in Distribution], default="gaussian")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_generate)

    p = add_parser("build", help="build an index container from a .vecs file")
    p.add_argument("--index", required=True,
                   choices=["kd", "rp", "spill", "cover", "lsh", "knn", "sng",
                            "vamana", "ivf", "pq", "opq", "aq", "wedge"])
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--kind", choices=sorted(_KINDS), default="l2")
    p.add_argument("--leaf-capacity", type=int, default=32)
    p.add_argument("--trees", type=int, default=1)
    p.add_argument("--alpha", type=float, default=1.2, help="prune slack for sng/vamana")
    p.add_argument("--overlap", type=float, default=0.1, help="spill tree overlap fraction")
    p.add_argument("--family", choices=[f.value for f in FamilyKind], default="hyperplane")
    p.add_argument("--ell", type=int, default=4)
    p.add_argument("--tables", type=int, default=8)
    p.add_argument("--radius", type=float, default=1.0)
    p.add_argument("--eps", type=float, default=0.5)
    p.add_argument("--k", type=int, default=8)
    p.add_argument("--degree", type=int, default=32)
    p.add_argument("--beam", type=int, default=0, help="0 = twice the degree cap")
    p.add_argument("--clusters", default="auto")
    p.add_argument("--iters", type=int, default=10)
    p.add_argument("--subspaces", type=int, default=2)
    p.add_argument("--codebooks", type=int, default=2)
    p.add_argument("--codewords", type=int, default=16)
    p.set_defaults(func=_cmd_build)

    p = add_parser("query", help="run top-k queries against a saved index")
    p.add_argument("--index-file", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--kind", choices=sorted(_KINDS), default="l2")
    p.add_argument("--beam", type=int, default=None)
    p.add_argument("--entry", type=int, default=-1, help="graph entry id; -1 = stored medoid")
    p.add_argument("--ell", type=int, default=0)
    p.add_argument("--samples", type=int, default=2048)
    p.add_argument("--k-prime", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_query)

    p = add_parser("bench", help="recall-vs-cost sweeps")
    p.add_argument("target", choices=["ivf", "vamana", "forest", "boundedme"])
    p.add_argument("--data", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--kind", choices=sorted(_KINDS), default="l2")
    p.add_argument("--clusters", default="auto")
    p.add_argument("--sweep-l", default="1,2,4,8")
    p.add_argument("--alpha", type=float, default=1.2)
    p.add_argument("--degree", type=int, default=32)
    p.add_argument("--beam", type=int, default=64)
    p.add_argument("--sweep-beam", default="16,32,64")
    p.add_argument("--leaf-capacity", type=int, default=32)
    p.add_argument("--sweep-trees", default="1,2,4,8")
    p.add_argument("--sweep-eps", default="0.1,0.2,0.4")
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--timings", action="store_true",
                   help="append wall-clock columns (breaks byte reproducibility)")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_bench)

    p = add_parser("experiment", help="desk-scale phenomenon reproductions")
    p.add_argument("what", choices=["coincidence", "instability", "sketch"])
    p.add_argument("--dist", choices=[d.value for d in Distribution], default="gaussian")
    p.add_argument("--m", type=int, default=10_000)
    p.add_argument("--dims", default="4,16,64,256")
    p.add_argument("--queries", type=int, default=100)
    p.add_argument("--sketch", choices=["jl", "threshold"], default="jl")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--d", type=int, default=32)
    p.add_argument("--out-dim", type=int, default=16)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_experiment)

    p = add_parser("selftest", help="fast invariant checks, exit 0 on pass")
    p.set_defaults(func=_cmd_selftest)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
