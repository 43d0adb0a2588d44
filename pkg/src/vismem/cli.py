"""Command-line surface: one binary, one subcommand per operation.

Every run echoes its resolved configuration (JSON, on stderr) so results
are reproducible from logs alone. Exit codes: 0 success, 1 data/runtime
error (single-line diagnostic on stderr), 2 usage error.

A --config JSON file may supply defaults for any flag; explicit
command-line flags win over the file, which wins over built-in defaults.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import analysis, fixtures, packio, prune, reporting, search, taxonomy
from .classify import SCHEMES, VoteConfig, evaluate as _evaluate, sweep as _sweep
from .errors import VismemError
from .store import MemoryEntry, QuerySet, VisualMemory


def _add_common(p, *, memory=False, queries=False, vote=False, out=False, seed=False):
    if memory:
        p.add_argument("--memory", required=True, help="memory pack directory")
    if queries:
        p.add_argument("--queries", required=True, help="labeled query pack directory")
    if vote:
        p.add_argument("--scheme", choices=SCHEMES, default="rank")
        p.add_argument("--k", type=int, default=100, help="neighbors to aggregate")
        p.add_argument("--alpha", type=float, default=2.0, help="rank-voting offset")
        p.add_argument("--tau", type=float, default=0.07, help="softmax temperature")
        p.add_argument("--xi", type=float, default=1.0, help="distance-voting exponent")
    if out:
        p.add_argument("--out", help="write structured records here")
    if seed:
        p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("table", "records"), default="table")
    p.add_argument("--threads", type=int,
                   default=int(os.environ.get("VISMEM_THREADS", "0")),
                   help="worker bound for the scan kernels (0 = library default)")
    p.add_argument("--config", help="JSON file of flag defaults")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vismem",
                                 description="retrieval-based visual-memory engine")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="build a memory pack from an embedding pack")
    p.add_argument("--pack", required=True)
    p.add_argument("--out", required=True)
    _add_common(p)

    p = sub.add_parser("insert", help="insert an embedding pack into a memory")
    p.add_argument("--pack", required=True)
    p.add_argument("--out", required=True)
    _add_common(p, memory=True)

    p = sub.add_parser("remove", help="remove entries by id (exact unlearning)")
    p.add_argument("--ids", required=True, help="file with one entry id per line")
    p.add_argument("--out", required=True)
    _add_common(p, memory=True)

    p = sub.add_parser("subsample", help="per-class seeded subsample")
    p.add_argument("--per-class", type=int, required=True)
    p.add_argument("--out", required=True)
    _add_common(p, memory=True, seed=True)

    p = sub.add_parser("index", help="build the partitioned ANN index")
    p.add_argument("--partitions", type=int)
    p.add_argument("--out", required=True, help="index.bin path")
    _add_common(p, memory=True, seed=True)

    p = sub.add_parser("query", help="retrieve nearest neighbors for each query")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--index", help="use this index.bin instead of the exact scan")
    p.add_argument("--probes", type=int)
    _add_common(p, memory=True, queries=True, out=True)

    p = sub.add_parser("eval", help="top-1 accuracy for every k in [1, --k]")
    p.add_argument("--exclude-self", action="store_true")
    p.add_argument("--index")
    p.add_argument("--probes", type=int)
    p.add_argument("--use-reliability", action="store_true",
                   help="apply stored per-entry gamma weights")
    _add_common(p, memory=True, queries=True, vote=True, out=True)

    p = sub.add_parser("sweep", help="max-over-k accuracy across a hyperparameter grid")
    p.add_argument("--param", choices=("alpha", "tau", "xi", ""), default="")
    p.add_argument("--values", default="", help="comma-separated grid")
    p.add_argument("--k-max", type=int, default=100)
    p.add_argument("--exclude-self", action="store_true")
    p.add_argument("--scheme", choices=SCHEMES, default="rank")
    _add_common(p, memory=True, queries=True, out=True)

    p = sub.add_parser("prune-estimate", help="estimate per-entry wrong-vote counts")
    p.add_argument("--k-retrieve", type=int, default=prune.DEFAULT_K_RETRIEVE)
    p.add_argument("--charge-rule", choices=prune.CHARGE_RULES, default="both")
    p.add_argument("--out", required=True, help="reliability.jsonl path")
    _add_common(p, memory=True, vote=True)

    p = sub.add_parser("prune", help="apply hard or soft pruning from a report")
    p.add_argument("--report", required=True)
    p.add_argument("--mode", choices=("hard", "soft"), required=True)
    p.add_argument("--threshold", type=int, default=prune.DEFAULT_THRESHOLD)
    p.add_argument("--c", type=float, default=prune.DEFAULT_C)
    p.add_argument("--d", type=float, default=prune.DEFAULT_D)
    p.add_argument("--out", required=True)
    _add_common(p, memory=True)

    p = sub.add_parser("compare-pruning", help="{none,hard,soft} x scheme accuracy table")
    p.add_argument("--k-max", type=int, default=100)
    p.add_argument("--threshold", type=int, default=prune.DEFAULT_THRESHOLD)
    p.add_argument("--c", type=float, default=prune.DEFAULT_C)
    p.add_argument("--d", type=float, default=prune.DEFAULT_D)
    _add_common(p, memory=True, queries=True, out=True)

    p = sub.add_parser("hierarchy", help="hierarchical label prediction for each query")
    p.add_argument("--tree", required=True, help="taxonomy path file")
    p.add_argument("--skip-empty", action="store_true")
    _add_common(p, memory=True, queries=True, out=True, seed=True)

    p = sub.add_parser("granularity", help="accuracy per level vs exemplar-count ladder")
    p.add_argument("--tree", required=True)
    p.add_argument("--target-leaf", required=True, help="'/'-joined root-to-leaf path")
    p.add_argument("--pool", required=True, help="pack of target exemplars to insert")
    p.add_argument("--ladder", default="0,1,5,10,25,50")
    _add_common(p, memory=True, queries=True, out=True, seed=True)

    p = sub.add_parser("reliability", help="per-neighbor-index accuracy curve + log fit")
    p.add_argument("--k-max", type=int, default=100)
    p.add_argument("--exclude-self", action="store_true")
    _add_common(p, memory=True, queries=True, out=True)

    p = sub.add_parser("hitrate", help="P(true label within first k neighbors)")
    p.add_argument("--k-max", type=int, default=100)
    p.add_argument("--exclude-self", action="store_true")
    _add_common(p, memory=True, queries=True, out=True)

    p = sub.add_parser("calibrate", help="accuracy binned by plurality-count confidence")
    p.add_argument("--bin-width", type=int, default=10)
    p.add_argument("--exclude-self", action="store_true")
    _add_common(p, memory=True, queries=True, out=True)

    p = sub.add_parser("fit-scaling", help="log-log linear fit of (size, error) points")
    p.add_argument("--points", required=True,
                   help="comma-separated size:error pairs, or @file with one pair per line")
    _add_common(p, out=True)

    p = sub.add_parser("ood-stats", help="per-pack distance statistics to first k neighbors")
    p.add_argument("--packs", required=True, help="name=dir pairs, comma-separated")
    p.add_argument("--k", type=int, default=100)
    _add_common(p, memory=True, out=True)

    p = sub.add_parser("residual", help="primary + residual neighbor sets per query")
    p.add_argument("--k", type=int, default=5)
    _add_common(p, memory=True, queries=True, out=True)

    p = sub.add_parser("gen-fixture", help="generate a synthetic embedding pack")
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--per-class", default="100",
                   help="entries per class: one int or comma-separated per-class counts")
    p.add_argument("--dims", type=int, default=64)
    p.add_argument("--spread", type=float, default=0.05)
    p.add_argument("--noise-fraction", type=float, default=0.0)
    p.add_argument("--class-separation", type=float)
    p.add_argument("--taxonomy-depth", type=int)
    p.add_argument("--taxonomy-fanout", type=int)
    p.add_argument("--holdout-per-class", type=int, default=0)
    p.add_argument("--queries-out")
    p.add_argument("--out", required=True)
    _add_common(p, seed=True)

    return ap


def _apply_config_file(ap: argparse.ArgumentParser, argv: list) -> argparse.Namespace:
    """Layer defaults < config file < explicit flags."""
    args = ap.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    with open(args.config, "r", encoding="utf-8") as fh:
        overrides = json.load(fh)
    given = {tok.split("=", 1)[0] for tok in argv if tok.startswith("--")}
    for key, value in overrides.items():
        attr = key.replace("-", "_")
        if not hasattr(args, attr):
            raise VismemError(f"--config: unknown option {key!r}")
        if f"--{key.replace('_', '-')}" not in given:
            setattr(args, attr, value)
    return args


def _echo_config(args: argparse.Namespace) -> None:
    resolved = {k: v for k, v in sorted(vars(args).items()) if k != "config"}
    print("config " + json.dumps(resolved, sort_keys=True, default=str), file=sys.stderr)


def _vote_config(args) -> VoteConfig:
    return VoteConfig(scheme=args.scheme, k=args.k, alpha=args.alpha,
                      tau=args.tau, xi=args.xi)


def _neighbor_records(ns, query_id):
    return [
        {"query_id": query_id, "rank": n.rank, "entry_id": n.entry_id,
         "label": n.label.name, "distance": n.distance}
        for n in ns
    ]


def _run(args) -> int:
    cmd = args.command
    threads = args.threads or None

    if cmd == "gen-fixture":
        per_class = ([int(c) for c in str(args.per_class).split(",")]
                     if "," in str(args.per_class) else int(args.per_class))
        info = fixtures.gen_fixture(
            args.out, classes=args.classes, per_class=per_class, dims=args.dims,
            spread=args.spread, noise_fraction=args.noise_fraction,
            taxonomy_depth=args.taxonomy_depth, taxonomy_fanout=args.taxonomy_fanout,
            seed=args.seed, holdout_per_class=args.holdout_per_class,
            queries_out=args.queries_out, class_separation=args.class_separation,
        )
        reporting.emit([info], args.format)
        return 0

    if cmd == "build":
        memory = VisualMemory.build(args.pack)
        memory.save(args.out)
        reporting.emit([{"count": len(memory), "dims": memory.dims,
                         "labels": len(memory.labels), "out": args.out}], args.format)
        return 0

    if cmd == "fit-scaling":
        if args.points.startswith("@"):
            lines = Path(args.points[1:]).read_text().split()
            pairs = [p for p in lines if p.strip()]
        else:
            pairs = args.points.split(",")
        points = [(float(p.split(":")[0]), float(p.split(":")[1])) for p in pairs]
        fit = analysis.fit_scaling(points)
        rec = [{"model": fit.model, "m": fit.coefficients[0],
                "q": fit.coefficients[1], "rss": fit.rss}]
        reporting.emit(rec, args.format, path=args.out)
        return 0

    memory = VisualMemory.load(args.memory)

    if cmd == "insert":
        pack = packio.read_pack(args.pack)
        entries = [
            MemoryEntry(id=int(pack.ids[i]), vector=pack.vectors[i],
                        label_name=pack.label_names[i],
                        taxonomy_path=pack.taxonomy_paths[i],
                        wrong_votes=int(pack.wrong_votes[i]),
                        gamma=float(pack.gammas[i]))
            for i in range(pack.count)
        ]
        memory.insert(entries)
        memory.save(args.out)
        reporting.emit([{"count": len(memory), "labels": len(memory.labels),
                         "out": args.out}], args.format)
        return 0

    if cmd == "remove":
        ids = [int(line) for line in Path(args.ids).read_text().split() if line.strip()]
        memory.remove(ids)
        memory.save(args.out)
        reporting.emit([{"count": len(memory), "removed": len(ids),
                         "out": args.out}], args.format)
        return 0

    if cmd == "subsample":
        sub = memory.subsample(args.per_class, args.seed)
        sub.save(args.out)
        reporting.emit([{"count": len(sub), "per_class": args.per_class,
                         "seed": args.seed, "out": args.out}], args.format)
        return 0

    if cmd == "index":
        index = search.build_index(memory, partitions=args.partitions,
                                   seed=args.seed, threads=threads)
        search.save_index(index, args.out)
        reporting.emit([{"partitions": index.partitions, "seed": index.seed,
                         "out": args.out}], args.format)
        return 0

    if cmd == "prune-estimate":
        config = _vote_config(args)
        report = prune.estimate_reliability(memory, config=config,
                                            k_retrieve=args.k_retrieve,
                                            charge_rule=args.charge_rule,
                                            threads=threads)
        prune.save_report(report, args.out)
        nz = int(np.count_nonzero(report.wrong_votes))
        reporting.emit([{"entries": len(memory), "nonzero_v": nz,
                         "max_v": int(report.wrong_votes.max(initial=0)),
                         "out": args.out}], args.format)
        return 0

    if cmd == "prune":
        report = prune.load_report(args.report)
        if args.mode == "hard":
            before = len(memory)
            prune.hard_prune(memory, report, threshold=args.threshold)
            memory.save(args.out)
            reporting.emit([{"mode": "hard", "removed": before - len(memory),
                             "count": len(memory), "out": args.out}], args.format)
        else:
            prune.soft_prune(memory, report, c=args.c, d=args.d)
            memory.save(args.out)
            downweighted = int(np.count_nonzero(memory.gammas < 1.0))
            reporting.emit([{"mode": "soft", "downweighted": downweighted,
                             "count": len(memory), "out": args.out}], args.format)
        return 0

    if cmd == "ood-stats":
        packs = {}
        for pair in args.packs.split(","):
            name, _, path = pair.partition("=")
            packs[name] = QuerySet.load(path)
        stats = analysis.ood_distance_stats(memory, packs, k=args.k, threads=threads)
        rows = [{"pack": name, "queries": len(packs[name]),
                 "mean_distance": s["mean"], "median_distance": s["median"]}
                for name, s in stats.items()]
        reporting.emit(rows, args.format, path=args.out)
        return 0

    queries = QuerySet.load(args.queries) if hasattr(args, "queries") else None

    if cmd == "query":
        rows = []
        index = search.load_index(args.index, memory) if args.index else None
        for i in range(len(queries)):
            if index is None:
                ns = search.exact_search(memory, queries.vectors[i], args.k,
                                         query_id=int(queries.ids[i]), threads=threads)
            else:
                ns = search.ann_search(index, memory, queries.vectors[i], args.k,
                                       probes=args.probes,
                                       query_id=int(queries.ids[i]), threads=threads)
            rows.extend(_neighbor_records(ns, int(queries.ids[i])))
        reporting.emit(rows, args.format, path=args.out)
        return 0

    if cmd == "eval":
        config = _vote_config(args)
        index = search.load_index(args.index, memory) if args.index else None
        report = _evaluate(memory, queries, config,
                           exclude_self=args.exclude_self, index=index,
                           probes=args.probes,
                           use_reliability=args.use_reliability,
                           threads=threads)
        reporting.emit(report.records(), args.format, path=args.out)
        return 0

    if cmd == "sweep":
        values = [float(v) for v in args.values.split(",")] if args.values else [None]
        if values == [None]:
            rows = _sweep(memory, queries, args.scheme, "", [0.0],
                          k_max=args.k_max, exclude_self=args.exclude_self,
                          threads=threads)
            for r in rows:
                r.pop("value", None)
                r.pop("param", None)
        else:
            rows = _sweep(memory, queries, args.scheme, args.param, values,
                          k_max=args.k_max, exclude_self=args.exclude_self,
                          threads=threads)
        reporting.emit(rows, args.format, path=args.out)
        return 0

    if cmd == "compare-pruning":
        rows = prune.compare_pruning(memory, queries, k_max=args.k_max,
                                     threshold=args.threshold, c=args.c, d=args.d,
                                     threads=threads)
        reporting.emit(rows, args.format, path=args.out)
        return 0

    if cmd == "hierarchy":
        tree = taxonomy.TaxonomyTree.from_file(args.tree)
        examples = taxonomy.TaxonomyExamples(tree, memory)
        rows = []
        for i in range(len(queries)):
            path = taxonomy.hierarchical_predict(queries.vectors[i], memory, tree,
                                                 examples=examples,
                                                 skip_empty=args.skip_empty,
                                                 seed=args.seed)
            rows.append({"query_id": int(queries.ids[i]),
                         "path": "/".join(tree.nodes[n].name for n in path[1:])})
        reporting.emit(rows, args.format, path=args.out)
        return 0

    if cmd == "granularity":
        tree = taxonomy.TaxonomyTree.from_file(args.tree)
        pool_pack = packio.read_pack(args.pool)
        target = args.target_leaf.split("/")
        # the pool pack supplies vectors only; label and path are the target's
        pool = [
            MemoryEntry(id=int(pool_pack.ids[i]), vector=pool_pack.vectors[i],
                        label_name=target[-1], taxonomy_path=target)
            for i in range(pool_pack.count)
        ]
        ladder = [int(v) for v in args.ladder.split(",")]
        rows = taxonomy.granularity_experiment(memory, tree, target, pool,
                                               queries.vectors, ladder=ladder,
                                               seed=args.seed)
        reporting.emit(rows, args.format, path=args.out)
        return 0

    if cmd == "reliability":
        acc, fit = analysis.reliability_at_k(memory, queries, args.k_max,
                                             exclude_self=args.exclude_self,
                                             threads=threads)
        rows = [{"neighbor_index": i, "accuracy": float(a)} for i, a in enumerate(acc)]
        rows.append({"neighbor_index": "fit",
                     "accuracy": f"a={fit.coefficients[0]:.6g} b={fit.coefficients[1]:.6g}"})
        reporting.emit(rows, args.format, path=args.out)
        return 0

    if cmd == "hitrate":
        hr = analysis.hit_rate(memory, queries, args.k_max,
                               exclude_self=args.exclude_self, threads=threads)
        rows = [{"k": i + 1, "hit_rate": float(h)} for i, h in enumerate(hr)]
        reporting.emit(rows, args.format, path=args.out)
        return 0

    if cmd == "calibrate":
        table = analysis.calibrate(memory, queries, bin_width=args.bin_width,
                                   exclude_self=args.exclude_self, threads=threads)
        reporting.emit(table.records(), args.format, path=args.out)
        return 0

    if cmd == "residual":
        rows = []
        for i in range(len(queries)):
            primary, residual = analysis.residual_query(memory, queries.vectors[i],
                                                        args.k, threads=threads)
            qid = int(queries.ids[i])
            for tag, ns in (("primary", primary), ("residual", residual)):
                for rec in _neighbor_records(ns, qid):
                    rec["stage"] = tag
                    rows.append(rec)
        reporting.emit(rows, args.format, path=args.out)
        return 0

    raise VismemError(f"unhandled command {cmd!r}")


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = _apply_config_file(ap, list(sys.argv[1:] if argv is None else argv))
    except VismemError as exc:
        print(f"vismem: error: {exc}", file=sys.stderr)
        return 2
    _echo_config(args)
    try:
        return _run(args)
    except VismemError as exc:
        print(f"vismem: error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"vismem: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
