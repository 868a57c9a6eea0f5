"""Command-line front door: gen / search / analogy / discover.

Every subcommand is deterministic given (inputs, flags, seed) regardless
of --parallel; metrics land both on stdout and in machine-readable JSON.
A run that fails after creating its output directory leaves a FAILED
marker there so partial outputs are never mistaken for results.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import analogy as analogy_mod
from . import discovery, plots, search as search_mod, synthgen
from .core import (
    FeatureStore,
    HyperParams,
    attach_labels,
    derive_seed,
    load_features,
    save_features,
    save_labels,
)
from .parallel import default_workers

HP_FLAGS = {
    "alpha": "alpha",
    "alpha_p": "alpha_p",
    "alpha_n": "alpha_n",
    "lam": "lam",
    "lr": "learning_rate",
    "max_iters": "max_iters",
    "tol": "tol",
    "theta1": "theta1",
    "theta2": "theta2",
    "m": "m",
    "min_cluster": "min_cluster_size",
}


def _hp_from_args(args: argparse.Namespace) -> HyperParams:
    overrides = {}
    for flag, fld in HP_FLAGS.items():
        v = getattr(args, flag, None)
        if v is not None:
            overrides[fld] = v
    return HyperParams(**overrides)


def _add_hp_flags(parser: argparse.ArgumentParser) -> None:
    g = parser.add_argument_group("hyperparameters")
    g.add_argument("--alpha", type=float, help="single-margin loss margin")
    g.add_argument("--alpha-p", dest="alpha_p", type=float, help="pull-in margin")
    g.add_argument("--alpha-n", dest="alpha_n", type=float, help="push-out margin")
    g.add_argument("--lambda", dest="lam", type=float, help="regularizer weight")
    g.add_argument("--lr", type=float, help="gradient descent step size")
    g.add_argument("--max-iters", dest="max_iters", type=int)
    g.add_argument("--tol", type=float, help="loss-change stopping tolerance")
    g.add_argument("--theta1", type=float, help="pair-sampling distance threshold")
    g.add_argument("--theta2", type=float, help="cluster merge stopping threshold")
    g.add_argument("--m", type=int, help="negatives per sampled pair")
    g.add_argument("--min-cluster", dest="min_cluster", type=int, help="minimum kept cluster size")


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument(
        "--parallel",
        type=int,
        default=None,
        help="worker processes (default: all cores)",
    )


def _load_store(args: argparse.Namespace, need_labels: bool = False) -> FeatureStore:
    fmt = "csv" if str(args.features).endswith(".csv") else "bin"
    store = load_features(args.features, fmt)
    if getattr(args, "labels", None):
        store = attach_labels(store, args.labels)
    elif need_labels:
        raise ValueError("this subcommand needs --labels")
    return store


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# gen
# ---------------------------------------------------------------------------


def cmd_gen(args: argparse.Namespace) -> None:
    dropped = []
    if args.drop_combos:
        for part in args.drop_combos.split(","):
            c, _, a = part.partition(":")
            dropped.append((int(c), int(a)))
    spec = synthgen.GenSpec(
        n_categories=args.n_categories,
        n_attributes=args.n_attributes,
        per_combo=args.per_combo,
        dim_category=args.dim_category,
        dim_attribute=args.dim_attribute,
        dim_noise=args.dim_noise,
        noise_sigma=args.noise_sigma,
        seed=args.seed,
        dropped_combos=tuple(dropped),
    )
    store, groups = synthgen.generate(spec)
    out = Path(args.out)
    if args.format in ("bin", "both"):
        save_features(store, out / "features.bin", "bin")
    if args.format in ("csv", "both"):
        save_features(store, out / "features.csv", "csv")
    save_labels(store, out / "labels.tsv")
    _write_json(out / "groups.json", {"blocks": groups, "spec": dataclasses.asdict(spec)})
    print(f"generated {len(store)} vectors of dim {store.dim} into {out}")


# ---------------------------------------------------------------------------
# search
# ---------------------------------------------------------------------------


def cmd_search(args: argparse.Namespace) -> None:
    hp = _hp_from_args(args)
    out = Path(args.out)
    workers = args.parallel if args.parallel is not None else default_workers()

    if args.query_file:
        store = _load_store(args)
        queries = search_mod.parse_query_file(args.query_file)
    elif args.sample_queries:
        store = _load_store(args, need_labels=True)
        queries = search_mod.sample_queries(
            store, args.sample_queries, args.k, derive_seed(args.seed, "search-queries")
        )
        search_mod.write_query_file(queries, out / "queries.tsv")
    else:
        raise ValueError("need either --query-file or --sample-queries")

    missing = sorted(
        {
            s
            for q in queries
            for s in (q.query_id, *q.example_ids())
            if s not in set(store.ids)
        }
    )
    if missing:
        raise ValueError(f"query ids not in feature store: {', '.join(missing)}")

    rankings_dir = out / "rankings"
    rankings_dir.mkdir(exist_ok=True)
    for i, query in enumerate(queries):
        _, ranking = search_mod.search(store, query, hp)
        search_mod.write_ranking(ranking, rankings_dir / f"{i:03d}_{query.query_id}.tsv")

    metrics = {
        "seed": args.seed,
        "n_queries": len(queries),
        "hyperparams": dataclasses.asdict(hp),
    }
    if store.has_labels:
        ranks = tuple(range(1, args.precision_ranks + 1))
        ev = search_mod.evaluate_search(store, queries, hp, ranks, workers=workers)
        metrics.update(
            ours_map=ev.ours_map,
            baseline_map=ev.baseline_map,
            ranks=list(ev.ranks),
            mean_precision={
                "ours": list(ev.ours_precision),
                "baseline": list(ev.baseline_precision),
            },
        )
        plots.save_precision_curves(
            out / "precision.png",
            ev.ranks,
            {"ours": ev.ours_precision, "baseline": ev.baseline_precision},
        )
        print(f"ours_map={ev.ours_map:.4f} baseline_map={ev.baseline_map:.4f}")
    _write_json(out / "metrics.json", metrics)
    print(f"wrote {len(queries)} rankings to {rankings_dir}")


# ---------------------------------------------------------------------------
# analogy
# ---------------------------------------------------------------------------


def _parse_families(text: str | None) -> dict[int, str] | None:
    # "color=0,1;action=2,3" -> {0: "color", 1: "color", 2: "action", ...}
    if not text:
        return None
    out: dict[int, str] = {}
    for part in text.split(";"):
        name, _, ids = part.partition("=")
        if not ids:
            raise ValueError(f"bad --families entry {part!r}, expected name=id,id")
        for tok in ids.split(","):
            out[int(tok)] = name
    return out


def cmd_analogy(args: argparse.Namespace) -> None:
    hp = _hp_from_args(args)
    out = Path(args.out)
    workers = args.parallel if args.parallel is not None else default_workers()
    store = _load_store(args, need_labels=not args.questions)

    if args.questions:
        pool = analogy_mod.read_pool(args.pool)
        questions = analogy_mod.parse_questions(args.questions, pool)
    else:
        questions, pool = analogy_mod.generate_questions(
            store,
            per_type=args.per_type,
            answer_per_combo=args.answer_per_combo,
            seed=derive_seed(args.seed, "analogy-questions"),
            families=_parse_families(args.families),
        )
        analogy_mod.write_questions(questions, out / "questions.tsv")
        analogy_mod.write_pool(pool, out / "pool.txt")
        _write_json(
            out / "questions_meta.json",
            {"seed": args.seed, "families": [q.family for q in questions]},
        )

    methods = analogy_mod.METHODS if args.method == "all" else (args.method,)
    ev = analogy_mod.evaluate_analogy(
        store, questions, hp, methods, max_rank=args.max_rank, workers=workers
    )
    if args.write_rankings:
        for method in methods:
            rankings = [
                analogy_mod.rank_candidates(store, q, hp, method)[0] for q in questions
            ]
            analogy_mod.write_rankings(rankings, out / f"rankings_{method}.tsv")

    with open(out / "recall.tsv", "w") as fh:
        fh.write("rank\t" + "\t".join(methods) + "\n")
        for idx, r in enumerate(ev.ranks):
            row = "\t".join(f"{ev.recall[m][idx]:.6f}" for m in methods)
            fh.write(f"{r}\t{row}\n")
    plots.save_recall_curves(out / "recall.png", ev.ranks, ev.recall)
    _write_json(
        out / "metrics.json",
        {
            "seed": args.seed,
            "n_questions": len(questions),
            "pool_size": len(questions[0].answer_pool),
            "diagnostics": ev.diagnostics,
            "mean_recall": {m: list(map(float, ev.recall[m])) for m in methods},
            "hyperparams": dataclasses.asdict(hp),
        },
    )
    at10 = min(10, len(ev.ranks)) - 1
    summary = " ".join(f"{m}@10={ev.recall[m][at10]:.4f}" for m in methods)
    print(f"{len(questions)} questions, recall {summary}")


# ---------------------------------------------------------------------------
# discover
# ---------------------------------------------------------------------------


def cmd_discover(args: argparse.Namespace) -> None:
    hp = _hp_from_args(args)
    out = Path(args.out)
    workers = args.parallel if args.parallel is not None else default_workers()
    store = _load_store(args, need_labels=True)

    triplets, sample_report = discovery.sample_triplets(
        store, hp, seed=derive_seed(args.seed, "discover-sampling"),
        max_pairs_per_category_pair=args.max_pairs,
    )
    report = {
        "seed": args.seed,
        "n_triplets": len(triplets),
        "short_categories": list(sample_report.short_categories),
        "capped": sample_report.capped,
        "hyperparams": dataclasses.asdict(hp),
    }
    if not triplets:
        report.update(n_clusters=0, convergence_rate=None)
        _write_json(out / "report.json", report)
        _write_json(out / "clusters.json", {"clusters": [], "discarded": []})
        print("0 triplets sampled; nothing to cluster")
        return

    weights = discovery.learn_weights(store, triplets, hp, workers=workers)
    clusters = discovery.complete_linkage_cluster(weights, store, hp)
    purities = discovery.cluster_purity(clusters, triplets, store)

    payload = {
        "clusters": [
            {
                "id": ci,
                "size": len(cluster),
                "purity": purities[ci],
                "members": [
                    {
                        "triplet": [
                            store.ids[triplets[i].q],
                            store.ids[triplets[i].p],
                            store.ids[triplets[i].n],
                        ],
                        "converged": weights[i].converged,
                    }
                    for i in cluster
                ],
            }
            for ci, cluster in enumerate(clusters.clusters)
        ],
        "discarded": [int(i) for i in clusters.discarded],
    }
    _write_json(out / "clusters.json", payload)

    sizes = [len(c) for c in clusters.clusters]
    report.update(
        n_clusters=len(sizes),
        cluster_sizes=sizes,
        purities=purities,
        n_discarded=len(clusters.discarded),
        convergence_rate=float(np.mean([w.converged for w in weights])),
    )
    _write_json(out / "report.json", report)
    if sizes:
        plots.save_cluster_summary(out / "clusters.png", sizes, purities)
    print(
        f"{len(triplets)} triplets -> {len(sizes)} kept clusters "
        f"({len(clusters.discarded)} triplets discarded)"
    )


# ---------------------------------------------------------------------------
# parser / entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctxsim",
        description="Learned per-dimension feature reweighting for "
        "attribute search, analogy answering, and attribute discovery.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic labeled benchmark")
    _add_run_flags(p)
    p.add_argument("--n-categories", type=int, default=4)
    p.add_argument("--n-attributes", type=int, default=4)
    p.add_argument("--per-combo", type=int, default=20)
    p.add_argument("--dim-category", type=int, default=16)
    p.add_argument("--dim-attribute", type=int, default=16)
    p.add_argument("--dim-noise", type=int, default=32)
    p.add_argument("--noise-sigma", type=float, default=0.15)
    p.add_argument("--drop-combos", help="combinations to drop, e.g. '0:3,2:1'")
    p.add_argument("--format", choices=("bin", "csv", "both"), default="both")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("search", help="attribute-specific reranking search")
    _add_run_flags(p)
    _add_hp_flags(p)
    p.add_argument("--features", required=True)
    p.add_argument("--labels")
    p.add_argument("--query-file", help="QUERY/POS/NEG records (TSV)")
    p.add_argument("--sample-queries", type=int, help="sample N labeled queries instead")
    p.add_argument("--k", type=int, default=5, help="examples per role when sampling")
    p.add_argument("--precision-ranks", type=int, default=50)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("analogy", help="generate and answer analogy questions")
    _add_run_flags(p)
    _add_hp_flags(p)
    p.add_argument("--features", required=True)
    p.add_argument("--labels")
    p.add_argument("--questions", help="existing questions TSV (with --pool)")
    p.add_argument("--pool", help="answer pool file for --questions")
    p.add_argument("--per-type", type=int, default=2)
    p.add_argument("--answer-per-combo", type=int, default=3)
    p.add_argument("--families", help="attribute families, e.g. 'color=0,1;action=2,3'")
    p.add_argument("--method", choices=analogy_mod.METHODS + ("all",), default="all")
    p.add_argument("--max-rank", type=int, default=None)
    p.add_argument("--write-rankings", action="store_true")
    p.set_defaults(func=cmd_analogy)

    p = sub.add_parser("discover", help="unsupervised attribute discovery")
    _add_run_flags(p)
    _add_hp_flags(p)
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--max-pairs", type=int, help="cap sampled pairs per category pair")
    p.set_defaults(func=cmd_discover)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        args.func(args)
    except Exception as exc:  # pragma: no cover - exercised via CLI tests
        if out.is_dir():
            (out / "FAILED").write_text(f"{type(exc).__name__}: {exc}\n")
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
