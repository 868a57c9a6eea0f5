"""Attribute-specific image search and its retrieval evaluation.

A search query is one query image plus user-supplied positive and negative
examples.  All (query, positive, negative) cross-product triplets are fed
to the weight learner jointly, and the database is reranked by reweighted
distance to the query.  Evaluation treats a database image as relevant if
it shares the query's attribute label.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import partial
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import FeatureStore, HyperParams, Triplet
from .learner import learn
from .loss import DEFAULT_VARIANT, LossVariant
from .parallel import ordered_map

# Ordered (image id, squared reweighted distance) pairs, nearest first.
RankedResult = list[tuple[str, float]]


@dataclass(frozen=True)
class SearchQuery:
    query_id: str
    positive_ids: tuple[str, ...]
    negative_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.positive_ids:
            raise ValueError("a query needs at least one positive example")
        if not self.negative_ids:
            raise ValueError("a query needs at least one negative example")
        roles = [self.query_id, *self.positive_ids, *self.negative_ids]
        if len(set(roles)) != len(roles):
            raise ValueError("an id may appear in only one role of a query")

    def example_ids(self) -> tuple[str, ...]:
        return self.positive_ids + self.negative_ids


def build_query_triplets(store: FeatureStore, query: SearchQuery) -> list[Triplet]:
    """All k*k' (query, positive, negative) triplets, positive-major order."""
    q = store.index_of(query.query_id)
    pos = [store.index_of(s) for s in query.positive_ids]
    neg = [store.index_of(s) for s in query.negative_ids]
    return [Triplet(q, p, n) for p in pos for n in neg]


def rank_database(
    store: FeatureStore,
    w: np.ndarray,
    query_idx: int,
    exclude: Iterable[int] = (),
) -> RankedResult:
    """Rank all rows but `query_idx` and `exclude` by reweighted distance.

    Ties are broken by id so rankings are reproducible across platforms.
    """
    skip = set(exclude)
    skip.add(query_idx)
    rows = np.array([i for i in range(len(store)) if i not in skip], dtype=np.intp)
    diff = store.vectors[rows] - store.vectors[query_idx]
    dists = (diff * diff) @ (np.asarray(w, dtype=np.float64) ** 2)
    order = sorted(zip(dists.tolist(), (store.ids[i] for i in rows)))
    return [(image_id, dist) for dist, image_id in order]


def search(
    store: FeatureStore,
    query: SearchQuery,
    hp: HyperParams,
    variant: LossVariant = DEFAULT_VARIANT,
) -> tuple[np.ndarray, RankedResult]:
    """Learn one weight vector from the query examples and rerank.

    The example images are query inputs, not database candidates, so they
    are excluded from the returned ranking along with the query itself.
    """
    triplets = build_query_triplets(store, query)
    result = learn(store, triplets, hp, variant)
    exclude = [store.index_of(s) for s in query.example_ids()]
    ranking = rank_database(store, result.w, store.index_of(query.query_id), exclude)
    return result.w, ranking


def average_precision(ranking: RankedResult, relevant: set[str]) -> float:
    """Mean of precision values at each relevant hit position.

    Normalized by |relevant|, so relevant items missing from a truncated
    ranking count against the score.
    """
    if not relevant:
        raise ValueError("relevant set must be non-empty")
    hits = 0
    precision_sum = 0.0
    for rank, (image_id, _) in enumerate(ranking, start=1):
        if image_id in relevant:
            hits += 1
            precision_sum += hits / rank
    return precision_sum / len(relevant)


def precision_at(ranking: RankedResult, relevant: set[str], ranks: Sequence[int]) -> list[float]:
    """Precision at each cutoff in `ranks`."""
    flags = np.array([image_id in relevant for image_id, _ in ranking], dtype=np.float64)
    cum = np.cumsum(flags)
    out = []
    for r in ranks:
        have = min(r, len(flags))
        out.append(float(cum[have - 1]) / r if have > 0 else 0.0)
    return out


@dataclass(frozen=True)
class SearchEvaluation:
    ranks: tuple[int, ...]
    ours_map: float
    baseline_map: float
    ours_precision: tuple[float, ...]
    baseline_precision: tuple[float, ...]
    ours_ap: tuple[float, ...]  # per query
    baseline_ap: tuple[float, ...]


def _relevant_for(store: FeatureStore, query: SearchQuery) -> set[str]:
    attr = store.attributes[store.index_of(query.query_id)]
    exclude = {query.query_id, *query.example_ids()}
    return {
        s
        for s, a in zip(store.ids, store.attributes)
        if a == attr and s not in exclude
    }


def _query_metrics(
    query: SearchQuery,
    store: FeatureStore,
    hp: HyperParams,
    variant: LossVariant,
    ranks: tuple[int, ...],
) -> tuple[float, list[float], float, list[float]]:
    relevant = _relevant_for(store, query)
    _, ranking = search(store, query, hp, variant)
    q_idx = store.index_of(query.query_id)
    exclude = [store.index_of(s) for s in query.example_ids()]
    baseline = rank_database(store, np.ones(store.dim), q_idx, exclude)
    return (
        average_precision(ranking, relevant),
        precision_at(ranking, relevant, ranks),
        average_precision(baseline, relevant),
        precision_at(baseline, relevant, ranks),
    )


def evaluate_search(
    store: FeatureStore,
    queries: Sequence[SearchQuery],
    hp: HyperParams,
    ranks: Sequence[int] = tuple(range(1, 51)),
    variant: LossVariant = DEFAULT_VARIANT,
    workers: int = 1,
) -> SearchEvaluation:
    """MAP and mean precision for the learned ranking and the unit-weight
    baseline, averaged over queries."""
    store.require_labels()
    if not queries:
        raise ValueError("query list must be non-empty")
    ranks = tuple(int(r) for r in ranks)
    worker = partial(_query_metrics, store=store, hp=hp, variant=variant, ranks=ranks)
    rows = ordered_map(worker, queries, workers)
    ours_ap = tuple(r[0] for r in rows)
    base_ap = tuple(r[2] for r in rows)
    ours_prec = np.mean([r[1] for r in rows], axis=0)
    base_prec = np.mean([r[3] for r in rows], axis=0)
    return SearchEvaluation(
        ranks=ranks,
        ours_map=float(np.mean(ours_ap)),
        baseline_map=float(np.mean(base_ap)),
        ours_precision=tuple(float(x) for x in ours_prec),
        baseline_precision=tuple(float(x) for x in base_prec),
        ours_ap=ours_ap,
        baseline_ap=base_ap,
    )


def sample_queries(
    store: FeatureStore,
    n_queries: int,
    k: int,
    seed: int,
    k_neg: int | None = None,
) -> list[SearchQuery]:
    """Draw evaluation queries with attribute-consistent examples.

    Positives share the query's attribute but not its category; negatives
    share the category but not the attribute.  Only images with enough of
    both are eligible as queries.  Deterministic under `seed`.
    """
    store.require_labels()
    k_neg = k if k_neg is None else k_neg
    if k < 1 or k_neg < 1:
        raise ValueError("k and k_neg must be >= 1")
    rng = np.random.default_rng(seed)
    cats = store.categories
    attrs = store.attributes

    eligible = []
    for i in range(len(store)):
        n_pos = int(np.sum((attrs == attrs[i]) & (cats != cats[i])))
        n_neg = int(np.sum((cats == cats[i]) & (attrs != attrs[i])))
        if n_pos >= k and n_neg >= k_neg:
            eligible.append(i)
    if len(eligible) < n_queries:
        raise ValueError(
            f"only {len(eligible)} rows have {k} positives and {k_neg} negatives available"
        )
    chosen = rng.choice(len(eligible), size=n_queries, replace=False)
    queries = []
    for j in chosen:
        i = eligible[int(j)]
        pos_pool = np.flatnonzero((attrs == attrs[i]) & (cats != cats[i]))
        neg_pool = np.flatnonzero((cats == cats[i]) & (attrs != attrs[i]))
        pos = rng.choice(pos_pool, size=k, replace=False)
        neg = rng.choice(neg_pool, size=k_neg, replace=False)
        queries.append(
            SearchQuery(
                query_id=store.ids[i],
                positive_ids=tuple(store.ids[int(x)] for x in pos),
                negative_ids=tuple(store.ids[int(x)] for x in neg),
            )
        )
    return queries


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------


def parse_query_file(path: str | Path) -> list[SearchQuery]:
    """Read blank-line separated records of QUERY/POS/NEG lines."""
    path = Path(path)
    queries: list[SearchQuery] = []
    record: dict[str, list[str]] = {"QUERY": [], "POS": [], "NEG": []}

    def flush(lineno: int) -> None:
        if not any(record.values()):
            return
        if len(record["QUERY"]) != 1:
            raise ValueError(f"{path}:{lineno}: record needs exactly one QUERY line")
        queries.append(
            SearchQuery(record["QUERY"][0], tuple(record["POS"]), tuple(record["NEG"]))
        )
        for v in record.values():
            v.clear()

    with open(path) as fh:
        lineno = 0
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                flush(lineno)
                continue
            parts = line.split("\t")
            if len(parts) != 2 or parts[0] not in record:
                raise ValueError(f"{path}:{lineno}: expected 'QUERY|POS|NEG<TAB>id'")
            record[parts[0]].append(parts[1])
        flush(lineno)
    if not queries:
        raise ValueError(f"{path}: no query records found")
    return queries


def write_query_file(queries: Sequence[SearchQuery], path: str | Path) -> None:
    with open(path, "w") as fh:
        for i, q in enumerate(queries):
            if i:
                fh.write("\n")
            fh.write(f"QUERY\t{q.query_id}\n")
            for s in q.positive_ids:
                fh.write(f"POS\t{s}\n")
            for s in q.negative_ids:
                fh.write(f"NEG\t{s}\n")


def write_ranking(ranking: RankedResult, path: str | Path) -> None:
    """Write `rank<TAB>id<TAB>distance` rows, distance to 6 decimals."""
    with open(path, "w") as fh:
        for rank, (image_id, dist) in enumerate(ranking, start=1):
            fh.write(f"{rank}\t{image_id}\t{dist:.6f}\n")
