"""Unsupervised attribute discovery from category labels alone.

Pipeline: (1) sample (query, positive, negative) triplets where query and
negative share a category, the positive sits in a different category
within distance theta1 of the query, and negatives are the query's
furthest same-category neighbors; (2) learn one weight vector per triplet;
(3) cluster the weight vectors with complete-linkage agglomeration under a
cross-fit distance: d(w_i, w_j) = max of how badly each weight fits the
other's triplet.  Clusters of mutually compatible triplets tend to share
an attribute.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import partial
from typing import Sequence

import numpy as np

from .core import FeatureStore, HyperParams, Triplet
from .learner import learn
from .loss import DEFAULT_VARIANT, LossVariant, score
from .parallel import ordered_map


@dataclass(frozen=True)
class TripletWeight:
    triplet: Triplet
    w: np.ndarray
    converged: bool


@dataclass(frozen=True)
class SamplingReport:
    n_triplets: int
    pairs_per_category_pair: dict[tuple[int, int], int]
    # Categories too small to supply the full negative count.
    short_categories: tuple[int, ...]
    capped: bool


@dataclass
class ClusterSet:
    """Kept clusters (triplet indices) plus indices dropped for size."""

    clusters: list[list[int]]
    discarded: list[int]

    def canonical(self) -> tuple[tuple[int, ...], ...]:
        return tuple(sorted(tuple(sorted(c)) for c in self.clusters))


def sample_triplets(
    store: FeatureStore,
    hp: HyperParams,
    seed: int = 0,
    max_pairs_per_category_pair: int | None = None,
) -> tuple[list[Triplet], SamplingReport]:
    """Enumerate cross-category (query, positive) pairs under theta1.

    For each ordered category pair (A, B) every a in A, b in B with plain
    Euclidean distance below ``hp.theta1`` yields up to ``hp.m`` triplets,
    negatives taken as the furthest same-category neighbors of the query
    in descending distance.  Deterministic given store order; the seed
    only matters when the per-pair cap subsamples.
    """
    store.require_labels()
    cats = store.categories
    uniq = sorted(int(c) for c in np.unique(cats))
    if len(uniq) < 2:
        raise ValueError("triplet sampling needs at least two categories")
    rng = np.random.default_rng(seed)

    rows_by_cat = {c: np.flatnonzero(cats == c) for c in uniq}
    triplets: list[Triplet] = []
    pair_counts: dict[tuple[int, int], int] = {}
    short: set[int] = set()
    capped = False

    for cat_a in uniq:
        rows_a = rows_by_cat[cat_a]
        va = store.vectors[rows_a]
        # Negative pools: furthest same-category neighbors per query row.
        inner = np.linalg.norm(va[:, None, :] - va[None, :, :], axis=2)
        neg_rank = np.argsort(-inner, axis=1, kind="stable")
        for cat_b in uniq:
            if cat_b == cat_a:
                continue
            rows_b = rows_by_cat[cat_b]
            cross = np.linalg.norm(
                va[:, None, :] - store.vectors[rows_b][None, :, :], axis=2
            )
            ai, bj = np.nonzero(cross < hp.theta1)
            pairs = list(zip(ai.tolist(), bj.tolist()))
            if max_pairs_per_category_pair is not None and len(pairs) > max_pairs_per_category_pair:
                keep = rng.choice(len(pairs), size=max_pairs_per_category_pair, replace=False)
                pairs = [pairs[int(i)] for i in sorted(keep)]
                capped = True
            pair_counts[(cat_a, cat_b)] = len(pairs)
            n_neg = min(hp.m, len(rows_a) - 1)
            if n_neg < hp.m:
                short.add(cat_a)
            for a_local, b_local in pairs:
                q = int(rows_a[a_local])
                p = int(rows_b[b_local])
                negs = [int(rows_a[j]) for j in neg_rank[a_local] if int(rows_a[j]) != q]
                for ng in negs[:n_neg]:
                    triplets.append(Triplet(q, p, ng))

    report = SamplingReport(
        n_triplets=len(triplets),
        pairs_per_category_pair=pair_counts,
        short_categories=tuple(sorted(short)),
        capped=capped,
    )
    return triplets, report


def _learn_one(t: Triplet, store: FeatureStore, hp: HyperParams, variant: LossVariant) -> TripletWeight:
    res = learn(store, [t], hp, variant)
    return TripletWeight(triplet=t, w=res.w, converged=res.converged)


def learn_weights(
    store: FeatureStore,
    triplets: Sequence[Triplet],
    hp: HyperParams,
    variant: LossVariant = DEFAULT_VARIANT,
    workers: int = 1,
) -> list[TripletWeight]:
    """One learned weight vector per triplet (embarrassingly parallel)."""
    worker = partial(_learn_one, store=store, hp=hp, variant=variant)
    return ordered_map(worker, triplets, workers)


def pair_distance(
    wi: TripletWeight, wj: TripletWeight, store: FeatureStore, hp: HyperParams
) -> float:
    """Cross-fit distance: both weights must satisfy both triplets.

    max{fit of w_i on triplet j, fit of w_j on triplet i}; symmetric and
    nonnegative by construction.
    """
    sij = score(wi.w, store, *wj.triplet, hp)
    sji = score(wj.w, store, *wi.triplet, hp)
    return max(sij, sji)


def distance_matrix(
    weights: Sequence[TripletWeight], store: FeatureStore, hp: HyperParams
) -> np.ndarray:
    """All pairwise cross-fit distances, computed once and reused.

    Vectorized over all (weight, triplet) pairs; entry [i, j] equals
    pair_distance(weights[i], weights[j]).
    """
    w2 = np.array([wt.w for wt in weights]) ** 2  # (T, d)
    idx = np.array([wt.triplet for wt in weights], dtype=np.intp)
    v = store.vectors
    q, p, ng = v[idx[:, 0]], v[idx[:, 1]], v[idx[:, 2]]
    # s[i, j] = fit of weight i on triplet j.
    dqp = w2 @ ((q - p) ** 2).T
    dqn = w2 @ ((q - ng) ** 2).T
    dpn = w2 @ ((p - ng) ** 2).T
    s = (
        np.maximum(dqp - hp.alpha_p, 0.0)
        + np.maximum(hp.alpha_n - dqn, 0.0)
        + np.maximum(hp.alpha_n - dpn, 0.0)
    )
    return np.maximum(s, s.T)


def agglomerate(dist: np.ndarray, theta2: float) -> list[list[int]]:
    """Complete-linkage agglomeration over a precomputed distance matrix.

    Repeatedly merges the closest pair of clusters (inter-cluster distance
    = max over cross pairs) until that closest distance exceeds theta2.
    A cluster is identified by the smallest original index it contains;
    distance ties merge the lexicographically lowest such pair.  Members
    are reported sorted, clusters ordered by their smallest member.
    """
    t = dist.shape[0]
    if dist.shape != (t, t):
        raise ValueError("distance matrix must be square")
    members: dict[int, list[int]] = {i: [i] for i in range(t)}
    c = dist.astype(np.float64).copy()
    np.fill_diagonal(c, np.inf)

    while len(members) > 1:
        flat = int(np.argmin(c))
        i, j = divmod(flat, t)
        if c[i, j] > theta2:
            break
        # np.argmin returns the first minimum in row-major order, which for
        # a symmetric matrix is exactly the lowest (i, j) pair with i < j.
        members[i].extend(members.pop(j))
        merged = np.maximum(c[i], c[j])
        c[i, :] = merged
        c[:, i] = merged
        c[i, i] = np.inf
        c[j, :] = np.inf
        c[:, j] = np.inf

    return [sorted(members[i]) for i in sorted(members)]


def complete_linkage_cluster(
    weights: Sequence[TripletWeight],
    store: FeatureStore,
    hp: HyperParams,
    dist: np.ndarray | None = None,
) -> ClusterSet:
    """Cluster learned weights; drop clusters below ``hp.min_cluster_size``."""
    if not weights:
        raise ValueError("need at least one weight to cluster")
    if dist is None:
        dist = distance_matrix(weights, store, hp)
    clusters = agglomerate(dist, hp.theta2)
    kept = [c for c in clusters if len(c) >= hp.min_cluster_size]
    discarded = sorted(i for c in clusters if len(c) < hp.min_cluster_size for i in c)
    return ClusterSet(clusters=kept, discarded=discarded)


def triplet_attribute(store: FeatureStore, t: Triplet) -> int:
    """Attribute entailed by a triplet: the one shared by query and
    positive, falling back to the positive's attribute."""
    store.require_labels()
    qa = int(store.attributes[t.q])
    pa = int(store.attributes[t.p])
    return qa if qa == pa else pa


def cluster_purity(
    clusters: ClusterSet, triplets: Sequence[Triplet], store: FeatureStore
) -> list[float]:
    """Per kept cluster: highest attribute frequency over cluster size."""
    out = []
    for cluster in clusters.clusters:
        attrs = [triplet_attribute(store, triplets[i]) for i in cluster]
        _, counts = np.unique(attrs, return_counts=True)
        out.append(float(counts.max()) / len(cluster))
    return out
