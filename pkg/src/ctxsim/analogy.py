"""Visual analogy answering: image1 : image2 :: image3 : ?

Each candidate answer k is scored by learning two weight vectors, one
from the triplet (i1, i2, k) (category cue) and one from (i1, i3, k)
(property cue), then measuring how well those weights carry over to the
held-out third image.  Low scores are better.  A subtraction baseline
compares normalized difference vectors instead and needs no learning.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .core import FeatureStore, HyperParams, Triplet
from .learner import DivergenceError, learn
from .loss import DEFAULT_VARIANT, LossVariant, score
from .parallel import ordered_map

METHODS = ("ours", "ours-wc", "ours-wp", "baseline")


@dataclass(frozen=True)
class AnalogyQuestion:
    i1: str
    i2: str
    i3: str
    answer_pool: tuple[str, ...]
    correct: frozenset[str]
    # Property-family tag ("color"-like vs "action"-like); evaluation
    # bookkeeping only.
    family: str = ""

    def __post_init__(self) -> None:
        given = (self.i1, self.i2, self.i3)
        if len(set(given)) != 3:
            raise ValueError("question images must be three distinct ids")
        pool = set(self.answer_pool)
        if any(s in pool for s in given):
            raise ValueError("question images may not appear in the answer pool")
        if not self.correct <= pool:
            raise ValueError("correct answers must be a subset of the answer pool")


def generate_questions(
    store: FeatureStore,
    per_type: int = 10,
    answer_per_combo: int = 5,
    seed: int = 0,
    families: Mapping[int, str] | None = None,
) -> tuple[list[AnalogyQuestion], tuple[str, ...]]:
    """Instantiate analogy questions from the store's labels.

    The answer pool holds `answer_per_combo` images from every present
    (category, attribute) combination.  A question type picks categories
    c1 != c2 and attributes p1 != p2 from the same family; its images come
    from combinations (c1,p1), (c1,p2), (c2,p1) outside the pool and its
    correct answers are the pool images labeled (c2,p2).  Deterministic
    under `seed`.
    """
    store.require_labels()
    if per_type < 1 or answer_per_combo < 1:
        raise ValueError("per_type and answer_per_combo must be >= 1")
    rng = np.random.default_rng(seed)

    combo_rows: dict[tuple[int, int], list[int]] = {}
    for i, (c, a) in enumerate(zip(store.categories, store.attributes)):
        combo_rows.setdefault((int(c), int(a)), []).append(i)

    pool: list[str] = []
    pool_rows: dict[tuple[int, int], list[int]] = {}
    for combo in sorted(combo_rows):
        rows = combo_rows[combo]
        if len(rows) < answer_per_combo:
            raise ValueError(
                f"combination (category={combo[0]}, attribute={combo[1]}) has "
                f"{len(rows)} images, needs {answer_per_combo} for the answer pool"
            )
        picked = rng.choice(len(rows), size=answer_per_combo, replace=False)
        chosen = [rows[int(j)] for j in picked]
        pool_rows[combo] = chosen
        pool.extend(store.ids[r] for r in chosen)

    if families is None:
        families = {int(a): "attr" for a in np.unique(store.attributes)}

    def outside_pool(combo: tuple[int, int]) -> list[int]:
        in_pool = set(pool_rows[combo])
        return [r for r in combo_rows[combo] if r not in in_pool]

    categories = sorted({c for c, _ in combo_rows})
    questions: list[AnalogyQuestion] = []
    pool_t = tuple(pool)
    for c1 in categories:
        for c2 in categories:
            if c1 == c2:
                continue
            for p1 in sorted(families):
                for p2 in sorted(families):
                    if p1 == p2 or families[p1] != families[p2]:
                        continue
                    needed = [(c1, p1), (c1, p2), (c2, p1), (c2, p2)]
                    if any(combo not in combo_rows for combo in needed):
                        continue
                    slots = [outside_pool(x) for x in needed[:3]]
                    if any(not s for s in slots):
                        continue
                    for _ in range(per_type):
                        i1, i2, i3 = (
                            store.ids[s[int(rng.integers(len(s)))]] for s in slots
                        )
                        questions.append(
                            AnalogyQuestion(
                                i1=i1,
                                i2=i2,
                                i3=i3,
                                answer_pool=pool_t,
                                correct=frozenset(
                                    store.ids[r] for r in pool_rows[(c2, p2)]
                                ),
                                family=families[p1],
                            )
                        )
    if not questions:
        raise ValueError("no analogy question type can be instantiated")
    return questions, pool_t


def candidate_scores(
    store: FeatureStore,
    quest: AnalogyQuestion,
    candidate: str,
    hp: HyperParams,
    variant: LossVariant = DEFAULT_VARIANT,
) -> tuple[float, float]:
    """(category-cue score, property-cue score) for one candidate.

    Weights diverging during learning yield +inf so the candidate sorts
    last instead of crashing the run.
    """
    i1 = store.index_of(quest.i1)
    i2 = store.index_of(quest.i2)
    i3 = store.index_of(quest.i3)
    k = store.index_of(candidate)

    def cue(p_idx: int, other: int) -> float:
        try:
            res = learn(store, [Triplet(i1, p_idx, k)], hp, variant)
        except DivergenceError:
            return float("inf")
        return score(res.w, store, i1, p_idx, other, hp)

    return cue(i2, i3), cue(i3, i2)


def score_candidate(
    store: FeatureStore,
    quest: AnalogyQuestion,
    candidate: str,
    hp: HyperParams,
) -> float:
    """Combined candidate score: sum of the two cue scores (lower wins)."""
    s_c, s_p = candidate_scores(store, quest, candidate, hp)
    return s_c + s_p


def baseline_score(store: FeatureStore, quest: AnalogyQuestion, candidate: str) -> float:
    """Cosine similarity of the (i1 - i2) and (i3 - candidate) directions.

    Higher is better.  Returns NaN when either difference is zero, so
    degenerate candidates can be excluded instead of crashing.
    """
    x1 = store.row(store.index_of(quest.i1))
    x2 = store.row(store.index_of(quest.i2))
    x3 = store.row(store.index_of(quest.i3))
    xk = store.row(store.index_of(candidate))
    d12 = x1 - x2
    d3k = x3 - xk
    n12 = np.linalg.norm(d12)
    n3k = np.linalg.norm(d3k)
    if n12 == 0.0 or n3k == 0.0:
        return float("nan")
    return float(d12 @ d3k / (n12 * n3k))


def _question_table(
    quest: AnalogyQuestion,
    store: FeatureStore,
    hp: HyperParams,
    variant: LossVariant,
) -> list[tuple[str, float, float]]:
    return [
        (cand, *candidate_scores(store, quest, cand, hp, variant))
        for cand in quest.answer_pool
    ]


def rank_candidates(
    store: FeatureStore,
    quest: AnalogyQuestion,
    hp: HyperParams,
    method: str = "ours",
    variant: LossVariant = DEFAULT_VARIANT,
    table: Sequence[tuple[str, float, float]] | None = None,
) -> tuple[list[tuple[str, float]], dict[str, int]]:
    """Rank the answer pool under one method.

    Returns the ranking plus a diagnostics count of candidates that were
    pushed to the end (diverged learners, or zero-difference baseline
    candidates).  `table` lets callers reuse precomputed cue scores.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    if method == "baseline":
        scored = [(cand, baseline_score(store, quest, cand)) for cand in quest.answer_pool]
        good = sorted(
            ((c, s) for c, s in scored if np.isfinite(s)),
            key=lambda cs: (-cs[1], cs[0]),
        )
        bad = sorted((c, s) for c, s in scored if not np.isfinite(s))
        return good + bad, {"excluded": len(bad)}

    if table is None:
        table = _question_table(quest, store, hp, variant)
    pick = {"ours": lambda sc, sp: sc + sp, "ours-wc": lambda sc, sp: sc, "ours-wp": lambda sc, sp: sp}[method]
    scored = [(cand, pick(sc, sp)) for cand, sc, sp in table]
    ranking = sorted(scored, key=lambda cs: (cs[1], cs[0]))
    return ranking, {"diverged": sum(1 for _, s in scored if not np.isfinite(s))}


def recall_curve(ranking: Sequence[tuple[str, float]], correct: frozenset[str], max_rank: int) -> np.ndarray:
    """recall@r for r = 1..max_rank: fraction of correct ids in the top r."""
    hits = np.array([cand in correct for cand, _ in ranking[:max_rank]], dtype=np.float64)
    if len(hits) < max_rank:
        hits = np.pad(hits, (0, max_rank - len(hits)))
    return np.cumsum(hits) / len(correct)


@dataclass(frozen=True)
class AnalogyEvaluation:
    ranks: tuple[int, ...]
    recall: dict[str, np.ndarray]  # method -> mean recall at ranks 1..K
    diagnostics: dict[str, int] = field(default_factory=dict)


def _question_recalls(
    quest: AnalogyQuestion,
    store: FeatureStore,
    hp: HyperParams,
    methods: tuple[str, ...],
    variant: LossVariant,
    max_rank: int,
) -> tuple[dict[str, np.ndarray], dict[str, int]]:
    table = None
    if any(m != "baseline" for m in methods):
        table = _question_table(quest, store, hp, variant)
    curves: dict[str, np.ndarray] = {}
    diags: dict[str, int] = {}
    for method in methods:
        ranking, diag = rank_candidates(store, quest, hp, method, variant, table)
        curves[method] = recall_curve(ranking, quest.correct, max_rank)
        for key, v in diag.items():
            diags[key] = diags.get(key, 0) + v
    return curves, diags


def evaluate_analogy(
    store: FeatureStore,
    questions: Sequence[AnalogyQuestion],
    hp: HyperParams,
    methods: Sequence[str] = METHODS,
    max_rank: int | None = None,
    variant: LossVariant = DEFAULT_VARIANT,
    workers: int = 1,
) -> AnalogyEvaluation:
    """Mean recall at ranks 1..K over the questions, per method."""
    if not questions:
        raise ValueError("question list must be non-empty")
    methods = tuple(methods)
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}")
    if max_rank is None:
        max_rank = min(len(q.answer_pool) for q in questions)
    worker = partial(
        _question_recalls,
        store=store,
        hp=hp,
        methods=methods,
        variant=variant,
        max_rank=max_rank,
    )
    rows = ordered_map(worker, questions, workers)
    recall = {
        m: np.mean([curves[m] for curves, _ in rows], axis=0) for m in methods
    }
    diagnostics: dict[str, int] = {}
    for _, diag in rows:
        for key, v in diag.items():
            diagnostics[key] = diagnostics.get(key, 0) + v
    return AnalogyEvaluation(
        ranks=tuple(range(1, max_rank + 1)), recall=recall, diagnostics=diagnostics
    )


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------


def write_questions(questions: Sequence[AnalogyQuestion], path: str | Path) -> None:
    """Write `i1<TAB>i2<TAB>i3<TAB>correct;ids` rows."""
    with open(path, "w") as fh:
        for q in questions:
            fh.write(f"{q.i1}\t{q.i2}\t{q.i3}\t{';'.join(sorted(q.correct))}\n")


def parse_questions(
    path: str | Path,
    answer_pool: Sequence[str],
    families: Sequence[str] | None = None,
) -> list[AnalogyQuestion]:
    path = Path(path)
    pool = tuple(answer_pool)
    questions = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 tab-separated fields")
            family = families[len(questions)] if families else ""
            questions.append(
                AnalogyQuestion(
                    i1=parts[0],
                    i2=parts[1],
                    i3=parts[2],
                    answer_pool=pool,
                    correct=frozenset(s for s in parts[3].split(";") if s),
                    family=family,
                )
            )
    if not questions:
        raise ValueError(f"{path}: no questions found")
    return questions


def write_pool(pool: Sequence[str], path: str | Path) -> None:
    Path(path).write_text("".join(f"{s}\n" for s in pool))


def read_pool(path: str | Path) -> tuple[str, ...]:
    return tuple(
        line.strip() for line in Path(path).read_text().splitlines() if line.strip()
    )


def write_rankings(
    rankings: Sequence[Sequence[tuple[str, float]]], path: str | Path
) -> None:
    """One `question<TAB>rank<TAB>candidate<TAB>score` row per candidate."""
    with open(path, "w") as fh:
        for qi, ranking in enumerate(rankings):
            for rank, (cand, s) in enumerate(ranking, start=1):
                fh.write(f"{qi}\t{rank}\t{cand}\t{s:.6f}\n")
