"""Learned per-dimension feature reweighting over precomputed vectors.

Given a (query, positive, negative) triplet, a diagonal weight vector is
learned so the query and positive land close together and both far from
the negative.  The learned weights drive attribute-specific search,
visual-analogy answering, and unsupervised attribute discovery.
"""

from .core import (
    FeatureStore,
    HyperParams,
    Triplet,
    attach_labels,
    load_features,
    reweighted_sqdist,
    save_features,
    save_labels,
)
from .learner import DivergenceError, LearnResult, learn
from .loss import (
    DEFAULT_VARIANT,
    LossReport,
    LossVariant,
    gradient,
    reg_loss,
    score,
    total_loss,
    triplet_loss,
)
from .search import (
    RankedResult,
    SearchQuery,
    average_precision,
    build_query_triplets,
    evaluate_search,
    sample_queries,
    search,
)
from .analogy import (
    AnalogyQuestion,
    baseline_score,
    evaluate_analogy,
    generate_questions,
    rank_candidates,
    score_candidate,
)
from .discovery import (
    ClusterSet,
    TripletWeight,
    cluster_purity,
    complete_linkage_cluster,
    learn_weights,
    pair_distance,
    sample_triplets,
)
from .synthgen import GenSpec, generate

__version__ = "0.1.0"

__all__ = [
    "AnalogyQuestion",
    "ClusterSet",
    "DEFAULT_VARIANT",
    "DivergenceError",
    "FeatureStore",
    "GenSpec",
    "HyperParams",
    "LearnResult",
    "LossReport",
    "LossVariant",
    "RankedResult",
    "SearchQuery",
    "Triplet",
    "TripletWeight",
    "attach_labels",
    "average_precision",
    "baseline_score",
    "build_query_triplets",
    "cluster_purity",
    "complete_linkage_cluster",
    "evaluate_analogy",
    "evaluate_search",
    "generate",
    "generate_questions",
    "gradient",
    "learn",
    "learn_weights",
    "load_features",
    "pair_distance",
    "rank_candidates",
    "reg_loss",
    "reweighted_sqdist",
    "sample_queries",
    "sample_triplets",
    "save_features",
    "save_labels",
    "score",
    "score_candidate",
    "search",
    "total_loss",
    "triplet_loss",
]
