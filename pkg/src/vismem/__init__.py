"""vismem: retrieval-based visual-memory classification.

Stores labeled embedding vectors, classifies queries by weighted
k-nearest-neighbor voting, and supports insertion, exact unlearning,
memory pruning, hierarchical label prediction, and scaling analysis,
all without training a model.
"""

from ._kernels import available_backends, backend_name
from .analysis import (
    CalibrationTable,
    CurveFit,
    calibrate,
    fit_scaling,
    hit_rate,
    ood_distance_stats,
    reliability_at_k,
    residual_query,
)
from .classify import (
    EvalReport,
    Prediction,
    VoteConfig,
    classify,
    evaluate,
    sweep,
    vote_weights,
    weight,
)
from .core import Label, cosine_distance, normalize
from .fixtures import gen_fixture
from .packio import validate_pack
from .prune import (
    ReliabilityReport,
    compare_pruning,
    estimate_reliability,
    hard_prune,
    reliability_factor,
    soft_prune,
)
from .search import (
    AnnIndex,
    Neighbor,
    NeighborSet,
    ann_search,
    build_index,
    exact_search,
    load_index,
    save_index,
)
from .store import MemoryEntry, QuerySet, VisualMemory
from .taxonomy import (
    KsResult,
    TaxonomyTree,
    granularity_experiment,
    hierarchical_predict,
    ks_two_sample,
)

__version__ = "0.1.0"

__all__ = [
    "AnnIndex",
    "CalibrationTable",
    "CurveFit",
    "EvalReport",
    "KsResult",
    "Label",
    "MemoryEntry",
    "Neighbor",
    "NeighborSet",
    "Prediction",
    "QuerySet",
    "ReliabilityReport",
    "TaxonomyTree",
    "VisualMemory",
    "VoteConfig",
    "ann_search",
    "available_backends",
    "backend_name",
    "build_index",
    "calibrate",
    "classify",
    "compare_pruning",
    "cosine_distance",
    "estimate_reliability",
    "evaluate",
    "exact_search",
    "fit_scaling",
    "gen_fixture",
    "granularity_experiment",
    "hard_prune",
    "hierarchical_predict",
    "hit_rate",
    "ks_two_sample",
    "load_index",
    "normalize",
    "ood_distance_stats",
    "reliability_at_k",
    "reliability_factor",
    "residual_query",
    "save_index",
    "soft_prune",
    "sweep",
    "validate_pack",
    "vote_weights",
    "weight",
]
