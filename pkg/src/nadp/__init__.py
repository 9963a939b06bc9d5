"""Neighbourhood-aware differential privacy for static word embeddings.

Pipeline: build an exact nearest-neighbour graph over the vocabulary,
factorise it into connected-component neighbourhoods, calibrate the minimal
per-neighbourhood Gaussian noise for a requested (epsilon, delta), and
perturb. Baseline mechanisms and privacy/utility evaluation protocols are
included for comparison.
"""

__version__ = "0.1.0"

from .calibration import (
    CalibrationResult,
    PrivacyParams,
    calibrate_components,
    check_dp_condition,
    classic_gaussian_sigma,
    g,
    phi,
    solve_u_star,
)
from .components import (
    ComponentPartition,
    build_partition,
    connected_components,
    sensitivities,
)
from .embeddings import EmbeddingSet, load_embeddings, save_embeddings, subset
from .graph import (
    NeighbourGraph,
    NeighbourSets,
    build_graph,
    jaccard,
    knn,
    rank_queries,
)
from .mechanisms import (
    MechanismConfig,
    PerturbationReport,
    Perturber,
    gaussian_perturb,
    jaccard_mechanism_perturb,
    laplacian_perturb,
    mahalanobis_perturb,
    nadp_perturb,
)
from .privacy import PrivacyReport, prediction_probability, privacy_report, skewness
from .utility import (
    OddManDataset,
    SentencePairDataset,
    SimilarityDataset,
    odd_man_out,
    sts_eval,
    utility_suite,
    word_similarity_eval,
)

__all__ = [
    "__version__",
    "CalibrationResult",
    "ComponentPartition",
    "EmbeddingSet",
    "MechanismConfig",
    "NeighbourGraph",
    "NeighbourSets",
    "OddManDataset",
    "PerturbationReport",
    "Perturber",
    "PrivacyParams",
    "PrivacyReport",
    "SentencePairDataset",
    "SimilarityDataset",
    "build_graph",
    "build_partition",
    "calibrate_components",
    "check_dp_condition",
    "classic_gaussian_sigma",
    "connected_components",
    "g",
    "gaussian_perturb",
    "jaccard",
    "jaccard_mechanism_perturb",
    "knn",
    "laplacian_perturb",
    "load_embeddings",
    "mahalanobis_perturb",
    "nadp_perturb",
    "odd_man_out",
    "phi",
    "prediction_probability",
    "privacy_report",
    "rank_queries",
    "save_embeddings",
    "sensitivities",
    "skewness",
    "solve_u_star",
    "sts_eval",
    "subset",
    "utility_suite",
    "word_similarity_eval",
]
