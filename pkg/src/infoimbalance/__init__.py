"""Rank-based comparison of high-dimensional representations."""
from .metrics import (
    AsymmetryResult,
    MetricResult,
    asymmetry,
    compare,
    information_imbalance,
    jackknife,
    linear_cka,
    neighborhood_overlap,
    rank_matrix,
)
from .tensorio import (
    ActivationStore,
    PairManifest,
    PointCloud,
    RankMatrix,
    load_manifest,
    load_store,
    validate_manifest,
    write_manifest,
    write_store,
)

__version__ = "0.1.0"
