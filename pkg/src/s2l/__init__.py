"""Loss-trajectory data selection.

Cluster per-example loss trajectories recorded from a small reference model,
then pick a cluster-balanced subset under a budget. Ships the selector, a
deterministic k-means, one-shot baselines, a synthetic trajectory generator,
file formats, and reporting, all reproducible bit-for-bit from a seed.
"""

from .baselines import (
    BASELINE_METHODS,
    SimilarityMatrix,
    coverage_value,
    facility_location_select,
    high_learnability_select,
    least_confidence_select,
    middle_perplexity_select,
    random_select,
    similarity_from_features,
)
from .cluster import (
    ClusterModel,
    TrajectoryKMeans,
    assign,
    kmeans_fit,
    load_model,
    recompute_objective,
    save_model,
)
from .errors import FormatError, IntegrityError, S2LError
from .io import (
    detect_format,
    load_features,
    load_trajectories,
    write_features,
    write_trajectories,
)
from .report import cluster_report, entropy, selection_report
from .select import (
    BalancedSelection,
    ManifestEntry,
    S2LSelector,
    SelectionConfig,
    SelectionManifest,
    allocate_budgets,
    balanced_select,
    config_digest,
    derive_source_seeds,
    load_manifest,
    manifest_from_rows,
    s2l_pipeline,
    write_manifest,
)
from .store import (
    SCALAR_STATS,
    FeatureMatrix,
    ScoreVector,
    TrajectoryStore,
    default_checkpoint_steps,
    derive_scalar,
    partition_by_source,
    subsample_checkpoints,
)
from .synth import BUILTIN_SHAPES, TemplateSpec, base_curve, generate, load_templates
from .validation import rng_from_seed

__version__ = "0.1.0"

__all__ = [
    "BASELINE_METHODS",
    "BUILTIN_SHAPES",
    "BalancedSelection",
    "ClusterModel",
    "FeatureMatrix",
    "FormatError",
    "IntegrityError",
    "ManifestEntry",
    "S2LError",
    "S2LSelector",
    "SCALAR_STATS",
    "ScoreVector",
    "SelectionConfig",
    "SelectionManifest",
    "SimilarityMatrix",
    "TemplateSpec",
    "TrajectoryKMeans",
    "TrajectoryStore",
    "allocate_budgets",
    "assign",
    "balanced_select",
    "base_curve",
    "cluster_report",
    "config_digest",
    "coverage_value",
    "default_checkpoint_steps",
    "derive_scalar",
    "derive_source_seeds",
    "detect_format",
    "entropy",
    "facility_location_select",
    "generate",
    "high_learnability_select",
    "kmeans_fit",
    "least_confidence_select",
    "load_features",
    "load_manifest",
    "load_model",
    "load_templates",
    "load_trajectories",
    "manifest_from_rows",
    "middle_perplexity_select",
    "partition_by_source",
    "random_select",
    "recompute_objective",
    "rng_from_seed",
    "s2l_pipeline",
    "save_model",
    "selection_report",
    "similarity_from_features",
    "subsample_checkpoints",
    "write_features",
    "write_manifest",
    "write_trajectories",
]
