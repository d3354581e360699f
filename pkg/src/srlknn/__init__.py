"""Soft range limited KNN (SRL-KNN) WiFi fingerprinting and its baselines."""
from .errors import SrlKnnError
from .evaluation import (
    AmbiguityReport,
    PerturbationSpec,
    PriorKind,
    Trajectory,
    TrajectoryResult,
    ambiguity_analysis,
    error_cdf,
    pearson_correlation,
    perturb_prior,
    perturbation_study,
    replay_many,
    replay_trajectory,
)
from .fingerprint import (
    ApId,
    Feature,
    Fingerprint,
    FingerprintDatabase,
    MissingValuePolicy,
    ReferencePoint,
    RssiHistogram,
    build_fingerprint,
    histogram_bin_probability,
    query_fingerprint,
)
from .ingest import (
    SynthConfig,
    benchmark_config,
    generate_synthetic,
    load_database,
    load_ujiindoorloc,
    save_database,
)
from .localizers import Algorithm, Estimate, LocalizerConfig, locate, preset_config
from .metrics import PenaltyParams

__version__ = "0.1.0"
