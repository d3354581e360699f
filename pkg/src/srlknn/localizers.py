"""Position estimators: classic KNN, WKNN and the soft range limited family."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionMismatch, EmptyDatabase, InvalidStageSizes
from .fingerprint import Feature, Fingerprint, FingerprintDatabase, MissingValuePolicy
from .metrics import PenaltyParams, euclidean_distances, histogram_distances, penalty_weights

# below this an inverse-distance weight is treated as an exact match
ZERO_DISTANCE = 1e-12


class Algorithm(str, enum.Enum):
    CLASSIC_KNN = "classic"
    WKNN = "wknn"
    SRL_KNN = "srl"
    SRL_KNN_HISTOGRAM = "srl-hist"
    SRL_KNN_COMBINED = "srl-combined"

    @property
    def uses_prior(self) -> bool:
        return self in (Algorithm.SRL_KNN, Algorithm.SRL_KNN_HISTOGRAM, Algorithm.SRL_KNN_COMBINED)


@dataclass(frozen=True)
class LocalizerConfig:
    """Algorithm choice and its parameters.

    ``n`` is only used by the combined selector.  ``stage1_penalty`` controls
    whether the combined selector's first stage ranks by penalty-scaled or
    raw distances.
    """

    algorithm: Algorithm = Algorithm.SRL_KNN
    k: int = 3
    n: int = 7
    sigma: float = 2.0
    primary_feature: Feature = Feature.MEAN
    refine_feature: Feature = Feature.MEAN
    missing_policy: MissingValuePolicy | None = None
    stage1_penalty: bool = True

    def __post_init__(self):
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
        object.__setattr__(self, "primary_feature", Feature(self.primary_feature))
        object.__setattr__(self, "refine_feature", Feature(self.refine_feature))
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if not (self.sigma > 0):
            raise ConfigError(f"sigma must be positive, got {self.sigma}")
        if self.algorithm is Algorithm.SRL_KNN_COMBINED and not self.k < self.n:
            raise InvalidStageSizes(f"combined selection needs k < n, got k={self.k}, n={self.n}")


@dataclass(frozen=True)
class Estimate:
    location: np.ndarray
    neighbors: tuple[tuple[int, float], ...]
    algorithm: str

    @property
    def neighbor_indices(self) -> tuple[int, ...]:
        return tuple(i for i, _ in self.neighbors)


def select_neighbors(scores, k: int) -> np.ndarray:
    """Indices of the k smallest scores; equal scores go to the lower index."""
    return np.argsort(np.asarray(scores, dtype=float), kind="stable")[:k]


def weighted_location(locations, distances) -> np.ndarray:
    """Inverse-distance weighted centroid.

    If any distance is (numerically) zero the result is the plain centroid of
    the zero-distance neighbors.
    """
    locations = np.asarray(locations, dtype=float).reshape(-1, 2)
    d = np.asarray(distances, dtype=float)
    exact = d <= ZERO_DISTANCE
    if exact.any():
        return locations[exact].mean(axis=0)
    w = 1.0 / d
    return (w[:, None] * locations).sum(axis=0) / w.sum()


def _check(db: FingerprintDatabase, query: Fingerprint, cfg: LocalizerConfig) -> None:
    if len(db) == 0:
        raise EmptyDatabase("database has no reference points")
    if query.n_aps != db.n_aps:
        raise DimensionMismatch(f"query has {query.n_aps} APs, database has {db.n_aps}")
    if cfg.k > len(db):
        raise ConfigError(f"k={cfg.k} exceeds the {len(db)} reference points")


def _feature_distances(db, query, feature) -> np.ndarray:
    return euclidean_distances(query.feature(feature), db.feature_matrix(feature))


def _estimate(db, idx, dist, cfg, weighted=True) -> Estimate:
    locs = db.locations[idx]
    loc = weighted_location(locs, dist[idx]) if weighted else locs.mean(axis=0)
    neighbors = tuple((int(i), float(dist[i])) for i in idx)
    return Estimate(loc, neighbors, cfg.algorithm.value)


def locate_classic_knn(db: FingerprintDatabase, query: Fingerprint, cfg: LocalizerConfig) -> Estimate:
    """Unweighted centroid of the k nearest reference points (RADAR style)."""
    _check(db, query, cfg)
    d = _feature_distances(db, query, cfg.primary_feature)
    return _estimate(db, select_neighbors(d, cfg.k), d, cfg, weighted=False)


def locate_wknn(db: FingerprintDatabase, query: Fingerprint, cfg: LocalizerConfig) -> Estimate:
    _check(db, query, cfg)
    d = _feature_distances(db, query, cfg.primary_feature)
    return _estimate(db, select_neighbors(d, cfg.k), d, cfg)


def _params(prev, cfg) -> PenaltyParams:
    if prev is None:
        raise ConfigError(f"{cfg.algorithm.value} needs a previous location")
    return PenaltyParams(tuple(np.asarray(prev, dtype=float).ravel()), cfg.sigma)


def _scaled(db, raw, prev, cfg) -> np.ndarray:
    w = penalty_weights(db.locations, _params(prev, cfg))
    return w * raw / w.sum()


def locate_srl_knn(db: FingerprintDatabase, query: Fingerprint, prev, cfg: LocalizerConfig) -> Estimate:
    """k smallest penalty-scaled distances over ``cfg.primary_feature``."""
    _check(db, query, cfg)
    scaled = _scaled(db, _feature_distances(db, query, cfg.primary_feature), prev, cfg)
    return _estimate(db, select_neighbors(scaled, cfg.k), scaled, cfg)


def locate_srl_histogram(db: FingerprintDatabase, query: Fingerprint, prev, cfg: LocalizerConfig) -> Estimate:
    """As :func:`locate_srl_knn` with the histogram-weighted distance.

    The query enters through its per-AP mean over all its scans.
    """
    _check(db, query, cfg)
    scaled = _scaled(db, histogram_distances(query.mean, db), prev, cfg)
    return _estimate(db, select_neighbors(scaled, cfg.k), scaled, cfg)


def locate_srl_combined(db: FingerprintDatabase, query: Fingerprint, prev, cfg: LocalizerConfig) -> Estimate:
    """Two-stage selection.

    Stage 1 keeps the n best reference points by ``cfg.primary_feature``
    (rank or pair differences); stage 2 keeps the k best of those by
    ``cfg.refine_feature`` (mean RSSI).  Both stages use penalty-scaled
    distances unless ``cfg.stage1_penalty`` is off.
    """
    _check(db, query, cfg)
    if not cfg.k < cfg.n <= len(db):
        raise InvalidStageSizes(f"need k < n <= M, got k={cfg.k}, n={cfg.n}, M={len(db)}")
    w = penalty_weights(db.locations, _params(prev, cfg))
    raw1 = _feature_distances(db, query, cfg.primary_feature)
    stage1 = w * raw1 / w.sum() if cfg.stage1_penalty else raw1
    candidates = np.sort(select_neighbors(stage1, cfg.n))
    raw2 = _feature_distances(db, query, cfg.refine_feature)
    scaled = w * raw2 / w.sum()
    idx = candidates[select_neighbors(scaled[candidates], cfg.k)]
    return _estimate(db, idx, scaled, cfg)


def locate(db: FingerprintDatabase, query: Fingerprint, cfg: LocalizerConfig, prev=None) -> Estimate:
    """Dispatch on ``cfg.algorithm``; ``prev`` is required by the SRL variants."""
    alg = cfg.algorithm
    if alg is Algorithm.CLASSIC_KNN:
        return locate_classic_knn(db, query, cfg)
    if alg is Algorithm.WKNN:
        return locate_wknn(db, query, cfg)
    if alg is Algorithm.SRL_KNN:
        return locate_srl_knn(db, query, prev, cfg)
    if alg is Algorithm.SRL_KNN_HISTOGRAM:
        return locate_srl_histogram(db, query, prev, cfg)
    return locate_srl_combined(db, query, prev, cfg)


# names accepted on the command line and in reports
PRESETS: dict[str, dict] = {
    "classic": dict(algorithm=Algorithm.CLASSIC_KNN, primary_feature=Feature.MEAN),
    "wknn": dict(algorithm=Algorithm.WKNN, primary_feature=Feature.MEAN),
    "spearman": dict(algorithm=Algorithm.CLASSIC_KNN, primary_feature=Feature.RANK),
    "srl-mean": dict(algorithm=Algorithm.SRL_KNN, primary_feature=Feature.MEAN),
    "srl-rank": dict(algorithm=Algorithm.SRL_KNN, primary_feature=Feature.RANK),
    "srl-hist": dict(algorithm=Algorithm.SRL_KNN_HISTOGRAM, primary_feature=Feature.MEAN),
    "srl-combined": dict(algorithm=Algorithm.SRL_KNN_COMBINED, primary_feature=Feature.RANK),
    "srl-combined-diff": dict(algorithm=Algorithm.SRL_KNN_COMBINED, primary_feature=Feature.PAIR_DIFF),
}


def preset_config(name: str, **overrides) -> LocalizerConfig:
    """LocalizerConfig for a named preset such as ``"srl-mean"``."""
    try:
        base = dict(PRESETS[name])
    except KeyError:
        raise ConfigError(f"unknown algorithm {name!r}; choose from {', '.join(PRESETS)}") from None
    base.update(overrides)
    return LocalizerConfig(**base)
