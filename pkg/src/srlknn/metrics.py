"""Fingerprint distances and the soft range-limiting penalty.

Scalar functions take one query and one reference point; the plural
variants evaluate a query against every reference point of a database at
once and are what the localizers use.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NotAPermutation
from .fingerprint import DEFAULT_FLOOR, FingerprintDatabase, RssiHistogram

# exp(700) is still finite in float64; larger exponents only need to stay ordered
MAX_EXPONENT = 700.0
# exponents are rounded to this many decimals so that a huge sigma gives W == 1
# exactly instead of 1 + O(1e-15), which would otherwise split exact distance ties
EXPONENT_DECIMALS = 12


@dataclass(frozen=True)
class PenaltyParams:
    prev_location: tuple[float, float]
    sigma: float

    def __post_init__(self):
        loc = tuple(float(v) for v in self.prev_location)
        if len(loc) != 2 or not all(np.isfinite(loc)):
            raise ValueError(f"previous location must be a finite (x, y), got {self.prev_location}")
        if not (self.sigma > 0 and np.isfinite(self.sigma)):
            raise ValueError(f"sigma must be positive and finite, got {self.sigma}")
        object.__setattr__(self, "prev_location", loc)


@dataclass(frozen=True)
class DistanceRecord:
    rp_index: int
    raw_distance: float
    penalty_weight: float
    scaled_distance: float


def _vector(x) -> np.ndarray:
    return np.asarray(x, dtype=float).ravel()


def euclidean_distance(query, rp) -> float:
    q, r = _vector(query), _vector(rp)
    if q.shape != r.shape:
        raise DimensionMismatch(f"feature lengths differ: {q.size} vs {r.size}")
    return float(np.sqrt(np.sum((q - r) ** 2)))


def euclidean_distances(query, matrix) -> np.ndarray:
    """Distance from ``query`` (N,) to every row of ``matrix`` (M, N)."""
    q = _vector(query)
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[1] != q.size:
        raise DimensionMismatch(f"query has {q.size} features, database rows have {matrix.shape[-1]}")
    return np.sqrt(np.sum((matrix - q) ** 2, axis=1))


def penalty_weights(rp_locations, params: PenaltyParams) -> np.ndarray:
    """exp(d^2 / (4 sigma^2)) for each location, d measured from the previous position."""
    loc = np.asarray(rp_locations, dtype=float).reshape(-1, 2)
    d2 = np.sum((loc - np.asarray(params.prev_location)) ** 2, axis=1)
    x = np.minimum(d2 / (4.0 * params.sigma**2), MAX_EXPONENT)
    return np.exp(np.round(x, EXPONENT_DECIMALS))


def penalty_weight(rp_location, params: PenaltyParams) -> float:
    return float(penalty_weights(rp_location, params)[0])


def srl_distance(raw: float, rp_location, params: PenaltyParams, weight_sum: float) -> float:
    """Penalty-scaled distance W * D / sum(W).

    ``weight_sum`` is the sum of penalty weights over all reference points of
    the database; it is constant for a query and never changes the ranking.
    """
    if not weight_sum > 0:
        raise ValueError("weight_sum must be positive")
    return penalty_weight(rp_location, params) * float(raw) / float(weight_sum)


def srl_histogram_distance(hist_dist: float, rp_location, params: PenaltyParams, weight_sum: float) -> float:
    return srl_distance(hist_dist, rp_location, params, weight_sum)


def scaled_distances(raw, rp_locations, params: PenaltyParams) -> tuple[np.ndarray, np.ndarray]:
    """Return (weights, scaled distances) for a vector of raw distances."""
    w = penalty_weights(rp_locations, params)
    return w, w * np.asarray(raw, dtype=float) / w.sum()


def distance_records(raw, rp_locations, params: PenaltyParams) -> list[DistanceRecord]:
    w, scaled = scaled_distances(raw, rp_locations, params)
    return [
        DistanceRecord(i, float(d), float(wi), float(s))
        for i, (d, wi, s) in enumerate(zip(np.asarray(raw, dtype=float), w, scaled))
    ]


def histogram_distance(query_means, rp_hist: RssiHistogram, floor: float = DEFAULT_FLOOR) -> float:
    """Histogram-weighted distance, summed bin by bin.

    Each AP contributes sum_R p(R) * (F - R)^2 over its occupied bins.  An AP
    never heard at the reference point acts as a single bin at ``floor``.
    """
    f = _vector(query_means)
    if f.size != rp_hist.n_aps:
        raise DimensionMismatch(f"query has {f.size} APs, histogram has {rp_hist.n_aps}")
    total = 0.0
    for j in range(rp_hist.n_aps):
        values, probs = rp_hist.probabilities(j)
        if values.size == 0:
            total += (f[j] - floor) ** 2
        else:
            total += float(np.sum(probs * (f[j] - values) ** 2))
    return float(np.sqrt(total))


def histogram_distances(query_means, db: FingerprintDatabase) -> np.ndarray:
    """Histogram distance from one query to every reference point.

    Uses sum_R p (F - R)^2 = (F - mu)^2 + var per AP, with the histogram
    moments cached on the database.
    """
    f = _vector(query_means)
    if f.size != db.n_aps:
        raise DimensionMismatch(f"query has {f.size} APs, database has {db.n_aps}")
    mu, var = db.histogram_moments
    return np.sqrt(np.sum((f - mu) ** 2 + var, axis=1))


def _check_permutation(r: np.ndarray) -> None:
    expected = np.arange(1, r.size + 1)
    if not np.array_equal(np.sort(r), expected):
        raise NotAPermutation(f"rank vector is not a permutation of 1..{r.size}")


def spearman_rank_distance(query_ranks, rp_ranks) -> float:
    """Euclidean distance between two AP rank vectors."""
    q, r = _vector(query_ranks), _vector(rp_ranks)
    if q.shape != r.shape:
        raise DimensionMismatch(f"rank vectors differ in length: {q.size} vs {r.size}")
    _check_permutation(q)
    _check_permutation(r)
    return euclidean_distance(q, r)
