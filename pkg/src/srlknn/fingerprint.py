"""Fingerprint data model and construction from raw RSSI scans.

A scan is a 1-D float array of length P (one entry per AP channel) holding
RSSI in dBm, with ``NaN`` marking an AP that was not heard.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyDatabase,
    EmptyScanSet,
    InvalidAp,
    LengthMismatch,
)

MISSING = np.nan
DEFAULT_FLOOR = -100.0


class Feature(str, enum.Enum):
    """Which per-location vector a distance is computed over."""

    MEAN = "mean"
    RANK = "rank"
    PAIR_DIFF = "pair_diff"


@dataclass(frozen=True)
class MissingValuePolicy:
    """How unheard APs enter the mean/std features.

    ``substitute`` replaces a missing reading by ``floor`` before averaging;
    ``exclude`` averages only heard readings and falls back to ``floor`` when
    an AP was never heard.  Missing readings never contribute histogram mass.
    """

    floor: float = DEFAULT_FLOOR
    mode: str = "substitute"

    def __post_init__(self):
        if self.mode not in ("substitute", "exclude"):
            raise ValueError(f"unknown missing-value mode {self.mode!r}")
        if not np.isfinite(self.floor):
            raise ValueError("missing-value floor must be finite")


@dataclass(frozen=True)
class ApId:
    index: int
    label: str


def _arrays_equal(a, b) -> bool:
    return np.array_equal(np.asarray(a), np.asarray(b), equal_nan=True)


@dataclass(frozen=True, eq=False)
class RssiHistogram:
    """Per-AP integer-binned RSSI counts.

    ``values[j]`` holds the occupied 1-dBm bin centres of AP ``j`` in
    ascending order and ``counts[j]`` the number of readings in each.  An AP
    that was never heard has empty arrays.
    """

    values: tuple[np.ndarray, ...]
    counts: tuple[np.ndarray, ...]

    @property
    def n_aps(self) -> int:
        return len(self.values)

    def _check_ap(self, ap) -> int:
        j = ap.index if isinstance(ap, ApId) else int(ap)
        if not 0 <= j < self.n_aps:
            raise InvalidAp(f"AP index {j} outside 0..{self.n_aps - 1}")
        return j

    def total(self, ap) -> int:
        return int(self.counts[self._check_ap(ap)].sum())

    def bounds(self, ap) -> tuple[int, int] | None:
        """(R_L, R_U) for ``ap``, or None if it was never heard."""
        v = self.values[self._check_ap(ap)]
        if v.size == 0:
            return None
        return int(v[0]), int(v[-1])

    def probabilities(self, ap) -> tuple[np.ndarray, np.ndarray]:
        j = self._check_ap(ap)
        c = self.counts[j]
        if c.size == 0:
            return self.values[j], c.astype(float)
        return self.values[j], c / c.sum()

    def probability(self, ap, r: int) -> float:
        values, probs = self.probabilities(ap)
        hit = np.flatnonzero(values == r)
        return float(probs[hit[0]]) if hit.size else 0.0

    def moments(self, floor: float = DEFAULT_FLOOR) -> tuple[np.ndarray, np.ndarray]:
        """Per-AP histogram mean and (central) variance.

        Unheard APs behave like a single bin at ``floor``.
        """
        mean = np.full(self.n_aps, float(floor))
        var = np.zeros(self.n_aps)
        for j in range(self.n_aps):
            v, p = self.probabilities(j)
            if v.size:
                m = float(np.dot(p, v))
                mean[j] = m
                var[j] = float(np.dot(p, (v - m) ** 2))
        return mean, var

    def __eq__(self, other):
        if not isinstance(other, RssiHistogram) or self.n_aps != other.n_aps:
            return NotImplemented
        return all(
            _arrays_equal(a, b) and _arrays_equal(c, d)
            for a, b, c, d in zip(self.values, other.values, self.counts, other.counts)
        )


def histogram_bin_probability(hist: RssiHistogram, ap, r: int) -> float:
    """Probability that a reading of ``ap`` falls in the 1-dBm bin centred at ``r``."""
    return hist.probability(ap, r)


def bin_rssi(values) -> np.ndarray:
    """Map readings to integer bin centres; bin R covers [R - 0.5, R + 0.5)."""
    return np.floor(np.asarray(values, dtype=float) + 0.5).astype(np.int64)


def rank_vector(mean: np.ndarray) -> np.ndarray:
    """Rank 1 is the strongest AP; ties go to the lower AP index."""
    order = np.argsort(-np.asarray(mean), kind="stable")
    ranks = np.empty(len(order), dtype=np.int64)
    ranks[order] = np.arange(1, len(order) + 1)
    return ranks


def pair_differences(mean: np.ndarray) -> np.ndarray:
    """mean[j] - mean[k] for every AP pair j < k, in row-major triangle order."""
    mean = np.asarray(mean, dtype=float)
    j, k = np.triu_indices(mean.shape[-1], 1)
    return mean[..., j] - mean[..., k]


@dataclass(frozen=True, eq=False)
class Fingerprint:
    mean: np.ndarray
    std: np.ndarray
    histogram: RssiHistogram

    @cached_property
    def ranks(self) -> np.ndarray:
        return rank_vector(self.mean)

    # computed lazily: P*(P-1)/2 grows fast (134,940 entries for P = 520)
    @cached_property
    def pair_diffs(self) -> np.ndarray:
        return pair_differences(self.mean)

    @property
    def n_aps(self) -> int:
        return len(self.mean)

    def feature(self, kind: Feature | str) -> np.ndarray:
        kind = Feature(kind)
        if kind is Feature.MEAN:
            return self.mean
        if kind is Feature.RANK:
            return self.ranks.astype(float)
        return self.pair_diffs

    def __eq__(self, other):
        if not isinstance(other, Fingerprint):
            return NotImplemented
        return (
            _arrays_equal(self.mean, other.mean)
            and _arrays_equal(self.std, other.std)
            and self.histogram == other.histogram
        )


def _as_scan_matrix(scans) -> np.ndarray:
    if isinstance(scans, np.ndarray):
        arr = np.atleast_2d(scans).astype(float)
        if arr.ndim != 2:
            raise LengthMismatch(f"scans must be 2-D, got shape {scans.shape}")
    else:
        scans = list(scans)
        if not scans:
            raise EmptyScanSet("at least one scan is required")
        lengths = {len(s) for s in scans}
        if len(lengths) != 1:
            raise LengthMismatch(f"scans have differing lengths {sorted(lengths)}")
        arr = np.array(scans, dtype=float)
    if arr.shape[0] == 0:
        raise EmptyScanSet("at least one scan is required")
    if arr.shape[1] == 0:
        raise LengthMismatch("scans must contain at least one AP")
    return arr


def _histogram_from_scans(arr: np.ndarray) -> RssiHistogram:
    heard = ~np.isnan(arr)
    n_aps = arr.shape[1]
    ap_idx = np.broadcast_to(np.arange(n_aps), arr.shape)[heard]
    bins = bin_rssi(arr[heard])
    empty = np.empty(0, dtype=np.int64)
    if bins.size == 0:
        return RssiHistogram((empty,) * n_aps, (empty,) * n_aps)
    pairs, counts = np.unique(np.stack([ap_idx, bins]), axis=1, return_counts=True)
    starts = np.searchsorted(pairs[0], np.arange(n_aps + 1))
    values = tuple(pairs[1, starts[j]:starts[j + 1]].copy() for j in range(n_aps))
    cnts = tuple(counts[starts[j]:starts[j + 1]].astype(np.int64) for j in range(n_aps))
    return RssiHistogram(values, cnts)


def build_fingerprint(scans, policy: MissingValuePolicy | None = None) -> Fingerprint:
    """Build a fingerprint from a set of scans taken at one location.

    Parameters
    ----------
    scans : sequence of 1-D arrays or 2-D array (n_scans, P)
        RSSI readings in dBm; ``NaN`` marks an unheard AP.
    policy : MissingValuePolicy, optional
        Treatment of unheard APs in the mean/std features.

    Returns
    -------
    Fingerprint
        Mean and population standard deviation per AP plus the 1-dBm
        histogram of heard readings.
    """
    policy = policy or MissingValuePolicy()
    arr = _as_scan_matrix(scans)
    heard = ~np.isnan(arr)
    if policy.mode == "substitute":
        filled = np.where(heard, arr, policy.floor)
        mean = filled.mean(axis=0)
        std = filled.std(axis=0)
    else:
        n_heard = heard.sum(axis=0)
        safe = np.where(heard, arr, 0.0)
        with np.errstate(invalid="ignore", divide="ignore"):
            mean = safe.sum(axis=0) / n_heard
            sq = np.where(heard, (arr - mean) ** 2, 0.0).sum(axis=0) / n_heard
        mean = np.where(n_heard > 0, mean, policy.floor)
        std = np.where(n_heard > 0, np.sqrt(sq), 0.0)
    return Fingerprint(mean=mean, std=std, histogram=_histogram_from_scans(arr))


def query_fingerprint(scans, policy: MissingValuePolicy | None = None) -> Fingerprint:
    """Fingerprint of the few scans (typically one or two) taken at a test point."""
    return build_fingerprint(scans, policy)


@dataclass(frozen=True, eq=False)
class ReferencePoint:
    location: np.ndarray
    fingerprint: Fingerprint
    scan_count: int

    def __post_init__(self):
        loc = np.asarray(self.location, dtype=float).reshape(2)
        if not np.all(np.isfinite(loc)):
            raise ValueError(f"reference point location must be finite, got {loc}")
        if self.scan_count < 1:
            raise ValueError("scan_count must be >= 1")
        object.__setattr__(self, "location", loc)

    def __eq__(self, other):
        if not isinstance(other, ReferencePoint):
            return NotImplemented
        return (
            _arrays_equal(self.location, other.location)
            and self.scan_count == other.scan_count
            and self.fingerprint == other.fingerprint
        )


@dataclass(frozen=True, eq=False)
class FingerprintDatabase:
    """M reference points sharing one AP registry.

    Stacked feature matrices are built on first use and cached; the database
    is treated as immutable after construction.
    """

    aps: tuple[ApId, ...]
    points: tuple[ReferencePoint, ...]
    grid_size: float | None = None
    policy: MissingValuePolicy = field(default_factory=MissingValuePolicy)

    def __post_init__(self):
        object.__setattr__(self, "aps", tuple(self.aps))
        object.__setattr__(self, "points", tuple(self.points))
        if not self.aps:
            raise ValueError("a database needs at least one AP")
        if [a.index for a in self.aps] != list(range(len(self.aps))):
            raise ValueError("AP indices must be dense and ordered 0..P-1")
        for i, rp in enumerate(self.points):
            if rp.fingerprint.n_aps != len(self.aps):
                raise DimensionMismatch(
                    f"reference point {i} has {rp.fingerprint.n_aps} APs, expected {len(self.aps)}"
                )

    @classmethod
    def from_scans(
        cls,
        locations,
        scan_sets: Sequence,
        ap_labels: Sequence[str] | None = None,
        grid_size: float | None = None,
        policy: MissingValuePolicy | None = None,
    ) -> "FingerprintDatabase":
        """Build a database from one scan matrix per reference location."""
        policy = policy or MissingValuePolicy()
        scan_sets = [_as_scan_matrix(s) for s in scan_sets]
        if not scan_sets:
            raise EmptyDatabase("no reference points given")
        n_aps = scan_sets[0].shape[1]
        labels = ap_labels if ap_labels is not None else [f"AP{j:03d}" for j in range(n_aps)]
        aps = tuple(ApId(j, str(lbl)) for j, lbl in enumerate(labels))
        points = tuple(
            ReferencePoint(np.asarray(loc, dtype=float), build_fingerprint(s, policy), s.shape[0])
            for loc, s in zip(locations, scan_sets)
        )
        return cls(aps, points, grid_size, policy)

    @property
    def n_aps(self) -> int:
        return len(self.aps)

    def __len__(self) -> int:
        return len(self.points)

    @cached_property
    def locations(self) -> np.ndarray:
        return np.array([rp.location for rp in self.points], dtype=float).reshape(-1, 2)

    @cached_property
    def means(self) -> np.ndarray:
        return np.array([rp.fingerprint.mean for rp in self.points], dtype=float)

    @cached_property
    def ranks(self) -> np.ndarray:
        return np.array([rp.fingerprint.ranks for rp in self.points], dtype=float)

    @cached_property
    def pair_diffs(self) -> np.ndarray:
        return pair_differences(self.means)

    @cached_property
    def histogram_moments(self) -> tuple[np.ndarray, np.ndarray]:
        """Stacked (M, P) histogram means and variances."""
        moments = [rp.fingerprint.histogram.moments(self.policy.floor) for rp in self.points]
        return (
            np.array([m for m, _ in moments]).reshape(len(self), self.n_aps),
            np.array([v for _, v in moments]).reshape(len(self), self.n_aps),
        )

    def feature_matrix(self, kind: Feature | str) -> np.ndarray:
        kind = Feature(kind)
        if kind is Feature.MEAN:
            return self.means
        if kind is Feature.RANK:
            return self.ranks
        return self.pair_diffs

    def __eq__(self, other):
        if not isinstance(other, FingerprintDatabase):
            return NotImplemented
        return (
            self.aps == other.aps
            and self.grid_size == other.grid_size
            and self.policy == other.policy
            and len(self.points) == len(other.points)
            and all(a == b for a, b in zip(self.points, other.points))
        )
