import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from srlknn.errors import DimensionMismatch, NotAPermutation
from srlknn.fingerprint import FingerprintDatabase, build_fingerprint
from srlknn.metrics import (
    PenaltyParams,
    distance_records,
    euclidean_distance,
    euclidean_distances,
    histogram_distance,
    histogram_distances,
    penalty_weight,
    penalty_weights,
    spearman_rank_distance,
    srl_distance,
    srl_histogram_distance,
)

from conftest import random_database


def test_euclidean_examples():
    assert euclidean_distance([-50, -60], [-50, -60]) == 0
    assert euclidean_distance([-50, -60], [-53, -56]) == 5.0
    assert euclidean_distance([-40], [-47]) == 7
    with pytest.raises(DimensionMismatch):
        euclidean_distance([1, 2], [1])


def test_penalty_weight_examples():
    p = PenaltyParams((0.0, 0.0), 2.0)
    assert penalty_weight((0, 0), p) == 1.0
    assert penalty_weight((4, 0), p) == pytest.approx(math.e, abs=1e-12)
    assert penalty_weight((2, 0), p) == pytest.approx(1.2840, abs=5e-5)
    assert penalty_weight((2, 0), p) == pytest.approx(math.exp(0.25), rel=1e-15)


def test_penalty_weight_overflow_is_clamped():
    w = penalty_weights([(0, 0), (1e6, 0), (2e6, 0)], PenaltyParams((0, 0), 0.1))
    assert np.all(np.isfinite(w))
    assert w[0] == 1.0 and w[1] == w[2]


def test_penalty_params_validation():
    with pytest.raises(ValueError):
        PenaltyParams((0, 0), 0)
    with pytest.raises(ValueError):
        PenaltyParams((0, np.nan), 1)


def test_srl_distance_examples():
    p = PenaltyParams((0, 0), 2.0)
    assert srl_distance(0.0, (30, 0), p, 123.0) == 0
    w = penalty_weight((3, 1), p)
    assert srl_distance(4.2, (3, 1), p, w) == pytest.approx(4.2, rel=1e-15)
    near = srl_distance(5.0, (0, 0), p, 10.0)
    far = srl_distance(5.0, (4, 0), p, 10.0)
    assert far / near == pytest.approx(math.e, rel=1e-12)
    assert srl_histogram_distance(0.0, (4, 0), p, 10.0) == 0
    assert srl_histogram_distance(1.5, (4, 0), p, 10.0) == pytest.approx(0.4077, abs=5e-5)


def test_distance_records():
    recs = distance_records([2.0, 2.0], [(0, 0), (4, 0)], PenaltyParams((0, 0), 2.0))
    assert [r.rp_index for r in recs] == [0, 1]
    assert recs[1].scaled_distance / recs[0].scaled_distance == pytest.approx(math.e)
    total = recs[0].penalty_weight + recs[1].penalty_weight
    assert recs[0].scaled_distance == pytest.approx(2.0 / total)


def test_histogram_distance_examples():
    fp = build_fingerprint([[-60.0], [-62.0]])
    assert histogram_distance([-60.0], fp.histogram) == pytest.approx(math.sqrt(2), abs=1e-12)
    assert histogram_distance([-61.0], fp.histogram) == pytest.approx(1.0)
    single = build_fingerprint([[-60.0, -70.0]] * 3)
    assert histogram_distance([-60.0, -70.0], single.histogram) == 0


def test_histogram_distance_unheard_ap_uses_floor():
    fp = build_fingerprint([[-60.0, np.nan]])
    assert histogram_distance([-60.0, -90.0], fp.histogram, floor=-100) == pytest.approx(10.0)


def test_spearman_examples():
    assert spearman_rank_distance([1, 2, 3], [1, 2, 3]) == 0
    assert spearman_rank_distance([1, 2], [2, 1]) == pytest.approx(math.sqrt(2))
    with pytest.raises(NotAPermutation):
        spearman_rank_distance([1, 1], [1, 2])
    with pytest.raises(NotAPermutation):
        spearman_rank_distance([1, 2], [0, 1])


def test_vectorised_histogram_distance_matches_direct_sum(rng):
    for _ in range(20):
        m, p = rng.integers(1, 15), rng.integers(1, 8)
        db = random_database(rng, m, p, s1=rng.integers(1, 12), integer=bool(rng.integers(2)))
        q = rng.uniform(-100, -20, p)
        direct = [histogram_distance(q, rp.fingerprint.histogram, db.policy.floor) for rp in db.points]
        assert np.allclose(histogram_distances(q, db), direct, rtol=0, atol=1e-9)


def test_vectorised_handles_missing_readings(rng):
    scans = [np.array([[-60.0, np.nan], [-62.0, np.nan]]), np.array([[-70.0, -80.0], [np.nan, -81.0]])]
    db = FingerprintDatabase.from_scans([(0, 0), (1, 0)], scans)
    q = np.array([-65.0, -85.0])
    direct = [histogram_distance(q, rp.fingerprint.histogram, db.policy.floor) for rp in db.points]
    assert np.allclose(histogram_distances(q, db), direct, atol=1e-9)


def test_histogram_collapses_to_mean_distance(rng):
    for _ in range(1000):
        p = int(rng.integers(1, 10))
        rp = np.rint(rng.uniform(-100, -20, p))
        q = rng.uniform(-100, -20, p)
        fp = build_fingerprint(np.tile(rp, (int(rng.integers(1, 4)), 1)))
        assert abs(histogram_distance(q, fp.histogram) - euclidean_distance(q, fp.mean)) <= 1e-9


def test_euclidean_distances_dimension_check():
    with pytest.raises(DimensionMismatch):
        euclidean_distances([1, 2, 3], np.zeros((4, 2)))


@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.floats(0, 100), min_size=2, max_size=12),
    st.floats(0.1, 50),
    st.floats(-30, 30),
    st.floats(-30, 30),
)
def test_penalty_never_reorders_equal_distance_points(raw, sigma, px, py):
    # the normaliser is shared, so the ranking depends only on W * D
    n = len(raw)
    loc = np.column_stack([np.arange(n, dtype=float), np.zeros(n)])
    params = PenaltyParams((px, py), sigma)
    recs = distance_records(raw, loc, params)
    w = penalty_weights(loc, params)
    prod = w * np.asarray(raw)
    scaled = np.array([r.scaled_distance for r in recs])
    assert np.array_equal(np.argsort(scaled, kind="stable"), np.argsort(prod, kind="stable"))


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1, 20), st.floats(0, 30), st.floats(0, 30))
def test_penalty_monotone_in_distance(sigma, d1, d2):
    p = PenaltyParams((0, 0), sigma)
    lo, hi = sorted([d1, d2])
    assert penalty_weight((lo, 0), p) <= penalty_weight((hi, 0), p)
    assert penalty_weight((lo, 0), p) >= 1.0


def test_large_sigma_weights_are_one(rng):
    loc = rng.uniform(0, 500, (100, 2))
    w = penalty_weights(loc, PenaltyParams((3.0, 4.0), 1e9))
    assert np.all(w == 1.0)
