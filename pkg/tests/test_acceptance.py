"""Acceptance gate.

Each test records one PASS/FAIL line, printed in the terminal summary under
"acceptance criteria".  Thresholds are the stated ones; nothing is relaxed.
"""
import json
import os
import time
from pathlib import Path

import numpy as np
import pytest

from srlknn.cli import main
from srlknn.evaluation import (
    PerturbationSpec,
    ambiguity_analysis,
    pearson_correlation,
    replay_many,
    replay_trajectory,
)
from srlknn.fingerprint import FingerprintDatabase, build_fingerprint, query_fingerprint
from srlknn.ingest import (
    benchmark_config,
    database_to_json,
    generate_synthetic,
    load_database,
    load_ujiindoorloc,
    save_database,
)
from srlknn.localizers import locate_srl_knn, locate_wknn, preset_config
from srlknn.metrics import euclidean_distance, histogram_distance

from conftest import random_database, record_acceptance
from test_localizers import oracle_equivalence_trials

SEEDS = range(10)
SIGMA = 2.0
ALGOS = ("classic", "srl-mean", "srl-hist")


def _check(name, ok, detail):
    record_acceptance(name, bool(ok), detail)
    assert ok, detail


# --------------------------------------------------------------------------
# public dataset

def _uji_dir():
    for cand in (os.environ.get("UJIINDOORLOC_DIR"), Path(__file__).resolve().parents[1] / "data" / "UJIndoorLoc"):
        if cand and (Path(cand) / "trainingData.csv").is_file() and (Path(cand) / "validationData.csv").is_file():
            return Path(cand)
    return None


def test_uji_reproduction():
    name = "UJIIndoorLoc reproduction"
    root = _uji_dir()
    if root is None:
        _check(name, False, "trainingData.csv/validationData.csv not found "
               "(set UJIINDOORLOC_DIR); the dataset could not be fetched in this environment")
    t0 = time.perf_counter()
    db, trajs = load_ujiindoorloc(root / "trainingData.csv", root / "validationData.csv", phone_ids=[13, 14])
    srl = replay_many(db, trajs, preset_config("srl-mean", k=3, sigma=20.0))
    classic = replay_many(db, trajs, preset_config("classic", k=3))
    elapsed = time.perf_counter() - t0
    gain = 1 - srl.mean_error / classic.mean_error
    ok = (srl.mean_error <= 6.0 + 2 and gain >= 0.20 and srl.p80 <= 9 + 2 and classic.p80 >= 11 - 2
          and elapsed < 300)
    _check(name, ok, f"srl mean {srl.mean_error:.2f} m, classic {classic.mean_error:.2f} m "
           f"(gain {gain:.0%}); P80 {srl.p80:.2f} vs {classic.p80:.2f} m; {elapsed:.0f} s")


# --------------------------------------------------------------------------
# synthetic benchmark

@pytest.fixture(scope="module")
def benchmark():
    """Per seed: error statistics of each algorithm with the estimated prior."""
    out = {a: [] for a in ALGOS}
    d_twin = None
    for seed in SEEDS:
        cfg = benchmark_config(seed)
        d_twin = cfg.d_twin
        db, trajs = generate_synthetic(cfg)
        for a in ALGOS:
            res = replay_many(db, trajs, preset_config(a, k=3, sigma=SIGMA), label=a)
            out[a].append((res.mean_error, res.max_error))
    return out, d_twin, cfg.grid


def test_benchmark_ordering(benchmark):
    stats, _, _ = benchmark
    m = {a: float(np.mean([s[0] for s in stats[a]])) for a in ALGOS}
    ok = m["srl-hist"] < m["srl-mean"] < m["classic"]
    _check("synthetic (a) srl-hist < srl-mean < classic", ok,
           ", ".join(f"{a} {m[a]:.3f} m" for a in ALGOS) + f" over {len(SEEDS)} seeds")


def test_benchmark_twin_jumps(benchmark):
    stats, d_twin, _ = benchmark
    srl_max = max(s[1] for s in stats["srl-mean"])
    classic_max = [s[1] for s in stats["classic"]]
    ok = srl_max < d_twin and max(classic_max) >= d_twin
    _check("synthetic (b) twin jumps", ok,
           f"d_twin {d_twin:g} m; srl-mean max {srl_max:.2f} m; classic max per seed "
           f"{min(classic_max):.2f}..{max(classic_max):.2f} m "
           f"({sum(c >= d_twin for c in classic_max)}/{len(classic_max)} seeds >= d_twin)")


def test_benchmark_grid_accuracy(benchmark):
    stats, _, grid = benchmark
    m = float(np.mean([s[0] for s in stats["srl-mean"]]))
    _check("synthetic (c) srl mean error < 1.5 grid", m < 1.5 * grid, f"srl-mean {m:.3f} m vs {1.5 * grid:g} m")


# --------------------------------------------------------------------------
# properties

def test_sigma_degeneracy():
    rng = np.random.default_rng(11)
    mismatches, n = 0, 0
    while n < 1000:
        db = random_database(rng, int(rng.integers(5, 80)), int(rng.integers(2, 8)))
        for _ in range(50):
            base = db.means[rng.integers(len(db))]
            q = query_fingerprint(np.rint(base + rng.normal(0, 5, (1, db.n_aps))))
            k = int(rng.integers(1, min(5, len(db)) + 1))
            a = locate_wknn(db, q, preset_config("wknn", k=k))
            b = locate_srl_knn(db, q, rng.uniform(-50, 50, 2), preset_config("srl-mean", k=k, sigma=1e9))
            mismatches += a.neighbor_indices != b.neighbor_indices
            n += 1
    _check("sigma degeneracy (sigma=1e9 vs wknn)", mismatches == 0, f"{mismatches} mismatches in {n} queries")


def test_oracle_equivalence():
    ok = oracle_equivalence_trials(n_db=100, seed=2024, max_m=200)
    _check("oracle equivalence", ok == 100, f"{ok}/100 random databases (M <= 200) match the exhaustive oracle")


def test_histogram_collapse():
    rng = np.random.default_rng(17)
    worst = 0.0
    for _ in range(1000):
        p = int(rng.integers(1, 12))
        rp = np.rint(rng.uniform(-100, -20, p))
        q = rng.uniform(-100, -20, p)
        fp = build_fingerprint(np.tile(rp, (int(rng.integers(1, 6)), 1)))
        worst = max(worst, abs(histogram_distance(q, fp.histogram) - euclidean_distance(q, fp.mean)))
    _check("histogram collapse to mean distance", worst <= 1e-9, f"max |diff| {worst:.2e} over 1000 fingerprints")


# --------------------------------------------------------------------------
# perturbation study

def _perturbation_means(algo):
    multiples = (0.0, 0.5, 1.0, 1.5, 2.0)
    means = {m: [] for m in multiples}
    for seed in SEEDS:
        db, trajs = generate_synthetic(benchmark_config(seed))
        cfg = preset_config(algo, k=3, sigma=SIGMA)
        for m in multiples:
            res = replay_trajectory(db, trajs[0], cfg, PerturbationSpec(m * SIGMA, seed=seed))
            means[m].append(res.mean_error)
    return {m: float(np.mean(v)) for m, v in means.items()}


def _perturbation_verdict(means):
    vals = list(means.values())
    monotone = all(b >= a for a, b in zip(vals, vals[1:]))
    rel = means[0.5] / means[0.0] - 1
    detail = ", ".join(f"E={m:g}sigma {v:.3f}" for m, v in means.items()) + f"; E=sigma/2 is {rel:+.0%} vs E=0"
    return monotone and rel <= 0.25, detail


def test_perturbation_ordering():
    ok, detail = _perturbation_verdict(_perturbation_means("srl-hist"))
    _check("perturbation ordering (srl-hist)", ok, detail)


def test_perturbation_ordering_mean_fingerprint():
    # supplementary: the same study with the mean-fingerprint variant
    ok, detail = _perturbation_verdict(_perturbation_means("srl-mean"))
    _check("perturbation ordering, supplementary (srl-mean)", ok, detail)


# --------------------------------------------------------------------------
# Pearson / ambiguity

def test_pearson_and_ambiguity_suite():
    rng = np.random.default_rng(23)
    worst = 0.0
    for _ in range(200):
        f = rng.uniform(-100, -20, int(rng.integers(3, 30)))
        g = rng.uniform(-100, -20, f.size)
        a, b = rng.uniform(0.1, 10), rng.uniform(-50, 50)
        worst = max(worst,
                    abs(pearson_correlation(f, f) - 1),
                    abs(pearson_correlation(f, -f) + 1),
                    abs(pearson_correlation(f, a * g + b) - pearson_correlation(f, g)))
    worst = max(worst, abs(pearson_correlation([-40, -60, -80], [-80, -60, -40]) + 1))

    exact = True
    for seed in range(20):
        r = np.random.default_rng(seed)
        locs = [(float(x), float(y)) for y in range(6) for x in range(8)]
        means = r.uniform(-95, -25, (len(locs), 7))
        i, j = sorted(r.choice(len(locs), 2, replace=False))
        while np.hypot(*np.subtract(locs[i], locs[j])) <= 1.0:
            i, j = sorted(r.choice(len(locs), 2, replace=False))
        means[j] = means[i]
        db = FingerprintDatabase.from_scans(locs, [[m] for m in means], grid_size=1.0)
        rep = ambiguity_analysis(db, threshold=0.9999)
        found = {(a, int(b)) for a, row in enumerate(rep.ambiguous) for b in row}
        d = np.hypot(*np.subtract(locs[i], locs[j]))
        exact &= found == {(i, j), (j, i)} and rep.max_distance[i] == pytest.approx(d)
    _check("Pearson identities and planted-twin detection", worst <= 1e-9 and exact,
           f"max identity error {worst:.1e}; planted twins found exactly: {exact}")


# --------------------------------------------------------------------------
# persistence and reproducibility

def _tree_bytes(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_round_trip_and_reproducibility(tmp_path):
    db, _ = generate_synthetic(benchmark_config(5, scans_per_rp=30, n_trajectories=0))
    save_database(db, tmp_path / "a.json")
    back = load_database(tmp_path / "a.json")
    save_database(back, tmp_path / "b.json")
    same_db = back == db and (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    same_json = database_to_json(back) == database_to_json(db)

    runs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        argv_build = ["build", "synthetic", "--seed", "9", "--scans-per-rp", "20", "--steps", "30",
                      "--out-dir", str(out / "build")]
        assert main(argv_build) == 0
        argv_eval = ["evaluate", "--db", str(out / "build" / "database.json"),
                     "--traj", str(out / "build" / "trajectories"), "--prior", "perturbed:1",
                     "--out-dir", str(out / "eval")]
        assert main(argv_eval) == 0
        assert main(["ambiguity", "--db", str(out / "build" / "database.json"), "--out-dir", str(out / "amb")]) == 0
        runs.append(_tree_bytes(out))
    identical = runs[0] == runs[1]
    manifest = json.loads(runs[0]["eval/manifest.json"])
    _check("round-trip persistence and byte-identical re-runs", same_db and same_json and identical,
           f"database round trip {same_db and same_json}; {len(runs[0])} output files identical: {identical}; "
           f"manifest inputs {[i['name'] for i in manifest['inputs']][:2]}")
