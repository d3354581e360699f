import csv

import numpy as np
import pytest

from srlknn.fingerprint import FingerprintDatabase, MissingValuePolicy
from srlknn.ingest import UJI_META, UJI_WAPS

ACCEPTANCE_LINES = []


def record_acceptance(name, ok, detail):
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_database(rng, m, p, s1=5, spread=20.0, integer=True, grid_size=None):
    """Random database with continuous locations and noisy integer scans."""
    locations = rng.uniform(0, spread, (m, 2))
    centres = rng.uniform(-90, -30, (m, p))
    scans = []
    for c in centres:
        s = c + rng.normal(0, 3, (s1, p))
        scans.append(np.rint(s) if integer else s)
    return FingerprintDatabase.from_scans(locations, scans, grid_size=grid_size, policy=MissingValuePolicy())


def write_uji_csv(path, rows):
    """rows: dicts with 'rssi' (dict wap index -> value) plus UJI metadata keys."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(UJI_WAPS + UJI_META)
        for r in rows:
            rssi = [100] * len(UJI_WAPS)
            for j, v in r.get("rssi", {}).items():
                rssi[j] = v
            w.writerow(rssi + [r.get(k, 0) for k in UJI_META])
