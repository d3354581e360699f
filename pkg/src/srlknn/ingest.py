"""Dataset loaders, the synthetic RSSI generator and on-disk formats.

Database JSON (``format: srlknn-database``, ``version: 1``)::

    {
      "format": "srlknn-database", "version": 1,
      "grid_size": 1.0 | null,
      "missing_policy": {"floor": -100.0, "mode": "substitute"},
      "aps": [{"index": 0, "label": "AP000"}, ...],
      "points": [
        {"x": 0.0, "y": 0.0, "scan_count": 100,
         "mean": [...], "std": [...],
         "histogram": [{"-52": 3, "-51": 40, ...}, ...]},   # one map per AP
        ...
      ]
    }

Histograms store integer counts keyed by bin centre so the scan count per AP
is recoverable.  Trajectory CSV: header ``step,x,y,<ap labels...>``, one row
per scan, an empty cell for an unheard AP.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from ._io import atomic_write_text
from .errors import EmptyAfterFilter, InvalidConfig, ParseError, SchemaVersionMismatch
from .evaluation import Trajectory
from .fingerprint import (
    ApId,
    Fingerprint,
    FingerprintDatabase,
    MissingValuePolicy,
    ReferencePoint,
    RssiHistogram,
)

SCHEMA_FORMAT = "srlknn-database"
SCHEMA_VERSION = 1

UJI_N_WAPS = 520
UJI_SENTINEL = 100
UJI_FLOOR = -104.0
UJI_META = ["LONGITUDE", "LATITUDE", "FLOOR", "BUILDINGID", "SPACEID",
            "RELATIVEPOSITION", "USERID", "PHONEID", "TIMESTAMP"]
UJI_WAPS = [f"WAP{j:03d}" for j in range(1, UJI_N_WAPS + 1)]


# --------------------------------------------------------------------------
# UJIIndoorLoc

def _read_uji_csv(path) -> pd.DataFrame:
    path = Path(path)
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False)
    except (pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise ParseError(path, message=str(exc)) from None
    expected = UJI_WAPS + UJI_META
    if list(df.columns) != expected:
        missing = [c for c in expected if c not in df.columns]
        bad = missing[0] if missing else next(c for c, e in zip(df.columns, expected) if c != e)
        raise ParseError(path, row=1, column=bad,
                         message=f"expected the {len(expected)}-column UJIIndoorLoc header")
    out = df.apply(pd.to_numeric, errors="coerce")
    bad = out.isna()
    if bad.values.any():
        r, c = np.argwhere(bad.values)[0]
        raise ParseError(path, row=int(r) + 2, column=df.columns[c],
                         message=f"not a number: {df.iat[r, c]!r}")
    return out


def _uji_scans(frame: pd.DataFrame) -> np.ndarray:
    rssi = frame[UJI_WAPS].to_numpy(dtype=float)
    return np.where(rssi == UJI_SENTINEL, np.nan, rssi)


def load_ujiindoorloc(
    training_path,
    validation_path=None,
    building: int | Sequence[int] | None = None,
    floor: int | Sequence[int] | None = None,
    phone_ids: Sequence[int] | None = None,
    missing_floor: float = UJI_FLOOR,
) -> tuple[FingerprintDatabase, list[Trajectory]]:
    """Load the published UJIIndoorLoc CSVs.

    Training rows are grouped by (longitude, latitude, floor, building) into
    reference points.  Validation rows of the selected phones are sorted by
    timestamp per phone and cut into one trajectory for every contiguous run
    on the same (building, floor).  ``phone_ids`` filters validation rows only.
    """

    def select(df):
        keep = np.ones(len(df), dtype=bool)
        if building is not None:
            keep &= df["BUILDINGID"].isin(np.atleast_1d(building)).to_numpy()
        if floor is not None:
            keep &= df["FLOOR"].isin(np.atleast_1d(floor)).to_numpy()
        return df[keep]

    train = select(_read_uji_csv(training_path))
    if train.empty:
        raise EmptyAfterFilter(f"no training rows left in {training_path} after filtering")
    policy = MissingValuePolicy(floor=missing_floor)
    keys = ["BUILDINGID", "FLOOR", "LONGITUDE", "LATITUDE"]
    locations, scan_sets = [], []
    for (_, _, x, y), grp in train.groupby(keys, sort=True):
        locations.append((x, y))
        scan_sets.append(_uji_scans(grp))
    db = FingerprintDatabase.from_scans(locations, scan_sets, UJI_WAPS, None, policy)

    trajectories: list[Trajectory] = []
    if validation_path is not None:
        valid = select(_read_uji_csv(validation_path))
        if phone_ids is not None:
            valid = valid[valid["PHONEID"].isin(list(phone_ids))]
        if valid.empty:
            raise EmptyAfterFilter(f"no validation rows left in {validation_path} after filtering")
        valid = valid.sort_values(["PHONEID", "TIMESTAMP"], kind="stable")
        run = (valid[["PHONEID", "BUILDINGID", "FLOOR"]].diff().abs().sum(axis=1) != 0).cumsum()
        for k, (_, grp) in enumerate(valid.groupby(run.to_numpy(), sort=True)):
            first = grp.iloc[0]
            scans = _uji_scans(grp)
            trajectories.append(Trajectory(
                grp[["LONGITUDE", "LATITUDE"]].to_numpy(dtype=float),
                tuple(scans[i:i + 1] for i in range(len(grp))),
                name=f"phone{int(first.PHONEID)}_b{int(first.BUILDINGID)}_f{int(first.FLOOR)}_{k:03d}",
            ))
    return db, trajectories


# --------------------------------------------------------------------------
# synthetic generator

DEFAULT_APS = ((3.5, 4.0), (10.5, 4.0), (17.5, 4.0), (3.5, 12.0), (10.5, 12.0), (17.5, 12.0))


@dataclass(frozen=True)
class SynthConfig:
    """Log-distance path-loss floor model.

    ``planted_pairs`` lists ((source x, y), (target x, y)) centres.  Every
    location within ``twin_radius`` of a target receives the signal of the
    matching offset around its source, so the two patches share fingerprints.
    """

    width: float = 21.0
    height: float = 16.0
    ap_positions: tuple = DEFAULT_APS
    path_loss_exponent: float = 3.0
    ref_power: float = -30.0
    shadow_std: float = 4.0
    grid: float = 1.0
    scans_per_rp: int = 100
    test_scans: int = 1
    seed: int = 0
    planted_pairs: tuple = ()
    twin_radius: float = 1.5
    n_trajectories: int = 1
    steps: int = 175
    dt: float = 1.0
    v_max: float = 2.0
    mean_speed: float = 0.6
    missing_floor: float = -100.0
    min_distance: float = 0.5

    def validate(self) -> None:
        checks = [
            (self.width > 0 and self.height > 0, "floor dimensions must be positive"),
            (self.grid > 0, "grid spacing must be positive"),
            (self.scans_per_rp >= 1 and self.test_scans >= 1, "scan counts must be >= 1"),
            (len(self.ap_positions) >= 1, "at least one AP is required"),
            (self.shadow_std >= 0, "shadowing std must be >= 0"),
            (self.steps >= 2 and self.n_trajectories >= 0, "trajectories need >= 2 steps"),
            (0 < self.mean_speed * self.dt <= self.v_max * self.dt, "need 0 < mean_speed <= v_max"),
            (self.twin_radius >= 0 and self.min_distance > 0, "radii must be positive"),
        ]
        for ok, msg in checks:
            if not ok:
                raise InvalidConfig(msg)
        for pair in self.planted_pairs:
            for x, y in pair:
                if not (0 <= x <= self.width and 0 <= y <= self.height):
                    raise InvalidConfig(f"planted centre {(x, y)} lies outside the floor")

    @property
    def d_twin(self) -> float:
        """Smallest separation between planted source and target centres."""
        if not self.planted_pairs:
            return math.inf
        return min(math.dist(s, t) for s, t in self.planted_pairs)


def benchmark_config(seed: int = 0, **overrides) -> SynthConfig:
    """Floor of 21 m x 16 m with two planted twin patches 12 m apart."""
    base = dict(seed=seed, planted_pairs=(((4.0, 4.0), (16.0, 4.0)), ((4.0, 12.0), (16.0, 12.0))))
    base.update(overrides)
    return SynthConfig(**base)


class SignalModel:
    """Mean RSSI at any floor location under a :class:`SynthConfig`."""

    def __init__(self, cfg: SynthConfig):
        self.cfg = cfg
        self.aps = np.asarray(cfg.ap_positions, dtype=float).reshape(-1, 2)

    def source_location(self, xy) -> np.ndarray:
        xy = np.asarray(xy, dtype=float)
        for s, t in self.cfg.planted_pairs:
            if math.dist(xy, t) <= self.cfg.twin_radius + 1e-9:
                return np.asarray(s, dtype=float) + (xy - np.asarray(t, dtype=float))
        return xy

    def mean_rssi(self, xy) -> np.ndarray:
        src = self.source_location(xy)
        d = np.maximum(np.linalg.norm(self.aps - src, axis=1), self.cfg.min_distance)
        return self.cfg.ref_power - 10.0 * self.cfg.path_loss_exponent * np.log10(d)

    def sample(self, xy, n: int, rng: np.random.Generator) -> np.ndarray:
        """n integer-valued scans; readings below the floor are unheard."""
        raw = self.mean_rssi(xy) + rng.normal(0.0, self.cfg.shadow_std, (n, len(self.aps)))
        scans = np.minimum(np.rint(raw), 0.0)
        return np.where(scans < self.cfg.missing_floor, np.nan, scans)


def _grid(cfg: SynthConfig) -> np.ndarray:
    xs = np.arange(0.0, cfg.width + 1e-9, cfg.grid)
    ys = np.arange(0.0, cfg.height + 1e-9, cfg.grid)
    return np.array([(x, y) for y in ys for x in xs])


def _walk(cfg: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    """Waypoint walk at bounded speed that passes through every planted patch."""
    specials = [c for pair in cfg.planted_pairs for c in pair]
    n_random = max(4, 2 * len(specials))
    waypoints = [tuple(rng.uniform((0, 0), (cfg.width, cfg.height))) for _ in range(n_random)]
    waypoints += specials
    order = rng.permutation(len(waypoints))
    waypoints = [np.asarray(waypoints[i], dtype=float) for i in order]
    pos = rng.uniform((0, 0), (cfg.width, cfg.height))
    path = [pos.copy()]
    w = 0
    max_step = cfg.v_max * cfg.dt
    while len(path) < cfg.steps:
        target = waypoints[w % len(waypoints)]
        step = min(rng.uniform(0.3, 1.7) * cfg.mean_speed * cfg.dt, max_step)
        gap = np.linalg.norm(target - pos)
        if gap <= step:
            pos = target.copy()
            w += 1
        else:
            pos = pos + (target - pos) * (step / gap)
        path.append(pos.copy())
    return np.array(path)


def generate_synthetic(cfg: SynthConfig) -> tuple[FingerprintDatabase, list[Trajectory]]:
    """Reference-point database on a regular grid plus random-walk test trajectories."""
    cfg.validate()
    model = SignalModel(cfg)
    rp_rng, walk_rng, test_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(cfg.seed).spawn(3))
    grid = _grid(cfg)
    scans = [model.sample(xy, cfg.scans_per_rp, rp_rng) for xy in grid]

    # reference points inside a target patch copy the scans of their source twin
    for i, xy in enumerate(grid):
        src = model.source_location(xy)
        if np.allclose(src, xy):
            continue
        match = np.flatnonzero(np.all(np.abs(grid - src) < 1e-9, axis=1))
        if match.size:
            scans[i] = scans[match[0]].copy()

    policy = MissingValuePolicy(floor=cfg.missing_floor)
    labels = [f"AP{j:03d}" for j in range(len(model.aps))]
    db = FingerprintDatabase.from_scans(grid, scans, labels, cfg.grid, policy)

    trajectories = []
    for k in range(cfg.n_trajectories):
        path = _walk(cfg, walk_rng)
        test = tuple(model.sample(xy, cfg.test_scans, test_rng) for xy in path)
        trajectories.append(Trajectory(path, test, cfg.dt, name=f"synthetic_{cfg.seed}_{k}"))
    return db, trajectories


# --------------------------------------------------------------------------
# native database JSON

def database_to_json(db: FingerprintDatabase) -> str:
    points = []
    for rp in db.points:
        fp = rp.fingerprint
        hist = [
            {str(int(v)): int(c) for v, c in zip(vals, cnts)}
            for vals, cnts in zip(fp.histogram.values, fp.histogram.counts)
        ]
        points.append({
            "x": float(rp.location[0]),
            "y": float(rp.location[1]),
            "scan_count": int(rp.scan_count),
            "mean": [float(v) for v in fp.mean],
            "std": [float(v) for v in fp.std],
            "histogram": hist,
        })
    doc = {
        "format": SCHEMA_FORMAT,
        "version": SCHEMA_VERSION,
        "grid_size": db.grid_size,
        "missing_policy": {"floor": db.policy.floor, "mode": db.policy.mode},
        "aps": [{"index": a.index, "label": a.label} for a in db.aps],
        "points": points,
    }
    return json.dumps(doc, separators=(",", ":")) + "\n"


def database_from_json(text: str) -> FingerprintDatabase:
    try:
        doc = json.loads(text)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise SchemaVersionMismatch(f"not a database document: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != SCHEMA_FORMAT:
        raise SchemaVersionMismatch("missing or wrong 'format' tag")
    if doc.get("version") != SCHEMA_VERSION:
        raise SchemaVersionMismatch(f"unsupported schema version {doc.get('version')!r}")
    try:
        policy = MissingValuePolicy(**doc["missing_policy"])
        aps = tuple(ApId(int(a["index"]), str(a["label"])) for a in doc["aps"])
        points = []
        for p in doc["points"]:
            values, counts = [], []
            for h in p["histogram"]:
                items = sorted((int(k), int(c)) for k, c in h.items())
                values.append(np.array([k for k, _ in items], dtype=np.int64))
                counts.append(np.array([c for _, c in items], dtype=np.int64))
            fp = Fingerprint(
                np.array(p["mean"], dtype=float),
                np.array(p["std"], dtype=float),
                RssiHistogram(tuple(values), tuple(counts)),
            )
            points.append(ReferencePoint(np.array([p["x"], p["y"]], dtype=float), fp, int(p["scan_count"])))
        return FingerprintDatabase(aps, tuple(points), doc["grid_size"], policy)
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaVersionMismatch(f"malformed database document: {exc!r}") from None


def save_database(db: FingerprintDatabase, path) -> None:
    atomic_write_text(path, database_to_json(db))


def load_database(path) -> FingerprintDatabase:
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise SchemaVersionMismatch(f"{path}: not UTF-8 text ({exc})") from None
    return database_from_json(text)


# --------------------------------------------------------------------------
# scan CSVs

def _fmt(v: float) -> str:
    if np.isnan(v):
        return ""
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def trajectory_to_csv(traj: Trajectory, ap_labels: Sequence[str]) -> str:
    lines = [",".join(["step", "x", "y", *ap_labels])]
    for t, (xy, scans) in enumerate(zip(traj.truths, traj.scans)):
        for s in scans:
            lines.append(",".join([str(t), repr(float(xy[0])), repr(float(xy[1])), *(_fmt(v) for v in s)]))
    return "\n".join(lines) + "\n"


def save_trajectory_csv(traj: Trajectory, path, ap_labels: Sequence[str]) -> None:
    atomic_write_text(path, trajectory_to_csv(traj, ap_labels))


def _read_scan_rows(path, key_cols: int):
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(path, message="file is empty") from None
        keys, scans = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(path, row=lineno, message=f"expected {len(header)} cells, got {len(row)}")
            vals = []
            for col, cell in zip(header, row):
                try:
                    vals.append(float(cell) if cell.strip() else np.nan)
                except ValueError:
                    raise ParseError(path, row=lineno, column=col, message=f"not a number: {cell!r}") from None
            if any(np.isnan(v) for v in vals[:key_cols]):
                raise ParseError(path, row=lineno, message="key columns may not be empty")
            keys.append(tuple(vals[:key_cols]))
            scans.append(vals[key_cols:])
    if not scans:
        raise ParseError(path, message="no data rows")
    return header, keys, np.array(scans, dtype=float)


def load_trajectory_csv(path, dt: float = 1.0) -> tuple[Trajectory, list[str]]:
    """Read a trajectory CSV; returns the trajectory and its AP labels."""
    header, keys, scans = _read_scan_rows(path, 3)
    if header[:3] != ["step", "x", "y"]:
        raise ParseError(path, row=1, message="header must start with step,x,y")
    steps = np.array([k[0] for k in keys])
    truths, scan_sets = [], []
    for s in dict.fromkeys(steps.tolist()):
        rows = np.flatnonzero(steps == s)
        truths.append(keys[rows[0]][1:])
        scan_sets.append(scans[rows])
    return Trajectory(np.array(truths), tuple(scan_sets), dt, name=Path(path).stem), header[3:]


def load_raw_scans(path, grid_size: float | None = None, policy: MissingValuePolicy | None = None) -> FingerprintDatabase:
    """Build a database from a CSV of training scans: ``x,y,<ap labels...>``.

    Rows sharing the same (x, y) form one reference point, in order of first
    appearance.
    """
    header, keys, scans = _read_scan_rows(path, 2)
    if header[:2] != ["x", "y"]:
        raise ParseError(path, row=1, message="header must start with x,y")
    groups: dict[tuple, list[int]] = {}
    for i, k in enumerate(keys):
        groups.setdefault(k, []).append(i)
    return FingerprintDatabase.from_scans(
        list(groups), [scans[idx] for idx in groups.values()], header[2:], grid_size, policy
    )
