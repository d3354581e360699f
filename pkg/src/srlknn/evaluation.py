"""Trajectory replay, error statistics, prior perturbation and ambiguity analysis."""
from __future__ import annotations

import csv
import enum
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ._io import atomic_write_text
from .errors import ConfigError, DimensionMismatch, EmptyTrajectory, MissingGridSize, ZeroVariance
from .fingerprint import Feature, FingerprintDatabase, query_fingerprint
from .localizers import Algorithm, LocalizerConfig, locate, locate_wknn

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Ground-truth positions with the test scans recorded at each step.

    ``scans[t]`` is an (S2, P) array for step ``t``; ``NaN`` marks an unheard AP.
    """

    truths: np.ndarray
    scans: tuple[np.ndarray, ...]
    dt: float = 1.0
    name: str = ""

    def __post_init__(self):
        truths = np.asarray(self.truths, dtype=float).reshape(-1, 2)
        scans = tuple(np.atleast_2d(np.asarray(s, dtype=float)) for s in self.scans)
        if len(scans) != len(truths):
            raise ValueError(f"{len(truths)} positions but {len(scans)} scan sets")
        if any(s.shape[0] == 0 for s in scans):
            raise ValueError("every step needs at least one scan")
        object.__setattr__(self, "truths", truths)
        object.__setattr__(self, "scans", scans)

    def __len__(self) -> int:
        return len(self.truths)

    @property
    def n_aps(self) -> int:
        return self.scans[0].shape[1] if self.scans else 0


class PriorKind(str, enum.Enum):
    ESTIMATED = "estimated"
    TRUTH = "truth"
    PERTURBED = "perturbed"


@dataclass(frozen=True)
class PerturbationSpec:
    """Gaussian error injected into ground-truth priors.

    ``error`` is E in metres; ``x_share`` is the fraction of E^2 assigned to
    the x axis (0.5 is isotropic).
    """

    error: float
    x_share: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not self.error >= 0:
            raise ConfigError(f"perturbation error must be >= 0, got {self.error}")
        if not 0.0 <= self.x_share <= 1.0:
            raise ConfigError("x_share must lie in [0, 1]")

    @property
    def axis_std(self) -> np.ndarray:
        return self.error * np.sqrt([self.x_share, 1.0 - self.x_share])


def perturb_prior(truth, spec: PerturbationSpec, rng: np.random.Generator) -> np.ndarray:
    """truth + (x_e, y_e) with independent zero-mean Gaussian components."""
    return np.asarray(truth, dtype=float) + rng.standard_normal(2) * spec.axis_std


def parse_prior(text: str) -> PriorKind | PerturbationSpec:
    """Parse ``estimated``, ``truth`` or ``perturbed:E`` (E in metres)."""
    if text.startswith("perturbed:"):
        try:
            return PerturbationSpec(float(text.split(":", 1)[1]))
        except ValueError:
            raise ConfigError(f"bad perturbation size in {text!r}") from None
    try:
        return PriorKind(text)
    except ValueError:
        raise ConfigError(f"unknown prior mode {text!r}") from None


@dataclass(frozen=True)
class ErrorCdf:
    """Empirical CDF: ``fractions[i]`` of the errors are <= ``levels[i]``."""

    levels: np.ndarray
    fractions: np.ndarray
    n: int

    def __iter__(self):
        return iter(zip(self.levels.tolist(), self.fractions.tolist()))

    def __len__(self):
        return len(self.levels)

    def quantile(self, q: float) -> float:
        """Quantile by linear interpolation between order statistics."""
        counts = np.diff(np.concatenate([[0], np.rint(self.fractions * self.n).astype(int)]))
        return float(np.percentile(np.repeat(self.levels, counts), 100.0 * q))


def error_cdf(errors) -> ErrorCdf:
    if isinstance(errors, TrajectoryResult):
        errors = errors.errors
    e = np.asarray(errors, dtype=float).ravel()
    if e.size == 0:
        raise ValueError("cannot build a CDF from no errors")
    levels, counts = np.unique(e, return_counts=True)
    return ErrorCdf(levels, np.cumsum(counts) / e.size, e.size)


def percentile(errors, q: float) -> float:
    return float(np.percentile(np.asarray(errors, dtype=float), q))


@dataclass(frozen=True, eq=False)
class TrajectoryResult:
    estimates: np.ndarray
    truths: np.ndarray
    algorithm: str = ""
    neighbors: tuple[tuple[int, ...], ...] = ()

    @property
    def errors(self) -> np.ndarray:
        return np.linalg.norm(np.asarray(self.estimates) - np.asarray(self.truths), axis=1)

    @property
    def mean_error(self) -> float:
        return float(self.errors.mean())

    @property
    def std_error(self) -> float:
        return float(self.errors.std())

    @property
    def p80(self) -> float:
        return percentile(self.errors, 80)

    @property
    def max_error(self) -> float:
        return float(self.errors.max())

    def cdf(self) -> ErrorCdf:
        return error_cdf(self.errors)

    def summary(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "n": int(len(self.errors)),
            "mean": self.mean_error,
            "std": self.std_error,
            "p80": self.p80,
            "max": self.max_error,
        }

    @classmethod
    def concatenate(cls, results: Sequence["TrajectoryResult"], algorithm: str | None = None):
        results = list(results)
        if not results:
            raise EmptyTrajectory("no results to combine")
        return cls(
            np.concatenate([r.estimates for r in results]),
            np.concatenate([r.truths for r in results]),
            algorithm if algorithm is not None else results[0].algorithm,
            tuple(n for r in results for n in r.neighbors),
        )


def replay_trajectory(
    db: FingerprintDatabase,
    traj: Trajectory,
    cfg: LocalizerConfig,
    prior: PriorKind | PerturbationSpec | str = PriorKind.ESTIMATED,
    *,
    initial: str = "known",
    stationary_threshold: float | None = None,
    label: str | None = None,
) -> TrajectoryResult:
    """Localize every step of a trajectory in order.

    Parameters
    ----------
    prior
        Where SRL variants take their previous position from: the previous
        estimate (``estimated``), the previous ground truth (``truth``), or the
        previous ground truth plus Gaussian error (a :class:`PerturbationSpec`).
    initial
        ``known`` uses the first ground-truth position as the prior of step 0;
        ``wknn`` localizes step 0 with plain WKNN instead.
    stationary_threshold
        If set, a step whose query mean differs from the previous one by less
        than this many dB (Euclidean) is treated as stationary and localized
        with WKNN, ignoring the prior.
    """
    if len(traj) == 0:
        raise EmptyTrajectory("trajectory has no steps")
    if traj.n_aps != db.n_aps:
        raise DimensionMismatch(f"trajectory has {traj.n_aps} APs, database has {db.n_aps}")
    if isinstance(prior, str):
        prior = parse_prior(prior)
    if initial not in ("known", "wknn"):
        raise ConfigError(f"unknown initial mode {initial!r}")
    perturb = prior if isinstance(prior, PerturbationSpec) else None
    rng = np.random.default_rng(perturb.seed) if perturb else None
    policy = cfg.missing_policy or db.policy
    wknn_cfg = LocalizerConfig(Algorithm.WKNN, k=cfg.k, sigma=cfg.sigma, primary_feature=Feature.MEAN)

    estimates = np.empty((len(traj), 2))
    neighbors = []
    prev_query = None
    for t in range(len(traj)):
        query = query_fingerprint(traj.scans[t], policy)
        if perturb is None and prior is PriorKind.ESTIMATED and t > 0:
            prev = estimates[t - 1]
        else:
            prev = traj.truths[max(t - 1, 0)]
            if perturb is not None:
                prev = perturb_prior(prev, perturb, rng)
        stationary = (
            stationary_threshold is not None
            and prev_query is not None
            and np.linalg.norm(query.mean - prev_query) < stationary_threshold
        )
        if not cfg.algorithm.uses_prior:
            est = locate(db, query, cfg)
        elif stationary or (t == 0 and initial == "wknn"):
            est = locate_wknn(db, query, wknn_cfg)
        else:
            est = locate(db, query, cfg, prev)
        estimates[t] = est.location
        neighbors.append(est.neighbor_indices)
        prev_query = query.mean
    return TrajectoryResult(estimates, traj.truths.copy(), label or cfg.algorithm.value, tuple(neighbors))


def replay_many(db, trajectories: Iterable[Trajectory], cfg, prior=PriorKind.ESTIMATED, label=None, **kw):
    """Replay several trajectories and pool their errors into one result."""
    results = [replay_trajectory(db, tr, cfg, prior, label=label, **kw) for tr in trajectories]
    return TrajectoryResult.concatenate(results, label)


def pearson_correlation(f_i, f_j) -> float:
    """Sample Pearson correlation of two fingerprint vectors."""
    a = np.asarray(f_i, dtype=float).ravel()
    b = np.asarray(f_j, dtype=float).ravel()
    if a.shape != b.shape:
        raise DimensionMismatch(f"vectors differ in length: {a.size} vs {b.size}")
    n = a.size
    if n < 2:
        raise ValueError("correlation needs at least two features")
    sa, sb = a.std(ddof=1), b.std(ddof=1)
    if sa == 0 or sb == 0:
        raise ZeroVariance("correlation is undefined for a constant vector")
    rho = np.sum((a - a.mean()) / sa * (b - b.mean()) / sb) / (n - 1)
    return float(np.clip(rho, -1.0, 1.0))


def correlation_matrix(features) -> np.ndarray:
    x = np.asarray(features, dtype=float)
    if x.shape[1] < 2:
        raise ValueError("correlation needs at least two features")
    sd = x.std(axis=1, ddof=1)
    if np.any(sd == 0):
        raise ZeroVariance(f"reference point(s) {np.flatnonzero(sd == 0).tolist()} have constant fingerprints")
    z = (x - x.mean(axis=1, keepdims=True)) / sd[:, None]
    return np.clip(z @ z.T / (x.shape[1] - 1), -1.0, 1.0)


@dataclass(frozen=True, eq=False)
class AmbiguityReport:
    """Per reference point: threshold used, ambiguous points and their distances.

    ``max_distance`` / ``mean_distance`` are NaN for points without any
    ambiguous partner.
    """

    thresholds: np.ndarray
    ambiguous: tuple[np.ndarray, ...]
    max_distance: np.ndarray
    mean_distance: np.ndarray
    grid_size: float
    auto_threshold: float | None = None

    @property
    def n_ambiguous_points(self) -> int:
        return int(sum(len(a) for a in self.ambiguous))

    @property
    def has_ambiguity(self) -> np.ndarray:
        return np.array([len(a) > 0 for a in self.ambiguous], dtype=bool)

    def aggregate(self) -> dict:
        has = self.has_ambiguity
        return {
            "grid_size": self.grid_size,
            "auto_threshold": self.auto_threshold,
            "points": int(len(self.thresholds)),
            "points_with_ambiguity": int(has.sum()),
            "ambiguous_pairs": self.n_ambiguous_points,
            "mean_of_max_distance": float(np.mean(self.max_distance[has])) if has.any() else None,
            "mean_of_mean_distance": float(np.mean(self.mean_distance[has])) if has.any() else None,
            "overall_max_distance": float(np.max(self.max_distance[has])) if has.any() else None,
        }


def ambiguity_analysis(
    db: FingerprintDatabase,
    threshold: float | None = None,
    grid_size: float | None = None,
    feature: Feature = Feature.MEAN,
) -> AmbiguityReport:
    """Find distant reference points whose fingerprints correlate strongly.

    Physical neighbors are points within ``grid_size`` (inclusive).  With
    ``threshold=None`` each point's threshold is its mean correlation with
    its physical neighbors; points with no neighbor fall back to the mean
    over all neighbor pairs.  An ambiguous point lies farther than
    ``grid_size`` away and correlates above the threshold.
    """
    grid = grid_size if grid_size is not None else db.grid_size
    if grid is None:
        raise MissingGridSize("database has no grid_size; pass one explicitly")
    if len(db) < 2:
        raise ValueError("ambiguity analysis needs at least two reference points")
    rho = correlation_matrix(db.feature_matrix(feature))
    loc = db.locations
    dist = np.linalg.norm(loc[:, None, :] - loc[None, :, :], axis=2)
    tol = 1e-9 * max(1.0, grid)
    near = dist <= grid + tol
    np.fill_diagonal(near, False)
    far = dist > grid + tol

    auto = None
    if threshold is None:
        if not near.any():
            raise ConfigError(f"no two reference points lie within grid size {grid} m")
        auto = float(rho[near].mean())
        counts = near.sum(axis=1)
        sums = np.where(near, rho, 0.0).sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            thresholds = np.where(counts > 0, sums / counts, auto)
    else:
        thresholds = np.full(len(db), float(threshold))

    amb = far & (rho > thresholds[:, None])
    ambiguous = tuple(np.flatnonzero(row) for row in amb)
    max_d = np.full(len(db), np.nan)
    mean_d = np.full(len(db), np.nan)
    for i, idx in enumerate(ambiguous):
        if idx.size:
            max_d[i] = dist[i, idx].max()
            mean_d[i] = dist[i, idx].mean()
    return AmbiguityReport(thresholds, ambiguous, max_d, mean_d, float(grid), auto)


@dataclass
class PerturbationRow:
    error: float
    seed: int
    mean: float
    std: float
    p80: float
    max: float


@dataclass
class PerturbationStudy:
    sigma: float
    rows: list[PerturbationRow] = field(default_factory=list)
    cdfs: dict = field(default_factory=dict)

    def errors(self) -> list[float]:
        return sorted({r.error for r in self.rows})

    def seed_average(self) -> list[dict]:
        """One summary per E: mean over seeds and the spread across seeds."""
        out = []
        for e in self.errors():
            rows = [r for r in self.rows if r.error == e]
            means = np.array([r.mean for r in rows])
            out.append({
                "E": e,
                "E_over_sigma": e / self.sigma,
                "seeds": len(rows),
                "mean": float(means.mean()),
                "seed_var": float(means.var()),
                "mean_within_seed_var": float(np.mean([r.std**2 for r in rows])),
                "p80": float(np.mean([r.p80 for r in rows])),
                "max": float(np.max([r.max for r in rows])),
            })
        return out


def perturbation_study(
    db: FingerprintDatabase,
    trajectories: Sequence[Trajectory],
    cfg: LocalizerConfig,
    errors: Sequence[float],
    seeds: Sequence[int],
) -> PerturbationStudy:
    """Replay with ground-truth priors corrupted by Gaussian error of each size.

    The same seed drives every error size, so rows for one seed differ only
    in the scale of the injected noise.
    """
    study = PerturbationStudy(cfg.sigma)
    for e in errors:
        pooled = []
        for seed in seeds:
            results = [
                replay_trajectory(db, tr, cfg, PerturbationSpec(float(e), seed=seed * 1000 + k))
                for k, tr in enumerate(trajectories)
            ]
            res = TrajectoryResult.concatenate(results)
            pooled.append(res.errors)
            study.rows.append(PerturbationRow(float(e), int(seed), res.mean_error, res.std_error, res.p80, res.max_error))
        study.cdfs[float(e)] = error_cdf(np.concatenate(pooled))
    return study


def result_to_csv(result: TrajectoryResult) -> str:
    """Per-step CSV: index, truth x/y, estimate x/y, error (metres, 6 decimals)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["index", "truth_x", "truth_y", "est_x", "est_y", "error"])
    for i, (t, e, err) in enumerate(zip(result.truths, result.estimates, result.errors)):
        w.writerow([i, *(f"{v:.6f}" for v in (t[0], t[1], e[0], e[1], err))])
    return buf.getvalue()


def write_result_csv(result: TrajectoryResult, path) -> None:
    atomic_write_text(path, result_to_csv(result))


def result_summary_json(result: TrajectoryResult) -> str:
    doc = result.summary()
    doc["cdf"] = [[lvl, frac] for lvl, frac in result.cdf()]
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def read_result_csv(path) -> TrajectoryResult:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return TrajectoryResult(data[:, 3:5], data[:, 1:3], Path(path).stem)
