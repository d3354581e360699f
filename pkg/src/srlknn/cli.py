"""Command-line front end.

Exit codes: 0 success, 2 usage/config error, 3 data error.  Verbosity is set
with the ``SRL_LOG`` environment variable (a logging level name).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._io import atomic_write_text, file_sha256
from .errors import ConfigError, DimensionMismatch, ParseError, SrlKnnError
from .evaluation import (
    ambiguity_analysis,
    parse_prior,
    perturbation_study,
    replay_trajectory,
    result_summary_json,
    result_to_csv,
    TrajectoryResult,
)
from .fingerprint import MissingValuePolicy, query_fingerprint
from .ingest import (
    SynthConfig,
    benchmark_config,
    database_to_json,
    generate_synthetic,
    load_database,
    load_raw_scans,
    load_trajectory_csv,
    load_ujiindoorloc,
    trajectory_to_csv,
)
from .localizers import PRESETS, preset_config, locate

log = logging.getLogger("srlknn")

EXIT_USAGE = 2
EXIT_DATA = 3


class UsageError(Exception):
    pass


def _setup_logging() -> None:
    level = os.environ.get("SRL_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _require_files(*paths) -> None:
    for p in paths:
        if p is not None and not Path(p).is_file():
            raise UsageError(f"input file not found: {p}")


def _manifest(command: str, config: dict, inputs=(), seeds=(), outputs=()) -> str:
    doc = {
        "tool": "srlknn",
        "version": __version__,
        "command": command,
        "config": config,
        "inputs": [{"name": Path(p).name, "sha256": file_sha256(p)} for p in inputs],
        "seeds": list(seeds),
        "outputs": sorted(outputs),
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _write_all(out_dir: Path, files: dict[str, str]) -> None:
    for name, text in files.items():
        atomic_write_text(out_dir / name, text)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _f(v) -> str:
    return "" if v is None or (isinstance(v, float) and np.isnan(v)) else f"{v:.6f}"


# --------------------------------------------------------------------------
# build

def _bundle_files(db, trajectories) -> dict[str, str]:
    labels = [a.label for a in db.aps]
    files = {"database.json": database_to_json(db)}
    for k, tr in enumerate(trajectories):
        files[f"trajectories/traj_{k:03d}.csv"] = trajectory_to_csv(tr, labels)
    return files


def cmd_build(args) -> int:
    out_dir = Path(args.out_dir)
    inputs, seeds = [], []
    if args.source == "synthetic":
        make = benchmark_config if args.twins else SynthConfig
        cfg = make(seed=args.seed, steps=args.steps, n_trajectories=args.trajectories,
                   shadow_std=args.shadow, grid=args.grid, scans_per_rp=args.scans_per_rp,
                   test_scans=args.test_scans, missing_floor=args.missing_floor)
        db, trajectories = generate_synthetic(cfg)
        config = {k: getattr(cfg, k) for k in cfg.__dataclass_fields__}
        seeds = [args.seed]
    elif args.source == "uji":
        _require_files(args.train, args.valid)
        db, trajectories = load_ujiindoorloc(
            args.train, args.valid, building=args.building, floor=args.floor,
            phone_ids=args.phone_ids, missing_floor=args.missing_floor,
        )
        inputs = [p for p in (args.train, args.valid) if p]
        config = {"building": args.building, "floor": args.floor, "phone_ids": args.phone_ids,
                  "missing_floor": args.missing_floor}
    else:
        _require_files(args.scans)
        policy = MissingValuePolicy(floor=args.missing_floor)
        db = load_raw_scans(args.scans, grid_size=args.grid, policy=policy)
        trajectories = []
        inputs = [args.scans]
        config = {"grid_size": args.grid, "missing_floor": args.missing_floor}
    config["source"] = args.source
    files = _bundle_files(db, trajectories)
    files["manifest.json"] = _manifest("build", json.loads(json.dumps(config)), inputs, seeds, files)
    _write_all(out_dir, files)
    print(f"M={len(db)} P={db.n_aps} grid_size={db.grid_size} trajectories={len(trajectories)}")
    return 0


# --------------------------------------------------------------------------
# shared helpers for evaluate / perturb

def _load_trajectories(paths):
    files = []
    for p in paths:
        p = Path(p)
        if p.is_dir():
            files.extend(sorted(p.glob("*.csv")))
        elif p.is_file():
            files.append(p)
        else:
            raise UsageError(f"trajectory path not found: {p}")
    if not files:
        raise UsageError("no trajectory CSV files given")
    return files, [load_trajectory_csv(f)[0] for f in files]


def _policy(args, db):
    if args.missing_floor is None:
        return None
    return MissingValuePolicy(floor=args.missing_floor, mode=db.policy.mode)


def _cfg(name, args, db):
    return preset_config(name, k=args.k, n=args.n, sigma=args.sigma, missing_policy=_policy(args, db))


def cmd_evaluate(args) -> int:
    _require_files(args.db)
    db = load_database(args.db)
    traj_files, trajectories = _load_trajectories(args.traj)
    for f, tr in zip(traj_files, trajectories):
        if tr.n_aps != db.n_aps:
            raise DimensionMismatch(f"{f}: {tr.n_aps} APs, database has {db.n_aps}")
    algos = args.algo or ["classic", "wknn", "srl-mean", "srl-hist"]
    prior = parse_prior(args.prior)
    if hasattr(prior, "seed"):
        prior = type(prior)(prior.error, prior.x_share, args.seed)
    files, rows = {}, []
    for name in algos:
        cfg = _cfg(name, args, db)
        results = [
            replay_trajectory(db, tr, cfg, prior, initial=args.initial,
                              stationary_threshold=args.stationary_threshold, label=name)
            for tr in trajectories
        ]
        res = TrajectoryResult.concatenate(results, name)
        files[f"{name}.csv"] = result_to_csv(res)
        files[f"{name}.json"] = result_summary_json(res)
        s = res.summary()
        rows.append([name, s["n"], s["mean"], s["std"], s["p80"], s["max"]])
    files["comparison.csv"] = _csv_text(
        ["algorithm", "n", "mean", "std", "p80", "max"],
        [[r[0], r[1], *(_f(v) for v in r[2:])] for r in rows],
    )
    files["comparison.txt"] = _comparison_text(rows)
    config = {"algorithms": algos, "k": args.k, "n": args.n, "sigma": args.sigma,
              "prior": args.prior, "initial": args.initial, "missing_floor": args.missing_floor,
              "stationary_threshold": args.stationary_threshold}
    files["manifest.json"] = _manifest("evaluate", config, [args.db, *traj_files], [args.seed], files)
    _write_all(Path(args.out_dir), files)
    print(files["comparison.txt"], end="")
    return 0


def _comparison_text(rows) -> str:
    lines = [f"{'algorithm':<18} {'n':>6} {'mean +- std (m)':>18} {'P80 (m)':>9} {'max (m)':>9}"]
    for name, n, mean, std, p80, mx in rows:
        lines.append(f"{name:<18} {n:>6} {mean:>8.3f} +- {std:<6.3f} {p80:>9.3f} {mx:>9.3f}")
    return "\n".join(lines) + "\n"


def _parse_float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"not a comma-separated list of numbers: {text!r}") from None


def cmd_perturb(args) -> int:
    multiples = _parse_float_list(args.errors)
    if not multiples or any(not m >= 0 for m in multiples):
        raise UsageError("perturbation sizes must be >= 0")
    _require_files(args.db)
    db = load_database(args.db)
    traj_files, trajectories = _load_trajectories(args.traj)
    cfg = _cfg(args.algo, args, db)
    seeds = [args.seed + i for i in range(args.seeds)]
    study = perturbation_study(db, trajectories, cfg, [m * args.sigma for m in multiples], seeds)
    per_seed = _csv_text(
        ["E", "E_over_sigma", "seed", "mean", "std", "var", "p80", "max"],
        [[_f(r.error), _f(r.error / args.sigma), r.seed, _f(r.mean), _f(r.std), _f(r.std**2), _f(r.p80), _f(r.max)]
         for r in study.rows],
    )
    summary = study.seed_average()
    keys = ["E", "E_over_sigma", "seeds", "mean", "seed_var", "mean_within_seed_var", "p80", "max"]
    files = {
        "perturb_per_seed.csv": per_seed,
        "perturb_summary.csv": _csv_text(keys, [[row[k] if k == "seeds" else _f(row[k]) for k in keys] for row in summary]),
        "perturb_cdf.json": json.dumps(
            {f"{e:g}": [[lvl, frac] for lvl, frac in cdf] for e, cdf in study.cdfs.items()},
            indent=1, sort_keys=True) + "\n",
    }
    config = {"algorithm": args.algo, "k": args.k, "n": args.n, "sigma": args.sigma,
              "E_over_sigma": multiples, "seeds": args.seeds}
    files["manifest.json"] = _manifest("perturb", config, [args.db, *traj_files], seeds, files)
    _write_all(Path(args.out_dir), files)
    for row in summary:
        print(f"E={row['E']:.3f} m ({row['E_over_sigma']:.2f} sigma): mean {row['mean']:.3f} m over {row['seeds']} seeds")
    return 0


def cmd_ambiguity(args) -> int:
    _require_files(args.db)
    db = load_database(args.db)
    grid = args.grid_size if args.grid_size is not None else db.grid_size
    if grid is None:
        raise UsageError("database has no grid_size; pass --grid-size")
    threshold = None if args.threshold == "auto" else float(args.threshold)
    rep = ambiguity_analysis(db, threshold=threshold, grid_size=grid)
    agg = rep.aggregate()
    head = [
        f"# threshold_mode: {args.threshold}",
        f"# auto_threshold: {_f(rep.auto_threshold)}",
        f"# grid_size: {grid:g}",
        f"# points_with_ambiguity: {agg['points_with_ambiguity']}",
    ]
    rows = []
    for i, rp in enumerate(db.points):
        rows.append([i, _f(rp.location[0]), _f(rp.location[1]), _f(rep.thresholds[i]), len(rep.ambiguous[i]),
                     _f(rep.max_distance[i]), _f(rep.mean_distance[i]),
                     " ".join(str(j) for j in rep.ambiguous[i])])
    body = _csv_text(["rp", "x", "y", "threshold", "n_ambiguous", "d_a_max", "d_a_mean", "ambiguous_rps"], rows)
    files = {
        "ambiguity.csv": "\n".join(head) + "\n" + body,
        "ambiguity_summary.json": json.dumps(agg, indent=2, sort_keys=True) + "\n",
    }
    config = {"threshold": args.threshold, "grid_size": grid}
    files["manifest.json"] = _manifest("ambiguity", config, [args.db], [], files)
    _write_all(Path(args.out_dir), files)
    print("\n".join(head))
    return 0


def _parse_scan(text: str) -> list[float]:
    try:
        return [float(v) if v.strip() else np.nan for v in text.split(",")]
    except ValueError:
        raise UsageError(f"bad --rssi value {text!r}") from None


def cmd_locate(args) -> int:
    _require_files(args.db)
    db = load_database(args.db)
    scans = [_parse_scan(s) for s in args.rssi]
    cfg = _cfg(args.algo, args, db)
    prev = None
    if args.prev is not None:
        prev = _parse_float_list(args.prev)
        if len(prev) != 2:
            raise UsageError("--prev takes x,y")
    elif cfg.algorithm.uses_prior:
        raise UsageError(f"{args.algo} needs --prev x,y")
    query = query_fingerprint(scans, cfg.missing_policy or db.policy)
    est = locate(db, query, cfg, prev)
    print(json.dumps({"algorithm": args.algo, "x": float(est.location[0]), "y": float(est.location[1]),
                      "neighbors": [{"rp": i, "distance": d} for i, d in est.neighbors]}, sort_keys=True))
    return 0


# --------------------------------------------------------------------------

def _common(p, algo_repeat=False, algo_default=None):
    if algo_repeat:
        p.add_argument("--algo", action="append", choices=sorted(PRESETS), help="repeatable")
    else:
        p.add_argument("--algo", choices=sorted(PRESETS), default=algo_default)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--n", type=int, default=7)
    p.add_argument("--sigma", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--missing-floor", type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="srlknn", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"srlknn {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    b = sub.add_parser("build", help="build a fingerprint database")
    bsub = b.add_subparsers(dest="source", required=True)
    syn = bsub.add_parser("synthetic")
    syn.add_argument("--seed", type=int, default=0)
    syn.add_argument("--steps", type=int, default=175)
    syn.add_argument("--trajectories", type=int, default=1)
    syn.add_argument("--shadow", type=float, default=4.0)
    syn.add_argument("--grid", type=float, default=1.0)
    syn.add_argument("--scans-per-rp", type=int, default=100)
    syn.add_argument("--test-scans", type=int, default=1)
    syn.add_argument("--missing-floor", type=float, default=-100.0)
    syn.add_argument("--no-twins", dest="twins", action="store_false")
    uji = bsub.add_parser("uji")
    uji.add_argument("--train", required=True)
    uji.add_argument("--valid")
    uji.add_argument("--building", type=int, nargs="+")
    uji.add_argument("--floor", type=int, nargs="+")
    uji.add_argument("--phone-ids", type=int, nargs="+")
    uji.add_argument("--missing-floor", type=float, default=-104.0)
    raw = bsub.add_parser("raw-scans")
    raw.add_argument("--scans", required=True)
    raw.add_argument("--grid", type=float, default=None)
    raw.add_argument("--missing-floor", type=float, default=-100.0)
    for p in (syn, uji, raw):
        p.add_argument("--out-dir", required=True)
    b.set_defaults(func=cmd_build)

    ev = sub.add_parser("evaluate", help="replay trajectories with several algorithms")
    ev.add_argument("--db", required=True)
    ev.add_argument("--traj", action="append", required=True, help="CSV file or directory; repeatable")
    ev.add_argument("--out-dir", required=True)
    ev.add_argument("--prior", default="estimated", help="estimated | truth | perturbed:E")
    ev.add_argument("--initial", choices=["known", "wknn"], default="known")
    ev.add_argument("--stationary-threshold", type=float, default=None)
    _common(ev, algo_repeat=True)
    ev.set_defaults(func=cmd_evaluate)

    pe = sub.add_parser("perturb", help="erroneous-history study")
    pe.add_argument("--db", required=True)
    pe.add_argument("--traj", action="append", required=True)
    pe.add_argument("--out-dir", required=True)
    pe.add_argument("--errors", default="0,0.5,1,1.5,2", help="E values as multiples of sigma")
    pe.add_argument("--seeds", type=int, default=10)
    _common(pe, algo_default="srl-hist")
    pe.set_defaults(func=cmd_perturb)

    am = sub.add_parser("ambiguity", help="Pearson-correlation ambiguity analysis")
    am.add_argument("--db", required=True)
    am.add_argument("--out-dir", required=True)
    am.add_argument("--threshold", default="auto", help="'auto' or a fixed correlation")
    am.add_argument("--grid-size", type=float, default=None)
    am.set_defaults(func=cmd_ambiguity)

    lo = sub.add_parser("locate", help="localize one set of scans")
    lo.add_argument("--db", required=True)
    lo.add_argument("--rssi", action="append", required=True,
                    help="comma-separated RSSI per AP, empty for unheard; repeat for several scans. "
                         "Write --rssi=-40,-60 so the leading minus is not read as a flag")
    lo.add_argument("--prev", default=None, help="previous position x,y")
    _common(lo, algo_default="srl-mean")
    lo.set_defaults(func=cmd_locate)
    return ap


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError, ParseError, DimensionMismatch, FileNotFoundError, ValueError) as exc:
        print(f"srlknn: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SrlKnnError as exc:
        print(f"srlknn: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
