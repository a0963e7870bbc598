"""Command line entry point ``predbeam``.

Sub-commands: ``run`` (Monte Carlo, writes CSV/JSON), ``single`` (one verbose
trial) and ``cdf`` (recompute CDF files from a tracks file).
"""
from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

import numpy as np

from ..config import ConfigError, ScenarioConfig, load_config
from .outputs import cdfs_from_tracks, emit_outputs, prepare_out_dir
from .simulate import run_monte_carlo, run_trial


def _scenario(args) -> ScenarioConfig:
    cfg = load_config(args.config) if args.config else ScenarioConfig()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if getattr(args, "trials", None) is not None:
        changes["trials"] = args.trials
    return cfg.replace(**changes) if changes else cfg


def _antenna_cases(cfg: ScenarioConfig, antennas: Optional[Sequence[int]]):
    if not antennas:
        return {cfg.n_tx: cfg}
    return {n: cfg.replace(n_tx=n, n_rx=n) for n in antennas}


def cmd_run(args) -> int:
    cfg = _scenario(args)
    cases = _antenna_cases(cfg, args.antennas)
    prepare_out_dir(args.out)
    runs = {}
    for n, case in cases.items():
        print(f"running {case.trials} trials with {n} antennas", file=sys.stderr)
        runs[n] = run_monte_carlo(case, n_jobs=args.jobs)
    paths = emit_outputs(runs, args.out, cfg.to_dict())
    for p in paths.values():
        print(p)
    return 0


def cmd_single(args) -> int:
    cfg = _scenario(args)
    if args.antennas:
        cfg = cfg.replace(n_tx=args.antennas, n_rx=args.antennas)
    rec = run_trial(cfg, args.trial)
    print(f"trial {args.trial}, seed {cfg.seed}, {cfg.n_tx} antennas")
    print("step vehicle " + " ".join(f"{s + '_err_deg':>16}" for s in rec.schemes))
    for n in range(rec.shape[1]):
        for k in range(rec.shape[2]):
            errs = [np.rad2deg(rec.angle_error(s)[0, n, k]) for s in rec.schemes]
            print(f"{n:4d} {k:7d} " + " ".join(f"{e:16.3e}" for e in errs))
    if rec.clamps:
        print("clamps: " + ", ".join(f"{k}={v}" for k, v in rec.clamps.items()))
    return 0


def cmd_cdf(args) -> int:
    for p in cdfs_from_tracks(args.tracks, args.out, args.antennas if args.antennas else "").values():
        print(p)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="predbeam", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Monte Carlo comparison of the three schemes")
    run.add_argument("--config", help="key = value scenario file")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--seed", type=int)
    run.add_argument("--trials", type=int)
    run.add_argument("--antennas", type=int, nargs="+", help="array sizes (N_t = N_r) to run")
    run.add_argument("--jobs", type=int, default=1, help="worker processes")
    run.set_defaults(func=cmd_run)

    single = sub.add_parser("single", help="one trial with per-step errors")
    single.add_argument("--config")
    single.add_argument("--seed", type=int)
    single.add_argument("--trial", type=int, default=0)
    single.add_argument("--antennas", type=int)
    single.set_defaults(func=cmd_single)

    cdf = sub.add_parser("cdf", help="recompute CDF files from a tracks file")
    cdf.add_argument("--tracks", required=True)
    cdf.add_argument("--out", required=True)
    cdf.add_argument("--antennas", type=int, help="value for the antennas column")
    cdf.set_defaults(func=cmd_cdf)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"predbeam: configuration error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"predbeam: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
