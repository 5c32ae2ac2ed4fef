"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 corrupt run directory.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from .evaluation import exploitability, head_to_head
from .experiment import (
    RECIPES,
    ConfigError,
    CorruptRun,
    ExperimentConfig,
    average_policy_from_checkpoints,
    load_run,
    recipe,
    resume,
    run_experiment,
)
from .games import enumerate_infosets, make_game
from .sd_cfr import SDCFRPolicy, TrajectoryPolicy
from .tabular import TabularCFR, write_snapshot

EXIT_OK, EXIT_CONFIG, EXIT_CORRUPT = 0, 2, 3


def _config_from_args(args) -> ExperimentConfig:
    if args.config and args.recipe:
        raise ConfigError({"--config": "give either --config or --recipe, not both"})
    if args.recipe:
        cfg = recipe(args.recipe, seed=args.seed or 0)
    elif args.config:
        cfg = ExperimentConfig.load(args.config)
    else:
        raise ConfigError({"--config": "required (or --recipe)"})
    if args.seed is not None:
        cfg.seed = args.seed
    if args.workers is not None:
        cfg.workers = args.workers
    if args.out is not None:
        cfg.out = args.out
    cfg.validate()
    return cfg


def cmd_train(args) -> int:
    cfg = _config_from_args(args)
    root = run_experiment(cfg, stop_after=args.stop_after, overwrite=args.overwrite)
    print(root)
    return EXIT_OK


def cmd_resume(args) -> int:
    target = args.run or args.out
    if target is None:
        raise ConfigError({"run": "give the run directory"})
    check = ExperimentConfig.load(args.config) if args.config else None
    print(resume(target, check, stop_after=args.stop_after))
    return EXIT_OK


def _run_dir(args) -> Path:
    if args.out is None:
        raise ConfigError({"--out": "run directory required"})
    return Path(args.out)


def cmd_eval_exploitability(args) -> int:
    run = load_run(_run_dir(args))
    w = csv.writer(sys.stdout)
    w.writerow(["run_id", "iteration", "e_total_mA", "e_per_player_mA"])
    name = run.config.name
    if run.tabular:
        pol = run.solver.average_policy()
        rep = exploitability(run.game, (pol, pol))
        w.writerow([f"{name}:{run.config.algorithm}", run.t, repr(rep.value), repr(rep.extra["per_player"])])
        return EXIT_OK
    for buf in run.model_buffers:
        label = "sd_cfr" if buf.mode == "keep_all" else f"sd_cfr_reservoir{buf.capacity}"
        sd = SDCFRPolicy(run.game, buf)
        rep = exploitability(run.game, (sd, sd))
        w.writerow([f"{name}:{label}", run.t, repr(rep.value), repr(rep.extra["per_player"])])
    try:
        deep = average_policy_from_checkpoints(run)
    except CorruptRun:
        return EXIT_OK
    rep = exploitability(run.game, (deep, deep))
    w.writerow([f"{name}:deep_cfr", run.t, repr(rep.value), repr(rep.extra["per_player"])])
    return EXIT_OK


def cmd_head2head(args) -> int:
    run = load_run(_run_dir(args))
    if run.tabular:
        raise ConfigError({"--out": "head-to-head needs a network run"})
    sd = TrajectoryPolicy(run.game, run.model_buffers[0])
    deep = average_policy_from_checkpoints(run)
    rep = head_to_head(run.game, sd, deep, args.pairs, np.random.default_rng(args.seed or 0))
    w = csv.writer(sys.stdout)
    w.writerow(["iteration", "mean", "ci95", "n_hands", "units"])
    w.writerow([run.t, repr(rep.value), repr(rep.half_width), rep.count, rep.units])
    return EXIT_OK


def cmd_compare(args) -> int:
    run = load_run(_run_dir(args))
    if run.tabular:
        raise ConfigError({"--out": "strategy comparison needs a network run"})
    deep = average_policy_from_checkpoints(run)
    run.config.disagreement_rollouts = args.rollouts
    if args.seed is not None:
        run.config.seed = args.seed
    rows = run.disagreement(deep)
    w = csv.writer(sys.stdout)
    w.writerow(["depth", "round", "mean", "ci95", "std", "n"])
    for r in rows:
        w.writerow([r.depth, r.round, repr(r.mean), repr(r.ci95), repr(r.std), r.n])
    return EXIT_OK


def cmd_enumerate(args) -> int:
    try:
        game = make_game(args.game)
    except ValueError as exc:
        raise ConfigError({"--game": str(exc)}) from exc
    out = Path(args.out) if args.out else None
    sets = enumerate_infosets(game)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "infosets.csv", "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["player", "key", "n_actions"])
            for p, rows in sets.items():
                for key, n in rows:
                    w.writerow([int(p), key.hex(), n])
    print(f"{game.name}: {len(sets[0])} + {len(sets[1])} infosets")
    if args.cfr_iterations:
        solver = TabularCFR(game, args.cfr_mode).run(args.cfr_iterations)
        pol = solver.average_policy()
        rep = exploitability(game, (pol, pol))
        print(f"{args.cfr_mode} CFR x{args.cfr_iterations}: exploitability {rep.value:.4f} {rep.units}")
        if out is not None:
            write_snapshot(out / "average_strategy.bin", solver.average_table())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sdcfr", description="tabular and neural CFR experiments on small poker games")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--seed", type=int)
        p.add_argument("--workers", type=int)
        p.add_argument("--out", help="run directory")

    p = sub.add_parser("train", help="run an experiment")
    common(p)
    p.add_argument("--recipe", choices=RECIPES)
    p.add_argument("--overwrite", action="store_true", help="replace an existing run directory")
    p.add_argument("--stop-after", type=int, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("resume", help="continue an interrupted run")
    common(p)
    p.add_argument("run", nargs="?", help="run directory (or --out)")
    p.add_argument("--stop-after", type=int, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_resume)

    p = sub.add_parser("eval-exploitability", help="exact exploitability of a run's latest strategies")
    common(p)
    p.set_defaults(func=cmd_eval_exploitability)

    p = sub.add_parser("head2head", help="SD-CFR trajectory play against the Deep CFR average network")
    common(p)
    p.add_argument("--pairs", type=int, default=10000, help="duplicate hand pairs")
    p.set_defaults(func=cmd_head2head)

    p = sub.add_parser("compare-strategies", help="per-depth disagreement of the two average strategies")
    common(p)
    p.add_argument("--rollouts", type=int, default=2000, help="episodes per player")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("enumerate", help="dump a game's infosets and optional tabular CFR oracle")
    common(p)
    p.add_argument("--game", default="kuhn")
    p.add_argument("--cfr-iterations", type=int, default=0)
    p.add_argument("--cfr-mode", choices=("vanilla", "linear"), default="linear")
    p.set_defaults(func=cmd_enumerate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CorruptRun as exc:
        print(f"corrupt run: {exc}", file=sys.stderr)
        return EXIT_CORRUPT


if __name__ == "__main__":
    sys.exit(main())
