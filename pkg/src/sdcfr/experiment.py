"""Experiment configuration, run directories, recipes and resumable runs.

A run directory holds::

    config.json            copy of the configuration
    state.json             last resumable point (iteration, file checksums)
    manifest.json          value-network checkpoints (player, iteration, path, bytes, sha256)
    manifest_reservoir<C>.json   extra reservoir-mode model buffers
    checkpoints/           value_p<i>_t<t>.sdcn and avg_p<i>_t<t>.sdcn
    buffers/               advantage/strategy sample buffer spills
    tabular/               regret and average-strategy tables (tabular runs)
    metrics.csv            per-iteration counters and losses
    exploitability.csv     (run_id, iteration, e_total_mA, e_per_player_mA)
    head_to_head.csv       (iteration, mean, ci95, n_hands, units)
    disagreement.csv       (depth, round, mean, ci95, std, n)
    timing.csv             wall-clock seconds per iteration (not reproducible)

Everything except ``timing.csv`` is a deterministic function of the config.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import os
import shutil
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nn
from .deep_cfr import DeepCFR, DeepCFRConfig
from .evaluation import exploitability, head_to_head, strategy_disagreement
from .games import make_game
from .games.leduc import LeducConfig
from .sampling import SampleBuffer
from .sd_cfr import CorruptModelBuffer, ModelBuffer, SDCFRPolicy, TrajectoryPolicy
from .tabular import TabularCFR, read_snapshot, write_snapshot

log = logging.getLogger(__name__)

ALGORITHMS = ("tabular_vanilla", "tabular_linear", "deep_cfr", "sd_cfr_shared")
GAMES = ("kuhn", "leduc", "big_leduc")

EXPLOITABILITY_HEADER = ["run_id", "iteration", "e_total_mA", "e_per_player_mA"]
HEAD_TO_HEAD_HEADER = ["iteration", "mean", "ci95", "n_hands", "units"]
DISAGREEMENT_HEADER = ["depth", "round", "mean", "ci95", "std", "n"]
METRICS_HEADER = [
    "iteration",
    "traverser",
    "advantage_samples",
    "strategy_samples",
    "adv_buffer_0",
    "adv_buffer_1",
    "strat_buffer_0",
    "strat_buffer_1",
    "value_loss",
]


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` maps field names to messages."""

    def __init__(self, errors: dict[str, str]):
        self.errors = errors
        super().__init__("; ".join(f"{k}: {v}" for k, v in errors.items()))


class CorruptRun(RuntimeError):
    pass


@dataclass
class TrainSettings:
    batch_size: int = 2048
    n_updates: int = 750
    lr: float = 1e-3

    def to_train_config(self) -> nn.TrainConfig:
        return nn.TrainConfig(self.batch_size, self.n_updates, self.lr)


@dataclass
class ExperimentConfig:
    """Every field has the small-poker default; see :func:`recipe` for presets."""

    name: str = "run"
    game: str = "leduc"
    leduc: dict | None = None
    algorithm: str = "sd_cfr_shared"
    iterations: int = 150
    traversals: int = 1500
    advantage_capacity: int = 1_000_000
    strategy_capacity: int = 1_000_000
    hidden_dims: list[int] = field(default_factory=lambda: [64, 64, 64])
    value_train: TrainSettings = field(default_factory=TrainSettings)
    avg_train: TrainSettings = field(default_factory=lambda: TrainSettings(2048, 5000))
    tabular_updates: str = "alternating"
    eval_every: int = 10
    eval_at: list[int] = field(default_factory=list)
    exploitability: bool = True
    reservoir_capacities: list[int] = field(default_factory=list)
    head_to_head_pairs: int = 0
    disagreement_rollouts: int = 0
    seed: int = 0
    workers: int = 1
    out: str = "runs/run"

    # -- (de)serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError({"<root>": "configuration must be a JSON object"})
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(raw) - names)
        if unknown:
            raise ConfigError({k: "unknown field" for k in unknown})
        kwargs = dict(raw)
        errors: dict[str, str] = {}
        for key in ("value_train", "avg_train"):
            if key in kwargs:
                sub = kwargs[key]
                if not isinstance(sub, dict):
                    errors[key] = "must be an object"
                    continue
                bad = sorted(set(sub) - {"batch_size", "n_updates", "lr"})
                if bad:
                    errors[key] = f"unknown keys {bad}"
                    continue
                kwargs[key] = TrainSettings(**sub)
        if errors:
            raise ConfigError(errors)
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError({"<file>": f"cannot read {path}: {exc.strerror}"}) from exc
        except json.JSONDecodeError as exc:
            raise ConfigError({"<file>": f"invalid JSON at line {exc.lineno}: {exc.msg}"}) from exc
        return cls.from_dict(raw)

    def validate(self) -> None:
        errors: dict[str, str] = {}

        def positive_int(name, value):
            if not isinstance(value, int) or isinstance(value, bool) or value <= 0:
                errors[name] = f"must be a positive integer, got {value!r}"

        if self.game not in GAMES:
            errors["game"] = f"must be one of {list(GAMES)}, got {self.game!r}"
        if self.algorithm not in ALGORITHMS:
            errors["algorithm"] = f"must be one of {list(ALGORITHMS)}, got {self.algorithm!r}"
        if self.tabular_updates not in ("alternating", "simultaneous"):
            errors["tabular_updates"] = "must be 'alternating' or 'simultaneous'"
        for name in ("iterations", "traversals", "advantage_capacity", "strategy_capacity", "eval_every", "workers"):
            positive_int(name, getattr(self, name))
        for name in ("head_to_head_pairs", "disagreement_rollouts", "seed"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 0:
                errors[name] = f"must be a non-negative integer, got {v!r}"
        if not self.hidden_dims or not all(isinstance(h, int) and h > 0 for h in self.hidden_dims):
            errors["hidden_dims"] = "must be a non-empty list of positive integers"
        for name in ("value_train", "avg_train"):
            ts = getattr(self, name)
            for sub in ("batch_size", "n_updates"):
                v = getattr(ts, sub)
                if not isinstance(v, int) or v <= 0:
                    errors[f"{name}.{sub}"] = f"must be a positive integer, got {v!r}"
            if not isinstance(ts.lr, (int, float)) or ts.lr <= 0:
                errors[f"{name}.lr"] = f"must be positive, got {ts.lr!r}"
        if not all(isinstance(c, int) and c > 0 for c in self.reservoir_capacities):
            errors["reservoir_capacities"] = "must be positive integers"
        if not all(isinstance(c, int) and c > 0 for c in self.eval_at):
            errors["eval_at"] = "must be positive integers"
        if self.algorithm.startswith("tabular") and self.game == "big_leduc":
            errors["algorithm"] = "tabular solvers are not supported on big_leduc"
        if self.algorithm != "sd_cfr_shared" and (self.reservoir_capacities or self.disagreement_rollouts):
            errors["algorithm"] = "model buffers and disagreement need algorithm 'sd_cfr_shared'"
        if self.head_to_head_pairs and self.algorithm != "sd_cfr_shared":
            errors["head_to_head_pairs"] = "head-to-head compares both averaging paths of 'sd_cfr_shared'"
        if self.leduc is not None:
            if self.game == "kuhn":
                errors["leduc"] = "only meaningful for Leduc games"
            else:
                try:
                    LeducConfig(**{k: tuple(v) if isinstance(v, list) else v for k, v in self.leduc.items()})
                except (TypeError, ValueError) as exc:
                    errors["leduc"] = str(exc)
        if errors:
            raise ConfigError(errors)

    def make_game(self):
        leduc = None
        if self.leduc is not None:
            leduc = {k: tuple(v) if isinstance(v, list) else v for k, v in self.leduc.items()}
        return make_game(self.game, leduc)

    def deep_config(self) -> DeepCFRConfig:
        return DeepCFRConfig(
            traversals=self.traversals,
            advantage_capacity=self.advantage_capacity,
            strategy_capacity=self.strategy_capacity,
            hidden_dims=tuple(self.hidden_dims),
            value_train=self.value_train.to_train_config(),
            avg_train=self.avg_train.to_train_config(),
            seed=self.seed,
            workers=self.workers,
        )

    def eval_points(self) -> list[int]:
        pts = {t for t in range(self.eval_every, self.iterations + 1, self.eval_every)}
        pts |= {t for t in self.eval_at if t <= self.iterations}
        pts.add(self.iterations)
        return sorted(pts)


def config_diff(a: dict, b: dict, prefix: str = "") -> list[str]:
    """Human-readable differences between two config trees."""
    out = []
    for key in sorted(set(a) | set(b)):
        name = f"{prefix}{key}"
        if key not in a:
            out.append(f"+ {name} = {b[key]!r}")
        elif key not in b:
            out.append(f"- {name} = {a[key]!r}")
        elif isinstance(a[key], dict) and isinstance(b[key], dict):
            out += config_diff(a[key], b[key], name + ".")
        elif a[key] != b[key]:
            out.append(f"~ {name}: {a[key]!r} -> {b[key]!r}")
    return out


# -- recipes -----------------------------------------------------------------


def recipe(name: str, seed: int = 0, out: str | None = None) -> ExperimentConfig:
    """Preset configurations.

    ``fig1a``     Leduc, small-poker hyperparameters, both averaging paths.
    ``fig1b``     as ``fig1a`` plus reservoir model buffers of 250/500/1000.
    ``bigleduc``  12 ranks, 6 raises per round, large-game hyperparameters.
    ``smoke``     ``fig1a`` with 300 traversals and 150 value updates.
    ``fig1b-desk`` and ``bigleduc-desk`` are shrunk versions sized for one CPU.
    """
    base = dict(
        name=f"{name}-s{seed}",
        seed=seed,
        out=out or f"runs/{name}-s{seed}",
        game="leduc",
        algorithm="sd_cfr_shared",
        iterations=150,
        eval_every=10,
        eval_at=[30],
    )
    if name == "fig1a":
        pass
    elif name == "fig1b":
        base.update(reservoir_capacities=[250, 500, 1000], iterations=2000, eval_every=100)
    elif name == "smoke":
        base.update(traversals=300, value_train=TrainSettings(2048, 150), avg_train=TrainSettings(2048, 1000))
    elif name == "fig1b-desk":
        base.update(
            traversals=100,
            value_train=TrainSettings(512, 100),
            avg_train=TrainSettings(512, 200),
            iterations=800,
            eval_every=100,
            eval_at=[],
            reservoir_capacities=[250],
        )
    elif name == "bigleduc":
        base.update(
            game="big_leduc",
            iterations=60,
            traversals=8800,
            advantage_capacity=4_000_000,
            strategy_capacity=4_000_000,
            value_train=TrainSettings(2816, 1200),
            avg_train=TrainSettings(5632, 10000),
            exploitability=False,
            eval_every=60,
            eval_at=[],
            disagreement_rollouts=10000,
        )
    elif name == "bigleduc-desk":
        base.update(
            game="big_leduc",
            iterations=60,
            traversals=300,
            advantage_capacity=4_000_000,
            strategy_capacity=4_000_000,
            value_train=TrainSettings(2048, 150),
            avg_train=TrainSettings(2048, 1500),
            exploitability=False,
            eval_every=60,
            eval_at=[],
            disagreement_rollouts=3000,
        )
    else:
        raise ConfigError({"recipe": f"unknown recipe {name!r}"})
    cfg = ExperimentConfig(**base)
    cfg.validate()
    return cfg


RECIPES = ("fig1a", "fig1b", "bigleduc", "smoke", "fig1b-desk", "bigleduc-desk")


# -- CSV helpers ---------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


class CsvLog:
    def __init__(self, path: Path, header: list[str]):
        self.path = path
        self.header = header
        if not path.exists():
            with open(path, "w", newline="") as f:
                csv.writer(f).writerow(header)

    def write(self, row) -> None:
        with open(self.path, "a", newline="") as f:
            csv.writer(f).writerow([_fmt(v) for v in row])

    def rows(self) -> list[dict]:
        with open(self.path, newline="") as f:
            return list(csv.DictReader(f))

    def truncate_after(self, column: str, last: int) -> None:
        """Drop rows whose ``column`` exceeds ``last`` (rows written after the resume point)."""
        with open(self.path, newline="") as f:
            reader = csv.reader(f)
            header = next(reader)
            idx = header.index(column)
            keep = [r for r in reader if int(r[idx]) <= last]
        with open(self.path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(header)
            w.writerows(keep)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


# -- the run -------------------------------------------------------------------


class Run:
    """One experiment in one run directory."""

    def __init__(self, config: ExperimentConfig, root: Path):
        self.config = config
        self.root = root
        self.game = config.make_game()
        self.tabular = config.algorithm.startswith("tabular")
        self.ckpt_dir = root / "checkpoints"
        self.metrics = CsvLog(root / "metrics.csv", METRICS_HEADER)
        self.expl = CsvLog(root / "exploitability.csv", EXPLOITABILITY_HEADER)
        self.h2h = CsvLog(root / "head_to_head.csv", HEAD_TO_HEAD_HEADER)
        self.timing = CsvLog(root / "timing.csv", ["iteration", "seconds"])
        self.solver: TabularCFR | None = None
        self.deep: DeepCFR | None = None
        self.model_buffers: list[ModelBuffer] = []

    # construction

    def fresh(self) -> "Run":
        cfg = self.config
        if self.tabular:
            mode = "vanilla" if cfg.algorithm == "tabular_vanilla" else "linear"
            self.solver = TabularCFR(self.game, mode, cfg.tabular_updates)
        else:
            self.model_buffers = [ModelBuffer("keep_all", None, self.ckpt_dir, cfg.seed)]
            if cfg.algorithm == "sd_cfr_shared":
                self.model_buffers += [
                    ModelBuffer("reservoir", c, self.ckpt_dir, cfg.seed) for c in cfg.reservoir_capacities
                ]
            self.deep = DeepCFR(self.game, cfg.deep_config(), model_sinks=self.model_buffers)
        return self

    @property
    def t(self) -> int:
        return self.solver.t if self.tabular else self.deep.t

    def _manifest_name(self, buf: ModelBuffer) -> str:
        return "manifest.json" if buf.mode == "keep_all" else f"manifest_reservoir{buf.capacity}.json"

    # persistence

    def save_state(self) -> None:
        files: dict[str, str] = {}
        if self.tabular:
            d = self.root / "tabular"
            d.mkdir(exist_ok=True)
            s = self.solver
            write_snapshot(d / "regrets.bin", s.regrets)
            write_snapshot(d / "avg_numerator.bin", s.avg.numerator)
            write_snapshot(d / "avg_denominator.bin", {k: np.array([v]) for k, v in s.avg.denominator.items()})
            write_snapshot(d / "action_counts.bin", {k: np.array([float(v)]) for k, v in s.action_counts.items()})
            for name in ("regrets.bin", "avg_numerator.bin", "avg_denominator.bin", "action_counts.bin"):
                files[f"tabular/{name}"] = _sha256(d / name)
            extra = {"updated": sorted(s.updated)}
        else:
            d = self.root / "buffers"
            d.mkdir(exist_ok=True)
            for p in (0, 1):
                for kind, bufs in (("advantage", self.deep.advantage_buffers), ("strategy", self.deep.strategy_buffers)):
                    path = d / f"{kind}_p{p}.sdrb"
                    bufs[p].spill(path)
                    files[f"buffers/{path.name}"] = _sha256(path)
            for buf in self.model_buffers:
                name = self._manifest_name(buf)
                buf.write_manifest(self.root / name)
                files[name] = _sha256(self.root / name)
            extra = {}
        state = {"iteration": self.t, "files": files, **extra}
        tmp = self.root / "state.json.tmp"
        tmp.write_text(json.dumps(state, indent=1))
        os.replace(tmp, self.root / "state.json")

    def restore(self) -> "Run":
        try:
            state = json.loads((self.root / "state.json").read_text())
        except (OSError, ValueError) as exc:
            raise CorruptRun(f"{self.root}: no readable state.json") from exc
        for rel, digest in state["files"].items():
            path = self.root / rel
            if not path.exists():
                raise CorruptRun(f"missing file {rel}")
            if _sha256(path) != digest:
                raise CorruptRun(f"checksum mismatch for {rel}")
        t = state["iteration"]
        cfg = self.config
        for log_ in (self.metrics, self.expl, self.h2h, self.timing):
            log_.truncate_after("iteration", t)
        if self.tabular:
            mode = "vanilla" if cfg.algorithm == "tabular_vanilla" else "linear"
            s = TabularCFR(self.game, mode, cfg.tabular_updates)
            d = self.root / "tabular"
            s.regrets.update(read_snapshot(d / "regrets.bin"))
            s.avg.numerator.update(read_snapshot(d / "avg_numerator.bin"))
            s.avg.denominator.update({k: float(v[0]) for k, v in read_snapshot(d / "avg_denominator.bin").items()})
            s.action_counts.update({k: int(v[0]) for k, v in read_snapshot(d / "action_counts.bin").items()})
            s.updated = set(state["updated"])
            s.t = t
            self.solver = s
            return self
        try:
            self.model_buffers = [ModelBuffer.from_manifest(self.root / "manifest.json", directory=self.ckpt_dir)]
            if cfg.algorithm == "sd_cfr_shared":
                for c in cfg.reservoir_capacities:
                    self.model_buffers.append(
                        ModelBuffer.from_manifest(self.root / f"manifest_reservoir{c}.json", directory=self.ckpt_dir)
                    )
        except CorruptModelBuffer as exc:
            raise CorruptRun(str(exc)) from exc
        deep = DeepCFR(self.game, cfg.deep_config(), model_sinks=self.model_buffers)
        for p in (0, 1):
            deep.advantage_buffers[p] = SampleBuffer.load(self.root / "buffers" / f"advantage_p{p}.sdrb")
            deep.strategy_buffers[p] = SampleBuffer.load(self.root / "buffers" / f"strategy_p{p}.sdrb")
            entries = self.model_buffers[0].entries[p]
            if entries:
                deep.value_models[p] = self.model_buffers[0].load(p, entries[-1])
        deep.t = t
        self.deep = deep
        return self

    # iteration and evaluation

    def step(self) -> None:
        start = time.perf_counter()
        if self.tabular:
            self.solver.iterate()
            t = self.solver.t
            self.metrics.write([t, t % 2 if self.config.tabular_updates == "alternating" else -1, 0, 0, 0, 0, 0, 0, 0.0])
        else:
            row = self.deep.iterate()
            self.metrics.write([row[k] for k in METRICS_HEADER])
        self.timing.write([self.t, round(time.perf_counter() - start, 3)])

    def average_nets(self) -> list[nn.NetParams]:
        t = self.t
        nets = []
        for p in (0, 1):
            params = self.deep.train_average_network(p)
            nn.save_checkpoint(self.ckpt_dir / f"avg_p{p}_t{t:06d}.sdcn", params, p, t)
            nets.append(params)
        return nets

    def evaluate(self, final: bool) -> None:
        cfg = self.config
        t = self.t
        run_id = cfg.name
        if self.tabular:
            pol = self.solver.average_policy()
            rep = exploitability(self.game, (pol, pol))
            self.expl.write([f"{run_id}:{cfg.algorithm}", t, rep.value, rep.extra["per_player"]])
            return
        deep_policy = None
        if cfg.exploitability or cfg.head_to_head_pairs or (final and cfg.disagreement_rollouts):
            deep_policy = self.deep.average_policy(self.average_nets())
        if cfg.exploitability:
            if cfg.algorithm == "sd_cfr_shared":
                for buf in self.model_buffers:
                    label = "sd_cfr" if buf.mode == "keep_all" else f"sd_cfr_reservoir{buf.capacity}"
                    sd = SDCFRPolicy(self.game, buf)
                    rep = exploitability(self.game, (sd, sd))
                    self.expl.write([f"{run_id}:{label}", t, rep.value, rep.extra["per_player"]])
            rep = exploitability(self.game, (deep_policy, deep_policy))
            self.expl.write([f"{run_id}:deep_cfr", t, rep.value, rep.extra["per_player"]])
        if cfg.head_to_head_pairs:
            traj = TrajectoryPolicy(self.game, self.model_buffers[0])
            rng = np.random.default_rng([cfg.seed, t, 0x42])
            rep = head_to_head(self.game, traj, deep_policy, cfg.head_to_head_pairs, rng)
            self.h2h.write([t, rep.value, rep.half_width, rep.count, rep.units])
        if final and cfg.disagreement_rollouts:
            rows = self.disagreement(deep_policy)
            log_ = CsvLog(self.root / "disagreement.csv", DISAGREEMENT_HEADER)
            for r in rows:
                log_.write([r.depth, r.round, r.mean, r.ci95, r.std, r.n])

    def disagreement(self, deep_policy):
        buf = self.model_buffers[0]
        sd = SDCFRPolicy(self.game, buf)
        actor = TrajectoryPolicy(self.game, buf)
        rng = np.random.default_rng([self.config.seed, self.t, 0xD15])
        return strategy_disagreement(self.game, sd, deep_policy, self.config.disagreement_rollouts, rng, actor=actor)

    def loop(self, stop_after: int | None = None) -> None:
        cfg = self.config
        points = set(cfg.eval_points())
        while self.t < cfg.iterations:
            self.step()
            t = self.t
            if t in points:
                self.evaluate(final=t == cfg.iterations)
                self.save_state()
            if stop_after is not None and t >= stop_after:
                return


def run_experiment(config: ExperimentConfig, stop_after: int | None = None, overwrite: bool = False) -> Path:
    """Execute ``config`` in ``config.out``; returns the run directory.

    ``stop_after`` ends the process early without finalizing, as an
    interruption would (used to exercise :func:`resume`).
    """
    config.validate()
    root = Path(config.out)
    if root.exists() and any(root.iterdir()):
        if not overwrite:
            raise ConfigError({"out": f"run directory {root} is not empty (use resume)"})
        shutil.rmtree(root)
    root.mkdir(parents=True, exist_ok=True)
    (root / "config.json").write_text(config.to_json())
    run = Run(config, root).fresh()
    run.loop(stop_after)
    return root


def resume(root: str | Path, config: ExperimentConfig | None = None, stop_after: int | None = None) -> Path:
    """Continue an interrupted run from its last saved state.

    Metrics rows past the saved iteration are discarded and recomputed, so
    the finished directory matches an uninterrupted run. A ``config`` that
    differs from the stored copy is refused with a field-level diff.
    """
    root = Path(root)
    try:
        stored = json.loads((root / "config.json").read_text())
    except (OSError, ValueError) as exc:
        raise CorruptRun(f"{root}: missing or unreadable config.json") from exc
    stored_cfg = ExperimentConfig.from_dict(stored)
    if config is not None:
        diff = config_diff(stored_cfg.to_dict(), config.to_dict())
        if diff:
            raise ConfigError({"config": "differs from the run's stored config:\n  " + "\n  ".join(diff)})
    if not (root / "state.json").exists():
        # interrupted before the first save point: start over
        shutil.rmtree(root)
        return run_experiment(stored_cfg, stop_after)
    run = Run(stored_cfg, root).restore()
    run.loop(stop_after)
    return root


def load_run(root: str | Path) -> Run:
    """Open a finished (or checkpointed) run for evaluation."""
    root = Path(root)
    try:
        cfg = ExperimentConfig.from_dict(json.loads((root / "config.json").read_text()))
    except (OSError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise CorruptRun(f"{root}: missing or unreadable config.json") from exc
    return Run(cfg, root).restore()


def average_policy_from_checkpoints(run: Run, iteration: int | None = None):
    """Deep CFR average-network policy stored at ``iteration`` (default: latest)."""
    t = iteration if iteration is not None else run.t
    nets = []
    for p in (0, 1):
        path = run.ckpt_dir / f"avg_p{p}_t{t:06d}.sdcn"
        if not path.exists():
            raise CorruptRun(f"no average network for player {p} at iteration {t}")
        try:
            params, _ = nn.load_checkpoint(path.read_bytes())
        except nn.CheckpointError as exc:
            raise CorruptRun(f"{path.name}: {exc}") from exc
        nets.append(params)
    return run.deep.average_policy(nets)


def read_exploitability(root: str | Path) -> dict[str, list[tuple[int, float]]]:
    """``run_id -> [(iteration, e_total_mA)]`` from a run directory."""
    out: dict[str, list] = {}
    with open(Path(root) / "exploitability.csv", newline="") as f:
        for row in csv.DictReader(f):
            out.setdefault(row["run_id"], []).append((int(row["iteration"]), float(row["e_total_mA"])))
    return out
