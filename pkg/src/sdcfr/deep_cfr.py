"""Deep CFR: alternating-update external sampling with neural advantage regression.

On iteration ``t`` player ``i = t % 2`` traverses. Both players act by the
iteration strategy derived from their latest value model (uniform while a
player has none yet). The traverser's advantage buffer and the opponent's
strategy buffer are filled, then a new value model is trained for ``i``:
from scratch while ``t < 3``, otherwise warm-started from ``i``'s model of
iteration ``t - 2``.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .game import Game, Policy
from .sampling import (
    EmptyBuffer,
    InfoCache,
    SampleBuffer,
    exhaustive_traverse,
    external_sampling_traverse,
    traversal_rng,
)

log = logging.getLogger(__name__)


class NoLegalAction(ValueError):
    pass


def advantage_policy(outputs, legal_mask) -> np.ndarray:
    """Regret matching on predicted advantages, full action width.

    Illegal heads are ignored. When no legal output is positive the whole
    mass goes to the legal action with the largest output (not uniform).
    """
    out = np.asarray(outputs, dtype=np.float64)
    mask = np.asarray(legal_mask, dtype=bool)
    if not mask.any():
        raise NoLegalAction("legal mask is empty")
    pos = np.where(mask, np.maximum(out, 0.0), 0.0)
    total = pos.sum()
    if total > 0.0:
        return pos / total
    probs = np.zeros(out.shape[-1])
    probs[np.argmax(np.where(mask, out, -np.inf))] = 1.0
    return probs


def advantage_policy_batch(outputs: np.ndarray, masks: np.ndarray) -> np.ndarray:
    out = np.asarray(outputs, dtype=np.float64)
    if not masks.any(axis=1).all():
        raise NoLegalAction("a legal mask is empty")
    pos = np.where(masks, np.maximum(out, 0.0), 0.0)
    total = pos.sum(axis=1, keepdims=True)
    fallback = np.zeros_like(out)
    fallback[np.arange(out.shape[0]), np.argmax(np.where(masks, out, -np.inf), axis=1)] = 1.0
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(total > 0.0, pos / np.where(total > 0.0, total, 1.0), fallback)


def avg_policy(outputs, legal_mask) -> np.ndarray:
    """Average-network head: clip legal outputs at 0 and renormalize; all-zero -> uniform."""
    out = np.asarray(outputs, dtype=np.float64)
    mask = np.asarray(legal_mask, dtype=bool)
    if not mask.any():
        raise NoLegalAction("legal mask is empty")
    pos = np.where(mask, np.maximum(out, 0.0), 0.0)
    total = pos.sum()
    if total > 0.0:
        return pos / total
    return mask / mask.sum()


def avg_policy_batch(outputs: np.ndarray, masks: np.ndarray) -> np.ndarray:
    pos = np.where(masks, np.maximum(np.asarray(outputs, dtype=np.float64), 0.0), 0.0)
    total = pos.sum(axis=1, keepdims=True)
    uniform = masks / masks.sum(axis=1, keepdims=True)
    return np.where(total > 0.0, pos / np.where(total > 0.0, total, 1.0), uniform)


class NetModel:
    """Value or average network; ``predict`` ignores infoset keys."""

    def __init__(self, params: nn.NetParams):
        self.params = params

    def predict(self, features: np.ndarray, keys=None) -> np.ndarray:
        return nn.forward(self.params, features)


class TableModel:
    """Table-backed stand-in for a network: infoset key -> output vector.

    Used to substitute exact quantities for trained networks in tests, which
    separates approximation error from algorithmic error.
    """

    def __init__(self, table: dict[bytes, np.ndarray], num_actions: int, default: float = 0.0):
        self.table = table
        self.num_actions = num_actions
        self.default = default

    def predict(self, features: np.ndarray, keys=None) -> np.ndarray:
        if keys is None:
            raise ValueError("a table model needs infoset keys")
        out = np.full((len(keys), self.num_actions), self.default)
        for i, k in enumerate(keys):
            v = self.table.get(k)
            if v is not None:
                out[i, : len(v)] = v
        return out


class ModelPolicy(Policy):
    """Policy from a model's outputs through ``head`` (advantage or average head).

    Distributions are memoized per infoset; the model is fixed for the
    lifetime of the object.
    """

    def __init__(self, game: Game, model, head=advantage_policy, cache: InfoCache | None = None):
        self.game = game
        self.model = model
        self.head = head
        self.cache = cache or InfoCache(game)
        self._memo: dict[bytes, np.ndarray] = {}

    def distribution(self, state) -> np.ndarray:
        player = self.game.current_player(state)
        key, x, mask = self.cache.observe(state, player)
        probs = self._memo.get(key)
        if probs is None:
            out = self.model.predict(x[None, :], [key])[0]
            probs = self._memo[key] = self.head(out, mask)[mask]
        return probs

    def distributions(self, states) -> list[np.ndarray]:
        if not states:
            return []
        obs = [self.cache.observe(s, self.game.current_player(s)) for s in states]
        keys = [o[0] for o in obs]
        x = np.stack([o[1] for o in obs])
        masks = np.stack([o[2] for o in obs])
        head = advantage_policy_batch if self.head is advantage_policy else avg_policy_batch
        probs = head(self.model.predict(x, keys), masks)
        return [p[m] for p, m in zip(probs, masks)]


class _Uniform(Policy):
    def __init__(self, game: Game):
        self.game = game

    def distribution(self, state) -> np.ndarray:
        n = len(self.game.legal_actions(state))
        return np.full(n, 1.0 / n)


@dataclass
class DeepCFRConfig:
    traversals: int = 1500
    advantage_capacity: int = 1_000_000
    strategy_capacity: int = 1_000_000
    hidden_dims: tuple[int, ...] = (64, 64, 64)
    value_train: nn.TrainConfig = field(default_factory=lambda: nn.TrainConfig(2048, 750))
    avg_train: nn.TrainConfig = field(default_factory=lambda: nn.TrainConfig(2048, 5000))
    collect_strategy_samples: bool = True
    traversal: str = "external"
    keep_keys: bool = False
    exact: bool = False
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.traversal not in ("external", "exhaustive"):
            raise ValueError(f"unknown traversal scheme {self.traversal!r}")
        if self.traversals <= 0 or self.advantage_capacity <= 0 or self.strategy_capacity <= 0:
            raise ValueError("traversals and capacities must be positive")


def net_trainer(game: Game, config: DeepCFRConfig):
    """Default value-model trainer: the MLP regressor."""
    net_cfg = nn.NetConfig(game.feature_size, game.num_actions, config.hidden_dims)

    def fit(player: int, buffer: SampleBuffer, t: int, rng: np.random.Generator, warm: NetModel | None):
        init = warm.params if warm is not None else nn.init_params(net_cfg, rng)
        params, loss = nn.train(init, buffer, config.value_train, t, rng)
        return NetModel(params), loss

    return fit


def tabular_trainer(num_actions: int):
    """Exact 'regressor': per-infoset minimizer of the weighted squared loss.

    Needs buffers built with ``keep_keys=True``. The minimizer of
    sum_j (t_j / T) w_j (f(I) - y_j)^2 is the weighted mean of the targets.
    """

    def fit(player: int, buffer: SampleBuffer, t: int, rng, warm):
        x, y, mask, its, w = buffer.arrays()
        if x.shape[0] == 0:
            raise EmptyBuffer("cannot fit an empty buffer")
        num: dict[bytes, np.ndarray] = {}
        den: dict[bytes, float] = {}
        for key, target, weight in zip(buffer.keys, y, its * w):
            if key in num:
                num[key] += weight * target
                den[key] += weight
            else:
                num[key] = weight * target
                den[key] = float(weight)
        table = {k: (num[k] / den[k] if den[k] > 0 else np.zeros(num_actions)) for k in num}
        return TableModel(table, num_actions), 0.0

    return fit


class DeepCFR:
    """Deep CFR run state. ``iterate()`` performs one algorithm iteration.

    ``model_sinks`` receive every new value model via
    ``add(player, iteration, model)``; an SD-CFR model buffer is such a sink.
    ``value_trainer`` replaces network fitting (see :func:`tabular_trainer`).
    """

    def __init__(self, game: Game, config: DeepCFRConfig | None = None, model_sinks=(), value_trainer=None):
        self.game = game
        self.config = config or DeepCFRConfig()
        cfg = self.config
        self.t = 0
        self.cache = InfoCache(game)
        dtype = np.float64 if cfg.exact else np.float32
        self.advantage_buffers = [
            SampleBuffer(cfg.advantage_capacity, game.feature_size, game.num_actions, cfg.keep_keys, dtype)
            for _ in range(2)
        ]
        self.strategy_buffers = [
            SampleBuffer(cfg.strategy_capacity, game.feature_size, game.num_actions, cfg.keep_keys, dtype)
            for _ in range(2)
        ]
        self.value_models: list = [None, None]
        self.model_sinks = list(model_sinks)
        self.value_trainer = value_trainer or net_trainer(game, cfg)
        self.history: list[dict] = []
        self.fallback_count = 0

    def iteration_policy(self, player: int) -> Policy:
        model = self.value_models[player]
        if model is None:
            return _Uniform(self.game)
        return ModelPolicy(self.game, model, advantage_policy, self.cache)

    def iterate(self) -> dict:
        """Run iteration ``t + 1``; returns its metrics row."""
        cfg = self.config
        t = self.t + 1
        i = t % 2
        start = time.perf_counter()
        policies = (self.iteration_policy(0), self.iteration_policy(1))
        adv_samples: list = []
        strat_samples: list = []
        strat_sink = strat_samples.append if cfg.collect_strategy_samples else None
        root = self.game.initial_state()
        if cfg.traversal == "exhaustive":
            exhaustive_traverse(
                self.game, root, i, policies, t, adv_samples.append, strat_sink, self.cache, cfg.keep_keys
            )
        else:

            def one(k: int):
                adv: list = []
                strat: list = []
                external_sampling_traverse(
                    self.game,
                    root,
                    i,
                    policies,
                    t,
                    adv.append,
                    strat.append if strat_sink else None,
                    traversal_rng(cfg.seed, t, k),
                    self.cache,
                    cfg.keep_keys,
                )
                return adv, strat

            if cfg.workers > 1:
                with ThreadPoolExecutor(cfg.workers) as pool:
                    chunks = list(pool.map(one, range(cfg.traversals)))
            else:
                chunks = [one(k) for k in range(cfg.traversals)]
            for adv, strat in chunks:
                adv_samples += adv
                strat_samples += strat

        insert_rng = np.random.default_rng([cfg.seed, t, 0xB0F])
        for s in adv_samples:
            self.advantage_buffers[i].add(s, insert_rng)
        for s in strat_samples:
            self.strategy_buffers[1 - i].add(s, insert_rng)

        warm = self.value_models[i] if t >= 3 else None
        train_rng = np.random.default_rng([cfg.seed, t, 0x7EA])
        model, loss = self.value_trainer(i, self.advantage_buffers[i], t, train_rng, warm)
        self.value_models[i] = model
        for sink in self.model_sinks:
            sink.add(i, t, model)
        self.t = t
        row = {
            "iteration": t,
            "traverser": i,
            "advantage_samples": len(adv_samples),
            "strategy_samples": len(strat_samples),
            "adv_buffer_0": len(self.advantage_buffers[0]),
            "adv_buffer_1": len(self.advantage_buffers[1]),
            "strat_buffer_0": len(self.strategy_buffers[0]),
            "strat_buffer_1": len(self.strategy_buffers[1]),
            "value_loss": loss,
            "wall_time": time.perf_counter() - start,
        }
        self.history.append(row)
        log.debug("iteration %d: %s", t, row)
        return row

    def run(self, iterations: int) -> "DeepCFR":
        for _ in range(iterations):
            self.iterate()
        return self

    def train_average_network(self, player: int, train_config: nn.TrainConfig | None = None, seed_tag: int = 0):
        """Fit the average-strategy network for ``player`` from random initialization."""
        return train_average_network(
            self.strategy_buffers[player],
            train_config or self.config.avg_train,
            self.t,
            np.random.default_rng([self.config.seed, self.t, player, 0xA7, seed_tag]),
            nn.NetConfig(self.game.feature_size, self.game.num_actions, self.config.hidden_dims),
        )

    def average_policy(self, params_by_player) -> Policy:
        """Profile policy acting by each player's average network."""
        return _PerPlayer(self.game, [ModelPolicy(self.game, NetModel(p), avg_policy, self.cache) for p in params_by_player])


def train_average_network(
    buffer: SampleBuffer,
    train_config: nn.TrainConfig,
    current_iteration: int,
    rng: np.random.Generator,
    net_config: nn.NetConfig,
) -> nn.NetParams:
    if len(buffer) == 0:
        raise EmptyBuffer("strategy buffer is empty")
    params = nn.init_params(net_config, rng)
    params, _ = nn.train(params, buffer, train_config, current_iteration, rng)
    return params


class _PerPlayer(Policy):
    def __init__(self, game: Game, policies):
        self.game = game
        self.policies = policies

    def reset(self, rng):
        for p in self.policies:
            p.reset(rng)

    def distribution(self, state):
        return self.policies[self.game.current_player(state)].distribution(state)

    def distributions(self, states):
        return [self.distribution(s) for s in states]
