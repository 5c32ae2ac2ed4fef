"""Average strategy read straight off the stored value models.

Every value model ``t`` of player ``i`` defines an iteration strategy
``sigma^t`` through :func:`advantage_policy`. The linear average strategy is

    avg(I) = sum_t t * reach_t(I) * sigma^t(I) / sum_t t * reach_t(I)

where ``reach_t(I)`` multiplies ``sigma^t`` at each of ``i``'s earlier
decisions on the way to ``I``, evaluated at the action actually taken there.
Three ways of using it live here:

* :class:`TrajectoryPolicy` draws one model per episode with probability
  proportional to ``t`` and plays by it throughout;
* :func:`explicit_average_distribution` evaluates the formula at one infoset;
* :class:`SDCFRPolicy` evaluates it in bulk, with a :class:`ReachCache`
  carrying per-model reach products down a depth-first walk.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import nn
from .deep_cfr import NetModel, advantage_policy, advantage_policy_batch
from .game import Game, PlayerId, Policy
from .sampling import InfoCache, reservoir_slot


class EmptyModelBuffer(ValueError):
    pass


class QueryBeforeReset(RuntimeError):
    pass


class DepthMismatch(ValueError):
    pass


class CorruptModelBuffer(ValueError):
    pass


@dataclass
class ModelEntry:
    iteration: int
    path: str | None = None
    data: bytes | None = None
    model: object = None
    nbytes: int = 0
    sha256: str = ""


class ModelBuffer:
    """Per-player store of value models, ordered by iteration.

    ``mode="keep_all"`` keeps every model; ``mode="reservoir"`` keeps a
    uniform reservoir of ``capacity`` models per player. Networks are held
    as checkpoint bytes (or files under ``directory``) and decoded on demand
    through a small LRU; ``load_count`` counts decodes. Models without a
    checkpoint form (table stand-ins) are kept as objects.
    """

    def __init__(
        self,
        mode: str = "keep_all",
        capacity: int | None = None,
        directory: str | Path | None = None,
        seed: int = 0,
        lru_size: int = 8,
    ):
        if mode not in ("keep_all", "reservoir"):
            raise ValueError(f"unknown model buffer mode {mode!r}")
        if mode == "reservoir" and (capacity is None or capacity <= 0):
            raise ValueError("reservoir mode needs a positive capacity")
        self.mode = mode
        self.capacity = capacity
        self.directory = Path(directory) if directory is not None else None
        self.seed = seed
        self.lru_size = lru_size
        self.entries: dict[int, list[ModelEntry]] = {0: [], 1: []}
        self.seen = {0: 0, 1: 0}
        self.load_count = 0
        self._lru: OrderedDict = OrderedDict()
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self.entries[0]) + len(self.entries[1])

    def add(self, player: int, iteration: int, model) -> None:
        player = int(player)
        current = self.entries[player]
        if self.mode == "keep_all" and current and current[-1].iteration >= iteration:
            raise ValueError("iterations must be strictly increasing")
        entry = ModelEntry(iteration)
        if isinstance(model, NetModel):
            data = nn.checkpoint_bytes(model.params, player, iteration)
            entry.nbytes = len(data)
            entry.sha256 = hashlib.sha256(data).hexdigest()
            if self.directory is not None:
                self.directory.mkdir(parents=True, exist_ok=True)
                path = self.directory / f"value_p{player}_t{iteration:06d}.sdcn"
                path.write_bytes(data)
                entry.path = str(path)
            else:
                entry.data = data
        else:
            entry.model = model
        with self._lock:
            if self.mode == "keep_all":
                current.append(entry)
            else:
                rng = np.random.default_rng([self.seed, player, iteration, 0xB11])
                slot = reservoir_slot(self.seen[player], self.capacity, rng)
                if slot == len(current):
                    current.append(entry)
                elif slot is not None:
                    self._lru.pop((player, current[slot].iteration), None)
                    current[slot] = entry
            self.seen[player] += 1

    def iterations(self, player: int) -> list[int]:
        return sorted(e.iteration for e in self.entries[int(player)])

    def ordered(self, player: int) -> list[ModelEntry]:
        entries = sorted(self.entries[int(player)], key=lambda e: e.iteration)
        if not entries:
            raise EmptyModelBuffer(f"no models stored for player {int(player)}")
        return entries

    def load(self, player: int, entry: ModelEntry):
        if entry.model is not None:
            return entry.model
        k = (int(player), entry.iteration)
        with self._lock:
            hit = self._lru.get(k)
            if hit is not None:
                self._lru.move_to_end(k)
                return hit
            data = entry.data if entry.data is not None else Path(entry.path).read_bytes()
            params, _ = nn.load_checkpoint(data)
            model = NetModel(params)
            self.load_count += 1
            self._lru[k] = model
            if len(self._lru) > self.lru_size:
                self._lru.popitem(last=False)
            return model

    def models(self, player: int):
        """Yield ``(t, model)`` in iteration order, one decode at a time."""
        for entry in self.ordered(player):
            yield entry.iteration, self.load(player, entry)

    # -- manifest ------------------------------------------------------------

    def manifest(self, relative_to: str | Path | None = None) -> dict:
        rows = []
        for player in (0, 1):
            for e in self.entries[player]:
                if e.path is None:
                    raise ValueError("only file-backed network buffers have a manifest")
                shown = os.path.relpath(e.path, relative_to) if relative_to is not None else e.path
                rows.append(
                    {"player": player, "iteration": e.iteration, "path": shown, "bytes": e.nbytes, "sha256": e.sha256}
                )
        return {
            "mode": self.mode,
            "capacity": self.capacity,
            "seed": self.seed,
            "seen": [self.seen[0], self.seen[1]],
            "entries": rows,
        }

    def write_manifest(self, path: str | Path) -> None:
        path = Path(path)
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_text(json.dumps(self.manifest(relative_to=path.parent), indent=1))
        os.replace(tmp, path)

    @classmethod
    def from_manifest(
        cls,
        path: str | Path,
        lru_size: int = 8,
        base: str | Path | None = None,
        directory: str | Path | None = None,
    ) -> "ModelBuffer":
        """Rebuild a buffer, checking each checkpoint's length and checksum.

        Relative checkpoint paths are resolved against ``base`` (default:
        the manifest's directory); ``directory`` receives later additions.
        """
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except (OSError, ValueError) as exc:
            raise CorruptModelBuffer(f"{path}: unreadable manifest ({exc})") from exc
        base = Path(base) if base is not None else path.parent
        buf = cls(doc["mode"], doc["capacity"], directory, doc["seed"], lru_size)
        buf.seen = {0: doc["seen"][0], 1: doc["seen"][1]}
        for row in doc["entries"]:
            ckpt = Path(row["path"])
            if not ckpt.is_absolute():
                ckpt = base / ckpt
            try:
                data = ckpt.read_bytes()
            except OSError as exc:
                raise CorruptModelBuffer(f"missing checkpoint {ckpt}") from exc
            if len(data) != row["bytes"] or hashlib.sha256(data).hexdigest() != row["sha256"]:
                raise CorruptModelBuffer(f"checksum mismatch for {ckpt}")
            buf.entries[row["player"]].append(
                ModelEntry(row["iteration"], str(ckpt), None, None, row["bytes"], row["sha256"])
            )
        return buf


def sample_iteration_network(buffer: ModelBuffer, player: int, rng: np.random.Generator):
    """Draw ``(t, model)`` with probability proportional to ``t``."""
    entries = buffer.ordered(player)
    weights = np.array([e.iteration for e in entries], dtype=np.float64)
    k = int(rng.choice(len(entries), p=weights / weights.sum()))
    return entries[k].iteration, buffer.load(player, entries[k])


class TrajectoryPolicy(Policy):
    """Plays each episode with one value model per player, drawn at :meth:`reset`."""

    def __init__(self, game: Game, buffer: ModelBuffer, cache: InfoCache | None = None):
        self.game = game
        self.buffer = buffer
        self.cache = cache or InfoCache(game)
        self.active = None
        self._memo: dict = {}

    def reset(self, rng: np.random.Generator) -> None:
        self.active = {p: sample_iteration_network(self.buffer, p, rng) for p in (0, 1)}

    def distribution(self, state) -> np.ndarray:
        if self.active is None:
            raise QueryBeforeReset("reset() must start every episode")
        player = int(self.game.current_player(state))
        t, model = self.active[player]
        key, x, mask = self.cache.observe(state, player)
        memo_key = (player, t, key)
        probs = self._memo.get(memo_key)
        if probs is None:
            probs = self._memo[memo_key] = advantage_policy(model.predict(x[None, :], [key])[0], mask)[mask]
        return probs


@dataclass
class ReachCache:
    """Per-model reach products along one trajectory of a player's own decisions."""

    products: np.ndarray
    alive: np.ndarray = None
    depth: int = 0

    def __post_init__(self):
        self.products = np.asarray(self.products, dtype=np.float64)
        if self.alive is None:
            self.alive = self.products > 0.0

    @classmethod
    def fresh(cls, n_models: int) -> "ReachCache":
        return cls(np.ones(n_models))


def reach_cache_step(cache: ReachCache, taken_probs, expected_depth: int | None = None) -> ReachCache:
    """Extend by one own decision; ``taken_probs[m]`` is model m's probability of the taken action.

    Entries for models already at zero reach are ignored (they need no
    forward pass and may hold anything).
    """
    if expected_depth is not None and expected_depth != cache.depth:
        raise DepthMismatch(f"cache at depth {cache.depth}, trajectory at {expected_depth}")
    p = np.where(cache.alive, np.asarray(taken_probs, dtype=np.float64), 0.0)
    products = cache.products * p
    return ReachCache(products, products > 0.0, cache.depth + 1)


@dataclass
class QueryStats:
    forward_rows: int = 0
    skipped_rows: int = 0


def _weighted_average(iterations, reaches, sigmas, mask) -> np.ndarray:
    num = np.zeros(mask.shape[0])
    den = 0.0
    for t, r, s in zip(iterations, reaches, sigmas):
        if r > 0.0:
            num += (t * r) * s
            den += t * r
    if den > 0.0:
        return num / den
    return mask / mask.sum()


def explicit_average_distribution(
    buffer: ModelBuffer,
    player: int,
    trajectory,
    query,
    prune: bool = True,
    stats: QueryStats | None = None,
) -> np.ndarray:
    """Average strategy of ``player`` at one infoset, full action width.

    ``trajectory`` lists the player's earlier decisions as
    ``(key, features, legal_mask, action)`` with ``action`` a global id;
    ``query`` is ``(key, features, legal_mask)``. With ``prune`` a model
    stops being evaluated once its reach hits zero.
    """
    stats = stats if stats is not None else QueryStats()
    q_key, q_x, q_mask = query
    iterations, reaches, sigmas = [], [], []
    for t, model in buffer.models(player):
        reach = 1.0
        for key, x, mask, action in trajectory:
            if prune and reach == 0.0:
                stats.skipped_rows += 1
                continue
            stats.forward_rows += 1
            sigma = advantage_policy(model.predict(x[None, :], [key])[0], mask)
            reach *= sigma[action]
        if prune and reach == 0.0:
            stats.skipped_rows += 1
            sigma = np.zeros(q_mask.shape[0])
        else:
            stats.forward_rows += 1
            sigma = advantage_policy(model.predict(q_x[None, :], [q_key])[0], q_mask)
        iterations.append(t)
        reaches.append(reach)
        sigmas.append(sigma)
    return _weighted_average(iterations, reaches, sigmas, np.asarray(q_mask, dtype=bool))


def own_trajectory(game: Game, state, player: int, cache: InfoCache):
    """``player``'s earlier decisions leading to ``state`` as explicit-query input."""
    out = []
    for s, a in game.replay(state):
        if not game.is_terminal(s) and game.current_player(s) == player:
            key, x, mask = cache.observe(s, player)
            out.append((key, x, mask, a))
    return out


class SDCFRPolicy(Policy):
    """Exact linear average strategy of both players, computed from a model buffer."""

    def __init__(self, game: Game, buffer: ModelBuffer, cache: InfoCache | None = None, prune: bool = True):
        self.game = game
        self.buffer = buffer
        self.cache = cache or InfoCache(game)
        self.prune = prune
        self.stats = QueryStats()

    def distribution(self, state) -> np.ndarray:
        player = int(self.game.current_player(state))
        traj = own_trajectory(self.game, state, player, self.cache)
        query = self.cache.observe(state, player)
        probs = explicit_average_distribution(self.buffer, player, traj, query, self.prune, self.stats)
        return probs[query[2]]

    def distributions(self, states) -> list[np.ndarray]:
        """Batched explicit queries: each model is decoded once for the whole batch."""
        out: list = [None] * len(states)
        by_player: dict[int, list[int]] = {}
        for n, s in enumerate(states):
            by_player.setdefault(int(self.game.current_player(s)), []).append(n)
        for player, idx in by_player.items():
            trajs = [own_trajectory(self.game, states[n], player, self.cache) for n in idx]
            queries = [self.cache.observe(states[n], player) for n in idx]
            rows: dict[bytes, int] = {}
            feats, masks, keys = [], [], []

            def row(key, x, mask):
                r = rows.get(key)
                if r is None:
                    r = rows[key] = len(keys)
                    keys.append(key)
                    feats.append(x)
                    masks.append(mask)
                return r

            depth = max((len(tr) for tr in trajs), default=0)
            pad = -1
            t_idx = np.full((len(idx), max(depth, 1)), pad, dtype=np.int64)
            t_act = np.zeros((len(idx), max(depth, 1)), dtype=np.int64)
            for j, tr in enumerate(trajs):
                for k, (key, x, mask, a) in enumerate(tr):
                    t_idx[j, k] = row(key, x, mask)
                    t_act[j, k] = a
            q_idx = np.array([row(*q) for q in queries])
            X = np.stack(feats)
            M = np.stack(masks)
            num = np.zeros((len(idx), self.game.num_actions))
            den = np.zeros(len(idx))
            for t, model in self.buffer.models(player):
                sig = advantage_policy_batch(model.predict(X, keys), M)
                sig_ext = np.vstack([sig, np.ones((1, sig.shape[1]))])
                reach = sig_ext[t_idx, t_act].prod(axis=1)
                num += (t * reach)[:, None] * sig[q_idx]
                den += t * reach
            for j, n in enumerate(idx):
                mask = queries[j][2]
                probs = num[j] / den[j] if den[j] > 0.0 else mask / mask.sum()
                out[n] = probs[mask]
        return out

    def tabulate(self, game: Game, player: int) -> dict[bytes, np.ndarray]:
        """Average strategy at every infoset of ``player`` by one depth-first walk.

        Iteration strategies are computed once per (model, infoset), then a
        :class:`ReachCache` is carried down the tree so each infoset costs a
        vectorized product rather than a fresh trajectory query.
        """
        player = int(player)
        infosets: dict[bytes, tuple] = {}
        for s in game.walk():
            if not game.is_terminal(s) and game.current_player(s) == player:
                key, x, mask = self.cache.observe(s, player)
                infosets.setdefault(key, (x, mask))
        keys = list(infosets)
        index = {k: n for n, k in enumerate(keys)}
        X = np.stack([infosets[k][0] for k in keys])
        M = np.stack([infosets[k][1] for k in keys])
        ts, sigmas = [], []
        for t, model in self.buffer.models(player):
            ts.append(t)
            sigmas.append(advantage_policy_batch(model.predict(X, keys), M))
        S = np.stack(sigmas)  # (models, infosets, actions)
        weights = np.asarray(ts, dtype=np.float64)
        table: dict[bytes, np.ndarray] = {}

        def visit(state, cache: ReachCache):
            if game.is_terminal(state):
                return
            who = game.current_player(state)
            if who == PlayerId.CHANCE:
                for a, _ in game.chance_outcomes(state):
                    visit(game.apply_action(state, a), cache)
                return
            legal = game.legal_actions(state)
            if who != player:
                for a in legal:
                    visit(game.apply_action(state, a), cache)
                return
            k = index[game.infoset_key(state, player)]
            key = keys[k]
            if key not in table:
                w = weights * cache.products
                den = w.sum()
                full = (w @ S[:, k, :]) / den if den > 0.0 else M[k] / M[k].sum()
                table[key] = full[M[k]]
            for a in legal:
                visit(game.apply_action(state, a), reach_cache_step(cache, S[:, k, a], cache.depth))

        visit(game.initial_state(), ReachCache.fresh(len(ts)))
        return table


def trajectory_policy(game: Game, buffer: ModelBuffer) -> TrajectoryPolicy:
    return TrajectoryPolicy(game, buffer)
