"""Reservoir buffers and external-sampling traversals.

Traversals write samples through sink callables rather than into buffers
directly, so many traversals can run concurrently while reservoir
insertion stays serialized in traversal order.
"""

from __future__ import annotations

import struct
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .game import Game, PlayerId, sample_index

SPILL_MAGIC = b"SDRB"
SPILL_VERSION = 1
_SPILL_HEAD = struct.Struct("<IQQQIIBB")


@dataclass
class AdvantageSample:
    features: np.ndarray
    target: np.ndarray
    legal_mask: np.ndarray
    iteration: int
    weight: float = 1.0
    key: bytes | None = None


@dataclass
class StrategySample:
    features: np.ndarray
    target: np.ndarray
    legal_mask: np.ndarray
    iteration: int
    weight: float = 1.0
    key: bytes | None = None


def reservoir_slot(seen: int, capacity: int, rng: np.random.Generator) -> int | None:
    """Slot for the ``seen``-th insertion (0-based), or ``None`` to discard."""
    if seen < capacity:
        return seen
    j = int(rng.integers(seen + 1))
    return j if j < capacity else None


class ReservoirBuffer:
    """Uniform reservoir over an unbounded stream of arbitrary entries."""

    def __init__(self, capacity: int):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.entries: list = []
        self.seen = 0
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self.entries)

    def insert(self, entry, rng: np.random.Generator) -> int | None:
        with self._lock:
            slot = reservoir_slot(self.seen, self.capacity, rng)
            self.seen += 1
            if slot is None:
                return None
            if slot == len(self.entries):
                self.entries.append(entry)
            else:
                self.entries[slot] = entry
            return slot


def reservoir_insert(buffer: ReservoirBuffer, entry, rng: np.random.Generator) -> ReservoirBuffer:
    buffer.insert(entry, rng)
    return buffer


class EmptyBuffer(ValueError):
    pass


class SampleBuffer:
    """Reservoir of advantage or strategy samples stored column-wise.

    Columns grow geometrically up to ``capacity``. ``keep_keys`` retains
    infoset keys alongside features (diagnostics and tabular test hooks).
    ``dtype`` applies to features and targets; float64 keeps exact-arithmetic
    test runs exact.
    """

    def __init__(
        self, capacity: int, feature_size: int, num_actions: int, keep_keys: bool = False, dtype=np.float32
    ):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.dtype = np.dtype(dtype)
        if self.dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
            raise ValueError("dtype must be float32 or float64")
        self.capacity = capacity
        self.feature_size = feature_size
        self.num_actions = num_actions
        self.keep_keys = keep_keys
        self.seen = 0
        self.size = 0
        self._alloc(min(capacity, 1024))
        self.keys: list[bytes | None] = []
        self._lock = threading.Lock()

    def _alloc(self, n: int) -> None:
        old = getattr(self, "features", None)
        features = np.zeros((n, self.feature_size), dtype=self.dtype)
        targets = np.zeros((n, self.num_actions), dtype=self.dtype)
        masks = np.zeros((n, self.num_actions), dtype=bool)
        iterations = np.zeros(n, dtype=np.int64)
        weights = np.zeros(n, dtype=np.float64)
        if old is not None:
            k = self.size
            features[:k] = self.features[:k]
            targets[:k] = self.targets[:k]
            masks[:k] = self.masks[:k]
            iterations[:k] = self.iterations[:k]
            weights[:k] = self.weights[:k]
        self.features, self.targets, self.masks = features, targets, masks
        self.iterations, self.weights = iterations, weights

    def __len__(self) -> int:
        return self.size

    def add(self, sample, rng: np.random.Generator) -> int | None:
        with self._lock:
            slot = reservoir_slot(self.seen, self.capacity, rng)
            self.seen += 1
            if slot is None:
                return None
            if slot == self.size:
                if slot == len(self.features):
                    self._alloc(min(self.capacity, 2 * len(self.features)))
                self.size += 1
                if self.keep_keys:
                    self.keys.append(sample.key)
            elif self.keep_keys:
                self.keys[slot] = sample.key
            self.features[slot] = sample.features
            self.targets[slot] = sample.target
            self.masks[slot] = sample.legal_mask
            self.iterations[slot] = sample.iteration
            self.weights[slot] = sample.weight
            return slot

    def arrays(self):
        """(features, targets, masks, iterations, weights) views of the filled part."""
        n = self.size
        return self.features[:n], self.targets[:n], self.masks[:n], self.iterations[:n], self.weights[:n]

    # -- spill files -------------------------------------------------------

    def _record_dtype(self, width: int) -> np.dtype:
        d, a = self.feature_size, self.num_actions
        return np.dtype(
            [
                ("length", "<u4"),
                ("features", f"<f{width}", (d,)),
                ("targets", f"<f{width}", (a,)),
                ("masks", "u1", (a,)),
                ("iteration", "<i8"),
                ("weight", "<f8"),
            ]
        )

    def spill(self, path: str | Path) -> None:
        """Write a versioned, record-length-prefixed dump of the buffer.

        Each record is a u32 byte length followed by features, targets,
        mask bytes, i64 iteration, f64 weight and, with ``keep_keys``, a
        u16-length-prefixed infoset key.
        """
        d, a, n = self.feature_size, self.num_actions, self.size
        width = self.dtype.itemsize
        dt = self._record_dtype(width)
        recs = np.zeros(n, dtype=dt)
        recs["features"] = self.features[:n]
        recs["targets"] = self.targets[:n]
        recs["masks"] = self.masks[:n]
        recs["iteration"] = self.iterations[:n]
        recs["weight"] = self.weights[:n]
        with open(path, "wb") as f:
            f.write(SPILL_MAGIC)
            f.write(_SPILL_HEAD.pack(SPILL_VERSION, self.capacity, self.seen, n, d, a, self.keep_keys, width))
            if not self.keep_keys:
                recs["length"] = dt.itemsize - 4
                f.write(recs.tobytes())
                return
            for i in range(n):
                key = self.keys[i] or b""
                recs["length"][i] = dt.itemsize - 4 + 2 + len(key)
                f.write(recs[i : i + 1].tobytes())
                f.write(struct.pack("<H", len(key)) + key)

    @classmethod
    def load(cls, path: str | Path) -> "SampleBuffer":
        data = Path(path).read_bytes()
        if data[:4] != SPILL_MAGIC:
            raise ValueError(f"{path}: not a buffer spill file")
        if len(data) < 4 + _SPILL_HEAD.size:
            raise ValueError(f"{path}: truncated header")
        version, capacity, seen, size, d, a, keep_keys, width = _SPILL_HEAD.unpack_from(data, 4)
        if version != SPILL_VERSION:
            raise ValueError(f"{path}: unsupported spill version {version}")
        if width not in (4, 8):
            raise ValueError(f"{path}: bad float width {width}")
        buf = cls(capacity, d, a, bool(keep_keys), np.float32 if width == 4 else np.float64)
        buf._alloc(max(size, 1))
        dt = buf._record_dtype(width)
        pos = 4 + _SPILL_HEAD.size
        if keep_keys:
            recs = np.zeros(size, dtype=dt)
            for i in range(size):
                if pos + dt.itemsize + 2 > len(data):
                    raise ValueError(f"{path}: truncated record {i}")
                recs[i] = np.frombuffer(data, dt, 1, pos)[0]
                pos += dt.itemsize
                (klen,) = struct.unpack_from("<H", data, pos)
                buf.keys.append(data[pos + 2 : pos + 2 + klen])
                pos += 2 + klen
        else:
            if len(data) < pos + size * dt.itemsize:
                raise ValueError(f"{path}: truncated records")
            recs = np.frombuffer(data, dt, size, pos)
        if size and (recs["length"] < dt.itemsize - 4).any():
            raise ValueError(f"{path}: corrupt record lengths")
        buf.features[:size] = recs["features"]
        buf.targets[:size] = recs["targets"]
        buf.masks[:size] = recs["masks"].astype(bool)
        buf.iterations[:size] = recs["iteration"]
        buf.weights[:size] = recs["weight"]
        buf.size = size
        buf.seen = seen
        return buf


class InfoCache:
    """Memo of (key, features, legal mask) per infoset; features are pure functions of the key."""

    def __init__(self, game: Game):
        self.game = game
        self._memo: dict[bytes, tuple[np.ndarray, np.ndarray]] = {}

    def observe(self, state, player: int) -> tuple[bytes, np.ndarray, np.ndarray]:
        key = self.game.infoset_key(state, player)
        hit = self._memo.get(key)
        if hit is None:
            hit = self._memo[key] = (self.game.encode_features(state, player), self.game.legal_mask(state))
        return key, hit[0], hit[1]


Sink = Callable[[object], None]


def _full_width(probs: np.ndarray, mask: np.ndarray) -> np.ndarray:
    out = np.zeros(mask.shape[0])
    out[mask] = probs
    return out


def external_sampling_traverse(
    game: Game,
    state,
    traverser: int,
    policies,
    t: int,
    advantage_sink: Sink | None,
    strategy_sink: Sink | None,
    rng: np.random.Generator,
    cache: InfoCache | None = None,
    keep_keys: bool = False,
) -> float:
    """One external-sampling pass; returns the sampled value for ``traverser``.

    Every traverser action is expanded; chance and the opponent are sampled
    once. Traverser nodes emit an :class:`AdvantageSample` whose target is
    each action's value minus the node's expected value; opponent nodes emit
    a :class:`StrategySample` of the opponent's current strategy.
    ``policies[p].distribution(state)`` gives player ``p``'s iteration strategy.
    """
    cache = cache or InfoCache(game)

    def walk(s) -> float:
        if game.is_terminal(s):
            return float(game.terminal_utility(s, traverser))
        player = game.current_player(s)
        if player == PlayerId.CHANCE:
            outcomes = game.chance_outcomes(s)
            i = sample_index(np.array([p for _, p in outcomes]), rng)
            return walk(game.apply_action(s, outcomes[i][0]))
        legal = game.legal_actions(s)
        sigma = policies[player].distribution(s)
        if player == traverser:
            values = np.array([walk(game.apply_action(s, a)) for a in legal])
            ev = float(sigma @ values)
            if advantage_sink is not None:
                key, x, mask = cache.observe(s, player)
                advantage_sink(
                    AdvantageSample(x, _full_width(values - ev, mask), mask, t, 1.0, key if keep_keys else None)
                )
            return ev
        if strategy_sink is not None:
            key, x, mask = cache.observe(s, player)
            strategy_sink(StrategySample(x, _full_width(sigma, mask), mask, t, 1.0, key if keep_keys else None))
        i = sample_index(sigma, rng)
        return walk(game.apply_action(s, legal[i]))

    return walk(state)


def exhaustive_traverse(
    game: Game,
    state,
    traverser: int,
    policies,
    t: int,
    advantage_sink: Sink | None,
    strategy_sink: Sink | None,
    cache: InfoCache | None = None,
    keep_keys: bool = False,
) -> float:
    """Expected-value counterpart of :func:`external_sampling_traverse`.

    Chance and opponent branches are enumerated instead of sampled and each
    emitted sample carries its exact visit probability (opponent reach times
    chance reach) as ``weight``. Reservoir-free aggregation of this data gives
    the exact linear-CFR quantities; used by the exactness test hooks.
    """
    cache = cache or InfoCache(game)

    def walk(s, reach: float) -> float:
        if game.is_terminal(s):
            return float(game.terminal_utility(s, traverser))
        player = game.current_player(s)
        if player == PlayerId.CHANCE:
            return sum(p * walk(game.apply_action(s, a), reach * p) for a, p in game.chance_outcomes(s))
        legal = game.legal_actions(s)
        sigma = policies[player].distribution(s)
        if player == traverser:
            values = np.array([walk(game.apply_action(s, a), reach) for a in legal])
            ev = float(sigma @ values)
            if advantage_sink is not None:
                key, x, mask = cache.observe(s, player)
                advantage_sink(
                    AdvantageSample(x, _full_width(values - ev, mask), mask, t, reach, key if keep_keys else None)
                )
            return ev
        if strategy_sink is not None:
            key, x, mask = cache.observe(s, player)
            strategy_sink(StrategySample(x, _full_width(sigma, mask), mask, t, reach, key if keep_keys else None))
        total = 0.0
        for a, p in zip(legal, sigma):
            if p > 0.0:
                total += p * walk(game.apply_action(s, a), reach * p)
        return total

    return walk(state, 1.0)


def traversal_rng(seed: int, iteration: int, index: int) -> np.random.Generator:
    """Independent stream per (seed, iteration, traversal index)."""
    return np.random.default_rng([seed, iteration, index, 0x7A])
