"""Full-traversal tabular CFR (vanilla or linear weighting).

This is the exactness reference for the sampled and neural solvers, so
chance is expanded exactly and everything is kept in float64.

Iteration ``t`` updates both players (``updates="simultaneous"``) or only
player ``t % 2`` (``"alternating"``). In alternating mode the average
strategy of the *other* player is accumulated on that iteration, which is
the same pairing of (iteration, strategy) that a Deep CFR strategy buffer
records when the other player is the traverser.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .game import Game, PlayerId, TabularPolicy


class EmptyActionSet(ValueError):
    pass


def regret_matching(regrets, fallback: str = "uniform") -> np.ndarray:
    """Positive parts normalized; when no regret is positive, uniform
    (or, with ``fallback="argmax"``, all mass on the largest regret)."""
    r = np.asarray(regrets, dtype=np.float64)
    if r.size == 0:
        raise EmptyActionSet("no actions")
    pos = np.maximum(r, 0.0)
    total = pos.sum()
    if total > 0.0:
        return pos / total
    if fallback == "argmax":
        out = np.zeros(r.size)
        out[int(np.argmax(r))] = 1.0
        return out
    return np.full(r.size, 1.0 / r.size)


class RegretTable(dict):
    """InfoSetKey -> accumulated regret vector; absent keys are all-zero."""

    def get_regrets(self, key: bytes, n_actions: int) -> np.ndarray:
        r = self.get(key)
        return np.zeros(n_actions) if r is None else r


@dataclass
class AvgStrategyTable:
    numerator: dict[bytes, np.ndarray] = field(default_factory=dict)
    denominator: dict[bytes, float] = field(default_factory=dict)

    def add(self, key: bytes, weight: float, reach: float, sigma: np.ndarray) -> None:
        c = weight * reach
        num = self.numerator.get(key)
        if num is None:
            self.numerator[key] = c * sigma
            self.denominator[key] = c
        else:
            num += c * sigma
            self.denominator[key] += c


def average_strategy(table: AvgStrategyTable, key: bytes, n_actions: int) -> np.ndarray:
    """Normalized average; uniform for unvisited or zero-reach infosets."""
    den = table.denominator.get(key, 0.0)
    if den <= 0.0:
        return np.full(n_actions, 1.0 / n_actions)
    return table.numerator[key] / den


@dataclass
class IterationStrategySnapshot:
    iteration: int
    strategies: dict[int, dict[bytes, np.ndarray]]


class _Node:
    __slots__ = ("kind", "player", "key", "children", "probs", "u0")

    def __init__(self, kind, player=None, key=None, children=(), probs=(), u0=0.0):
        self.kind = kind
        self.player = player
        self.key = key
        self.children = children
        self.probs = probs
        self.u0 = u0


def _build(game: Game, state) -> _Node:
    if game.is_terminal(state):
        return _Node("t", u0=float(game.terminal_utility(state, PlayerId.P0)))
    player = game.current_player(state)
    if player == PlayerId.CHANCE:
        outcomes = game.chance_outcomes(state)
        return _Node(
            "c",
            children=[_build(game, game.apply_action(state, a)) for a, _ in outcomes],
            probs=[p for _, p in outcomes],
        )
    return _Node(
        "p",
        player=int(player),
        key=game.infoset_key(state, player),
        children=[_build(game, game.apply_action(state, a)) for a in game.legal_actions(state)],
    )


class TabularCFR:
    """Vanilla (weight 1) or linear (weight t) CFR over the full tree."""

    def __init__(
        self,
        game: Game,
        mode: str = "linear",
        updates: str = "alternating",
        snapshots: bool = False,
        fallback: str = "uniform",
    ):
        if fallback not in ("uniform", "argmax"):
            raise ValueError(f"unknown fallback {fallback!r}")
        if mode not in ("vanilla", "linear"):
            raise ValueError(f"unknown mode {mode!r}")
        if updates not in ("simultaneous", "alternating"):
            raise ValueError(f"unknown update scheme {updates!r}")
        self.game = game
        self.mode = mode
        self.updates = updates
        self.keep_snapshots = snapshots
        self.fallback = fallback
        self.fallback_count = 0
        self.updated: set[int] = set()
        self.t = 0
        self.regrets = RegretTable()
        self.avg = AvgStrategyTable()
        self.snapshots: list[IterationStrategySnapshot] = []
        self.action_counts: dict[bytes, int] = {}
        self._root = _build(game, game.initial_state())

    def weight(self, t: int) -> float:
        return float(t) if self.mode == "linear" else 1.0

    def iteration_strategy(self, key: bytes, n_actions: int, player: int | None = None) -> np.ndarray:
        """Regret matching; the argmax fallback (if chosen) applies only once
        ``player`` has had a regret update, before that play is uniform."""
        fallback = self.fallback if player is None or player in self.updated else "uniform"
        return regret_matching(self.regrets.get_regrets(key, n_actions), fallback)

    def iterate(self) -> None:
        """One CFR iteration; see :func:`cfr_iteration`."""
        self.t += 1
        t = self.t
        if self.updates == "alternating":
            updating = {t % 2}
            averaging = {1 - t % 2}
        else:
            updating = averaging = {0, 1}
        sigma: dict[bytes, np.ndarray] = {}
        inst: dict[bytes, np.ndarray] = {}
        own_reach: dict[bytes, float] = {}

        def walk(node: _Node, pi0: float, pi1: float, pic: float) -> float:
            if node.kind == "t":
                return node.u0
            if node.kind == "c":
                total = 0.0
                for child, p in zip(node.children, node.probs):
                    total += p * walk(child, pi0, pi1, pic * p)
                return total
            key = node.key
            n = len(node.children)
            s = sigma.get(key)
            if s is None:
                s = sigma[key] = self.iteration_strategy(key, n, node.player)
                if node.player in self.updated and not (self.regrets.get_regrets(key, n) > 0.0).any():
                    self.fallback_count += 1
                self.action_counts[key] = n
            vals = np.empty(n)
            if node.player == 0:
                for a, child in enumerate(node.children):
                    vals[a] = walk(child, pi0 * s[a], pi1, pic)
            else:
                for a, child in enumerate(node.children):
                    vals[a] = walk(child, pi0, pi1 * s[a], pic)
            u = float(s @ vals)
            p = node.player
            if p in updating:
                cf_reach = (pi1 if p == 0 else pi0) * pic
                r = (vals - u) * cf_reach if p == 0 else (u - vals) * cf_reach
                acc = inst.get(key)
                if acc is None:
                    inst[key] = r
                else:
                    acc += r
            if p in averaging:
                own_reach[key] = pi0 if p == 0 else pi1
            return u

        walk(self._root, 1.0, 1.0, 1.0)

        self.updated |= updating
        w = self.weight(t)
        for key, r in inst.items():
            acc = self.regrets.get(key)
            if acc is None:
                self.regrets[key] = w * r
            else:
                acc += w * r
        for key, reach in own_reach.items():
            self.avg.add(key, w, reach, sigma[key])
        if self.keep_snapshots:
            by_player: dict[int, dict[bytes, np.ndarray]] = {p: {} for p in sorted(averaging)}
            for key in own_reach:
                by_player[key[0]][key] = sigma[key].copy()
            self.snapshots.append(IterationStrategySnapshot(t, by_player))

    def run(self, iterations: int, callback=None) -> "TabularCFR":
        for _ in range(iterations):
            self.iterate()
            if callback is not None:
                callback(self)
        return self

    def average_table(self) -> dict[bytes, np.ndarray]:
        return {k: average_strategy(self.avg, k, n) for k, n in self.action_counts.items()}

    def average_policy(self) -> TabularPolicy:
        return TabularPolicy(self.game, self.average_table())

    def current_policy(self) -> TabularPolicy:
        return TabularPolicy(
            self.game, {k: self.iteration_strategy(k, n, k[0]) for k, n in self.action_counts.items()}
        )


def cfr_iteration(solver: TabularCFR) -> TabularCFR:
    """Advance ``solver`` by one iteration, in place."""
    solver.iterate()
    return solver


def write_snapshot(path: str | Path, strategies: dict[bytes, np.ndarray]) -> None:
    """Records of (u32 key length, key, u32 action count, float64 probs), little-endian."""
    with open(path, "wb") as f:
        for key, probs in strategies.items():
            probs = np.asarray(probs, dtype="<f8")
            f.write(struct.pack("<I", len(key)))
            f.write(key)
            f.write(struct.pack("<I", probs.size))
            f.write(probs.tobytes())


def read_snapshot(path: str | Path) -> dict[bytes, np.ndarray]:
    data = Path(path).read_bytes()
    out: dict[bytes, np.ndarray] = {}
    pos = 0
    while pos < len(data):
        (klen,) = struct.unpack_from("<I", data, pos)
        pos += 4
        key = data[pos : pos + klen]
        pos += klen
        (n,) = struct.unpack_from("<I", data, pos)
        pos += 4
        out[key] = np.frombuffer(data, dtype="<f8", count=n, offset=pos).copy()
        pos += 8 * n
    return out
