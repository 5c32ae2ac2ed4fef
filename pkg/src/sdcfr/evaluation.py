"""Exact best response, exploitability, duplicate head-to-head play and the
per-depth strategy-disagreement table.

Utilities stay in integer chips inside the game; conversion to milli-antes
(or milli-big-blinds when a game defines blinds) happens only here.
"""

from __future__ import annotations

import copy
import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .game import Game, GameTooLarge, PlayerId, Policy, opponent, sample_index

Z95 = 1.959963984540054
DEFAULT_NODE_BUDGET = 20_000_000


@dataclass
class EvalReport:
    metric: str
    value: float
    units: str
    count: int = 1
    half_width: float = 0.0
    seed: int | None = None
    extra: dict = field(default_factory=dict)


def milli_units(game: Game, chips: float) -> tuple[float, str]:
    if game.big_blind:
        return 1000.0 * chips / game.big_blind, "mbb/g"
    return 1000.0 * chips / game.ante, "mA/g"


def policy_table(game: Game, policy: Policy, player: int, max_nodes: int = DEFAULT_NODE_BUDGET) -> dict[bytes, np.ndarray]:
    """Query ``policy`` once per infoset of ``player`` over the whole tree.

    Policies that can evaluate every infoset more cheaply in bulk expose
    ``tabulate(game, player)`` and are used through it.
    """
    tabulate = getattr(policy, "tabulate", None)
    if tabulate is not None:
        return tabulate(game, player)
    table: dict[bytes, np.ndarray] = {}
    for state in game.walk(max_nodes=max_nodes):
        if game.is_terminal(state) or game.current_player(state) != player:
            continue
        key = game.infoset_key(state, player)
        if key not in table:
            table[key] = np.asarray(policy.distribution(state), dtype=np.float64)
    return table


def best_response(
    game: Game,
    opponent_policy: Policy | dict,
    responder: int,
    max_nodes: int = DEFAULT_NODE_BUDGET,
) -> tuple[float, dict[bytes, np.ndarray]]:
    """Value (chips) of the best response to ``opponent_policy`` and the response itself.

    Histories are grouped by the responder's infoset so every responder
    decision maximizes the reach-weighted sum over the whole infoset.
    ``opponent_policy`` may also be a ready infoset -> distribution table.
    """
    responder = PlayerId(responder)
    opp = opponent(responder)
    if isinstance(opponent_policy, dict):
        opp_table = opponent_policy
    else:
        opp_table = policy_table(game, opponent_policy, opp, max_nodes)
    budget = [max_nodes]
    br: dict[bytes, np.ndarray] = {}

    def trace(state, prob: float, groups: dict) -> float:
        budget[0] -= 1
        if budget[0] < 0:
            raise GameTooLarge(f"best response exceeded {max_nodes} nodes")
        if game.is_terminal(state):
            return prob * game.terminal_utility(state, responder)
        player = game.current_player(state)
        if player == PlayerId.CHANCE:
            return sum(trace(game.apply_action(state, a), prob * p, groups) for a, p in game.chance_outcomes(state))
        if player == responder:
            groups.setdefault(game.infoset_key(state, responder), []).append((state, prob))
            return 0.0
        probs = opp_table.get(game.infoset_key(state, player))
        legal = game.legal_actions(state)
        if probs is None:
            probs = np.full(len(legal), 1.0 / len(legal))
        total = 0.0
        for a, p in zip(legal, probs):
            if p > 0.0:
                total += trace(game.apply_action(state, a), prob * p, groups)
        return total

    def resolve(key: bytes, items: list) -> float:
        legal = game.legal_actions(items[0][0])
        values = np.empty(len(legal))
        for i, a in enumerate(legal):
            groups: dict = {}
            v = sum(trace(game.apply_action(s, a), p, groups) for s, p in items)
            v += sum(resolve(k, it) for k, it in groups.items())
            values[i] = v
        best = int(np.argmax(values))
        choice = np.zeros(len(legal))
        choice[best] = 1.0
        br[key] = choice
        return float(values[best])

    groups: dict = {}
    value = trace(game.initial_state(), 1.0, groups)
    value += sum(resolve(k, it) for k, it in groups.items())
    return value, br


def exploitability(game: Game, profile, max_nodes: int = DEFAULT_NODE_BUDGET) -> EvalReport:
    """Sum over players of the best-response gain against the profile.

    ``profile`` is a pair ``(policy for P0, policy for P1)``; entries may be
    infoset tables instead of policies. Reported in milli-units per game with
    the per-player value (half the sum) in ``extra``.
    """
    v0, _ = best_response(game, profile[1], PlayerId.P0, max_nodes)
    v1, _ = best_response(game, profile[0], PlayerId.P1, max_nodes)
    chips = v0 + v1
    value, units = milli_units(game, chips)
    return EvalReport(
        "exploitability",
        value,
        units,
        extra={"chips": chips, "per_player": value / 2.0, "br_values": (v0, v1)},
    )


def expected_value(game: Game, profile, player: int = PlayerId.P0) -> float:
    """Exact expected chips for ``player`` when both follow ``profile``."""
    tables = [p if isinstance(p, dict) else policy_table(game, p, i) for i, p in enumerate(profile)]

    def value(state) -> float:
        if game.is_terminal(state):
            return game.terminal_utility(state, player)
        actor = game.current_player(state)
        if actor == PlayerId.CHANCE:
            return sum(p * value(game.apply_action(state, a)) for a, p in game.chance_outcomes(state))
        probs = tables[actor][game.infoset_key(state, actor)]
        return sum(p * value(game.apply_action(state, a)) for a, p in zip(game.legal_actions(state), probs) if p > 0)

    return value(game.initial_state())


def play_hand(game: Game, seats, chance_rng: np.random.Generator, seat_rngs) -> int:
    """Play one episode; returns player 0's chips."""
    if seats[0] is seats[1]:
        # episodic policies keep per-episode state; one copy per seat
        seats = (seats[0], copy.copy(seats[1]))
    for policy, rng in zip(seats, seat_rngs):
        policy.reset(rng)
    state = game.initial_state()
    while not game.is_terminal(state):
        player = game.current_player(state)
        if player == PlayerId.CHANCE:
            outcomes = game.chance_outcomes(state)
            i = sample_index(np.array([p for _, p in outcomes]), chance_rng)
            state = game.apply_action(state, outcomes[i][0])
        else:
            probs = seats[player].distribution(state)
            i = sample_index(probs, seat_rngs[player])
            state = game.apply_action(state, game.legal_actions(state)[i])
    return game.terminal_utility(state, PlayerId.P0)


def head_to_head(
    game: Game,
    policy_a: Policy,
    policy_b: Policy,
    n_pairs: int,
    rng: np.random.Generator,
    paired: bool = True,
) -> EvalReport:
    """Mean winnings of ``policy_a`` against ``policy_b``.

    With ``paired=True`` every chance sequence is played twice with the
    seats swapped; seat-bound RNG streams are reused in both hands, so a
    policy facing itself nets exactly zero on every pair.
    """
    seeds = rng.integers(0, 2**63 - 1, size=(n_pairs, 3))
    if paired:
        results = np.empty(n_pairs)
        for k, (cs, s0, s1) in enumerate(seeds):
            first = play_hand(game, (policy_a, policy_b), _gen(cs), (_gen(s0), _gen(s1)))
            second = play_hand(game, (policy_b, policy_a), _gen(cs), (_gen(s0), _gen(s1)))
            results[k] = (first - second) / 2.0
    else:
        extra = rng.integers(0, 2**63 - 1, size=(n_pairs, 3))
        results = np.empty(2 * n_pairs)
        for k, (cs, s0, s1) in enumerate(np.concatenate([seeds, extra])):
            if k % 2 == 0:
                results[k] = play_hand(game, (policy_a, policy_b), _gen(cs), (_gen(s0), _gen(s1)))
            else:
                results[k] = -play_hand(game, (policy_b, policy_a), _gen(cs), (_gen(s0), _gen(s1)))
    mean_chips = float(results.mean())
    sd = float(results.std(ddof=1)) if results.size > 1 else 0.0
    value, units = milli_units(game, mean_chips)
    scale = milli_units(game, 1.0)[0]
    half = Z95 * sd / math.sqrt(results.size) * scale
    return EvalReport(
        "head_to_head",
        value,
        units,
        count=2 * n_pairs,
        half_width=half,
        extra={"paired": paired, "units_sd": sd * scale},
    )


def _gen(seed) -> np.random.Generator:
    return np.random.default_rng(int(seed))


@dataclass
class DisagreementRow:
    depth: int
    round: int
    mean: float
    ci95: float
    std: float
    n: int


def strategy_disagreement(
    game: Game,
    policy_sd: Policy,
    policy_s: Policy,
    n_rollouts: int,
    rng: np.random.Generator,
    actor: Policy | None = None,
) -> list[DisagreementRow]:
    """L1 distance between two average strategies along on-policy rollouts.

    For each player ``i``, ``n_rollouts`` episodes are played with ``i``
    acting by ``actor`` (default ``policy_sd``) and the opponent uniformly
    random. At each of ``i``'s decision points the L1 distance between the
    two policies' full distributions is recorded under
    (player actions so far, betting round). Cells average the per-player
    means, i.e. one half of the sum over both players.
    """
    actor = actor or policy_sd
    visits: dict[int, list] = {0: [], 1: []}
    for player in (0, 1):
        for _ in range(n_rollouts):
            actor.reset(rng)
            state = game.initial_state()
            while not game.is_terminal(state):
                who = game.current_player(state)
                if who == PlayerId.CHANCE:
                    outcomes = game.chance_outcomes(state)
                    i = sample_index(np.array([p for _, p in outcomes]), rng)
                    state = game.apply_action(state, outcomes[i][0])
                    continue
                legal = game.legal_actions(state)
                if who == player:
                    visits[player].append(state)
                    i = sample_index(actor.distribution(state), rng)
                else:
                    i = int(rng.integers(len(legal)))
                state = game.apply_action(state, legal[i])

    cells: dict[tuple[int, int], dict[int, list[float]]] = defaultdict(lambda: {0: [], 1: []})
    for player, states in visits.items():
        a = _distributions(game, policy_sd, player, states)
        b = _distributions(game, policy_s, player, states)
        for s in states:
            key = game.infoset_key(s, player)
            diff = float(np.abs(a[key] - b[key]).sum())
            cells[(game.num_player_actions(s), game.betting_round(s))][player].append(diff)

    rows = []
    for (depth, rnd), per_player in sorted(cells.items()):
        parts = [np.asarray(v) for v in per_player.values() if v]
        mean = float(np.mean([p.mean() for p in parts]))
        var_of_mean = sum(p.var(ddof=1) / p.size if p.size > 1 else 0.0 for p in parts) / len(parts) ** 2
        pooled = np.concatenate(parts)
        rows.append(
            DisagreementRow(depth, rnd, mean, Z95 * math.sqrt(var_of_mean), float(pooled.std()), int(pooled.size))
        )
    return rows


def _distributions(game: Game, policy: Policy, player: int, states) -> dict[bytes, np.ndarray]:
    unique: dict[bytes, object] = {}
    for s in states:
        unique.setdefault(game.infoset_key(s, player), s)
    batch = getattr(policy, "distributions", None)
    if batch is not None:
        probs = batch(list(unique.values()))
        return dict(zip(unique.keys(), probs))
    return {k: np.asarray(policy.distribution(s)) for k, s in unique.items()}
