"""Leduc hold'em with a configurable deck and raise cap.

Card id = rank * n_suits + suit; a higher rank index wins, pairing the board
beats any unpaired hand, and equal ranks split the pot. Two betting rounds;
player 0 opens both. Folding is always legal (it is dominated when nothing
is owed), so every decision point offers FOLD and CALL and, below the raise
cap, RAISE.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..game import (
    ChanceNode,
    ChancePlayer,
    Game,
    IllegalAction,
    NonTerminal,
    NotChanceNode,
    PlayerId,
    TerminalState,
)

FOLD = 0
CALL = 1
RAISE = 2
ACTION_NAMES = ("FOLD", "CALL", "RAISE")

_TERMINAL = -1
_NO_CARD = 0xFF


@dataclass(frozen=True)
class LeducConfig:
    n_ranks: int = 3
    n_suits: int = 2
    max_raises_per_round: int = 2
    ante: int = 1
    bet_sizes: tuple[int, int] = (2, 4)

    def __post_init__(self):
        if self.n_ranks * self.n_suits < 3:
            raise ValueError("deck needs at least 3 cards")
        if len(self.bet_sizes) != 2 or min(self.bet_sizes) <= 0:
            raise ValueError("need two positive bet sizes")
        if self.ante <= 0 or self.max_raises_per_round < 1:
            raise ValueError("ante and raise cap must be positive")
        if self.n_ranks * self.n_suits > 0xFE:
            raise ValueError("deck too large for byte-encoded keys")
        object.__setattr__(self, "bet_sizes", tuple(int(b) for b in self.bet_sizes))

    @property
    def n_cards(self) -> int:
        return self.n_ranks * self.n_suits

    @property
    def max_pot(self) -> int:
        per_player = self.ante + self.max_raises_per_round * sum(self.bet_sizes)
        return 2 * per_player


BIG_LEDUC = LeducConfig(n_ranks=12, n_suits=2, max_raises_per_round=6)


@dataclass(frozen=True, slots=True)
class LeducState:
    private: tuple[int, ...]
    board: int
    rounds: tuple[tuple[int, ...], ...]
    contrib: tuple[int, int]
    folded: int
    to_act: int
    trace: tuple[int, ...]


def _round_closed(actions: tuple[int, ...]) -> bool:
    return len(actions) >= 2 and actions[-1] == CALL


class LeducPoker(Game):
    def __init__(self, config: LeducConfig | None = None):
        self.config = config or LeducConfig()
        c = self.config
        self.name = "leduc" if c == LeducConfig() else "leduc_custom"
        self.num_actions = 3
        self.ante = c.ante
        self._slots = c.max_raises_per_round + 2
        # private + board one-hots, pot, two raise counters, position, history slots
        self.feature_size = 2 * c.n_cards + 4 + 2 * self._slots * 2
        self._rank = [card // c.n_suits for card in range(c.n_cards)]

    def initial_state(self) -> LeducState:
        a = self.config.ante
        return LeducState((), _NO_CARD, ((),), (a, a), -1, PlayerId.CHANCE, ())

    # -- queries -----------------------------------------------------------

    def is_terminal(self, state: LeducState) -> bool:
        return state.to_act == _TERMINAL

    def current_player(self, state: LeducState) -> PlayerId:
        if state.to_act == _TERMINAL:
            raise TerminalState("terminal history has no player to act")
        return PlayerId(state.to_act)

    def legal_actions(self, state: LeducState) -> tuple[int, ...]:
        if state.to_act not in (0, 1):
            return ()
        raises = state.rounds[-1].count(RAISE)
        if raises < self.config.max_raises_per_round:
            return (FOLD, CALL, RAISE)
        return (FOLD, CALL)

    def chance_outcomes(self, state: LeducState) -> list[tuple[int, float]]:
        if state.to_act != PlayerId.CHANCE:
            raise NotChanceNode("not a chance node")
        dealt = set(state.private)
        remaining = [c for c in range(self.config.n_cards) if c not in dealt]
        p = 1.0 / len(remaining)
        return [(c, p) for c in remaining]

    # -- transitions -------------------------------------------------------

    def apply_action(self, state: LeducState, action: int) -> LeducState:
        if state.to_act == _TERMINAL:
            raise TerminalState("cannot act in a terminal state")
        trace = state.trace + (action,)
        if state.to_act == PlayerId.CHANCE:
            if not 0 <= action < self.config.n_cards or action in state.private:
                raise IllegalAction(f"card {action} cannot be dealt")
            if len(state.private) < 2:
                private = state.private + (action,)
                to_act = PlayerId.CHANCE if len(private) < 2 else PlayerId.P0
                return LeducState(private, state.board, state.rounds, state.contrib, -1, to_act, trace)
            return LeducState(state.private, action, state.rounds + ((),), state.contrib, -1, PlayerId.P0, trace)

        if action not in self.legal_actions(state):
            raise IllegalAction(f"{action} is not legal here")
        p = state.to_act
        contrib = list(state.contrib)
        if action == FOLD:
            rounds = state.rounds[:-1] + (state.rounds[-1] + (FOLD,),)
            return LeducState(state.private, state.board, rounds, state.contrib, p, _TERMINAL, trace)
        if action == CALL:
            contrib[p] = max(contrib)
        else:
            contrib[p] = max(contrib) + self.config.bet_sizes[len(state.rounds) - 1]
        current = state.rounds[-1] + (action,)
        rounds = state.rounds[:-1] + (current,)
        if _round_closed(current):
            to_act = PlayerId.CHANCE if len(rounds) == 1 else _TERMINAL
        else:
            to_act = 1 - p
        return LeducState(state.private, state.board, rounds, (contrib[0], contrib[1]), -1, to_act, trace)

    # -- payoffs -----------------------------------------------------------

    def terminal_utility(self, state: LeducState, player: int) -> int:
        if state.to_act != _TERMINAL:
            raise NonTerminal("utility is defined at terminals only")
        if player == PlayerId.CHANCE:
            raise ChancePlayer("chance has no utility")
        if state.folded >= 0:
            lost = state.contrib[state.folded]
            return -lost if player == state.folded else lost
        stake = state.contrib[0]
        board = self._rank[state.board]
        r0, r1 = self._rank[state.private[0]], self._rank[state.private[1]]
        s0 = (r0 == board, r0)
        s1 = (r1 == board, r1)
        if s0 == s1:
            return 0
        u0 = stake if s0 > s1 else -stake
        return u0 if player == PlayerId.P0 else -u0

    # -- observations ------------------------------------------------------

    def infoset_key(self, state: LeducState, player: int) -> bytes:
        if player == PlayerId.CHANCE:
            raise ChancePlayer("chance has no information sets")
        private = state.private[player] if len(state.private) > player else _NO_CARD
        head = bytes((player, private, state.board))
        return head + bytes(a for r in state.rounds for a in r)

    def encode_features(self, state: LeducState, player: int) -> np.ndarray:
        if state.to_act == _TERMINAL:
            raise TerminalState("no features at terminals")
        if state.to_act == PlayerId.CHANCE:
            raise ChanceNode("no features at chance nodes")
        if player != state.to_act:
            raise ValueError("features are encoded for the acting player")
        c = self.config
        n = c.n_cards
        x = np.zeros(self.feature_size, dtype=np.float32)
        x[state.private[player]] = 1.0
        if state.board != _NO_CARD:
            x[n + state.board] = 1.0
        base = 2 * n
        x[base] = (state.contrib[0] + state.contrib[1]) / c.max_pot
        for r, actions in enumerate(state.rounds):
            x[base + 1 + r] = actions.count(RAISE) / c.max_raises_per_round
        x[base + 3] = float(player)
        hist = base + 4
        for r, actions in enumerate(state.rounds):
            for i, a in enumerate(actions):
                # only CALL/RAISE can precede a decision
                x[hist + (r * self._slots + i) * 2 + (a - 1)] = 1.0
        return x

    def action_label(self, state: LeducState, action: int) -> str:
        if state.to_act == PlayerId.CHANCE:
            return self.card_label(action)
        return ACTION_NAMES[action]

    def card_label(self, card: int) -> str:
        rank, suit = divmod(card, self.config.n_suits)
        return f"R{rank}{'abcdefgh'[suit] if suit < 8 else suit}"

    def betting_round(self, state: LeducState) -> int:
        return len(state.rounds) - 1

    def num_player_actions(self, state: LeducState) -> int:
        return sum(len(r) for r in state.rounds)
