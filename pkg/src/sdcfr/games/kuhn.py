"""Kuhn poker: three cards, one ante, one betting round with a single bet.

Player 0 acts first. ``PASS`` is check or fold, ``BET`` is bet or call.
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

PASS = 0
BET = 1
CARD_NAMES = ("J", "Q", "K")
_TERMINAL_HISTORIES = {(PASS, PASS), (BET, PASS), (BET, BET), (PASS, BET, PASS), (PASS, BET, BET)}


@dataclass(frozen=True, slots=True)
class KuhnState:
    cards: tuple[int, ...] = ()
    history: tuple[int, ...] = ()

    @property
    def trace(self) -> tuple[int, ...]:
        return self.cards + self.history


class KuhnPoker(Game):
    name = "kuhn"
    num_actions = 2
    # card one-hot (3) + two history slots x {pass, bet}
    feature_size = 3 + 2 * 2

    def initial_state(self) -> KuhnState:
        return KuhnState()

    def is_terminal(self, state: KuhnState) -> bool:
        return state.history in _TERMINAL_HISTORIES

    def current_player(self, state: KuhnState) -> PlayerId:
        if len(state.cards) < 2:
            return PlayerId.CHANCE
        if state.history in _TERMINAL_HISTORIES:
            raise TerminalState("terminal history has no player to act")
        return PlayerId(len(state.history) % 2)

    def legal_actions(self, state: KuhnState) -> tuple[int, ...]:
        if self.is_terminal(state) or len(state.cards) < 2:
            return ()
        return (PASS, BET)

    def chance_outcomes(self, state: KuhnState) -> list[tuple[int, float]]:
        if len(state.cards) >= 2:
            raise NotChanceNode("cards already dealt")
        remaining = [c for c in range(3) if c not in state.cards]
        p = 1.0 / len(remaining)
        return [(c, p) for c in remaining]

    def apply_action(self, state: KuhnState, action: int) -> KuhnState:
        if self.is_terminal(state):
            raise TerminalState("cannot act in a terminal state")
        if len(state.cards) < 2:
            if action in state.cards or not 0 <= action < 3:
                raise IllegalAction(f"card {action} cannot be dealt")
            return KuhnState(state.cards + (action,), state.history)
        if action not in (PASS, BET):
            raise IllegalAction(f"action {action} is not legal")
        return KuhnState(state.cards, state.history + (action,))

    def terminal_utility(self, state: KuhnState, player: int) -> int:
        if not self.is_terminal(state):
            raise NonTerminal("utility is defined at terminals only")
        if player == PlayerId.CHANCE:
            raise ChancePlayer("chance has no utility")
        h = state.history
        if h == (BET, PASS):
            u0 = 1
        elif h == (PASS, BET, PASS):
            u0 = -1
        else:
            stake = 1 if h == (PASS, PASS) else 2
            u0 = stake if state.cards[0] > state.cards[1] else -stake
        return u0 if player == PlayerId.P0 else -u0

    def infoset_key(self, state: KuhnState, player: int) -> bytes:
        if player == PlayerId.CHANCE:
            raise ChancePlayer("chance has no information sets")
        return bytes((player, state.cards[player])) + bytes(state.history)

    def encode_features(self, state: KuhnState, player: int) -> np.ndarray:
        acting = self.current_player(state)
        if acting == PlayerId.CHANCE:
            raise ChanceNode("no features at chance nodes")
        if player != acting:
            raise ValueError("features are encoded for the acting player")
        x = np.zeros(self.feature_size, dtype=np.float32)
        x[state.cards[player]] = 1.0
        for i, a in enumerate(state.history):
            x[3 + 2 * i + a] = 1.0
        return x

    def action_label(self, state: KuhnState, action: int) -> str:
        if len(state.cards) < 2:
            return CARD_NAMES[action]
        return ("PASS", "BET")[action]

    def betting_round(self, state: KuhnState) -> int:
        return 0

    def num_player_actions(self, state: KuhnState) -> int:
        return len(state.history)
