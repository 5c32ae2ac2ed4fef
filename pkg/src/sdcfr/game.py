"""Two-player zero-sum extensive-form games with chance.

Concrete games subclass :class:`Game` and keep their states immutable.
Player actions are small integer ids into the game's maximal action set
(``Game.num_actions``); a state's legal subset is ``legal_actions(state)``
and every :data:`Distribution` is aligned with that subset.
"""

from __future__ import annotations

import abc
import enum
from typing import Iterator, NamedTuple, Sequence

import numpy as np

Distribution = np.ndarray
InfoSetKey = bytes


class PlayerId(enum.IntEnum):
    P0 = 0
    P1 = 1
    CHANCE = 2


def opponent(player: int) -> PlayerId:
    if player == PlayerId.P0:
        return PlayerId.P1
    if player == PlayerId.P1:
        return PlayerId.P0
    raise ChancePlayer("chance has no opponent")


class Action(NamedTuple):
    id: int
    label: str


class GameError(Exception):
    pass


class IllegalAction(GameError):
    pass


class TerminalState(GameError):
    pass


class NonTerminal(GameError):
    pass


class ChancePlayer(GameError):
    pass


class NotChanceNode(GameError):
    pass


class ChanceNode(GameError):
    pass


class GameTooLarge(GameError):
    pass


class Game(abc.ABC):
    """Rules of a finite two-player zero-sum game.

    States carry a ``trace`` attribute: the tuple of every action id
    (chance outcomes included) applied since the root.
    """

    name: str = "game"
    #: size of the maximal player action set (network output width)
    num_actions: int
    #: length of :meth:`encode_features` vectors
    feature_size: int
    #: chip value of one ante, for milli-ante reporting
    ante: int = 1
    #: big-blind chips; ``None`` for games without blinds
    big_blind: int | None = None

    @abc.abstractmethod
    def initial_state(self): ...

    @abc.abstractmethod
    def current_player(self, state) -> PlayerId:
        """Player to act; raises :class:`TerminalState` at terminals."""

    @abc.abstractmethod
    def is_terminal(self, state) -> bool: ...

    @abc.abstractmethod
    def legal_actions(self, state) -> tuple[int, ...]: ...

    @abc.abstractmethod
    def apply_action(self, state, action: int): ...

    @abc.abstractmethod
    def chance_outcomes(self, state) -> list[tuple[int, float]]: ...

    @abc.abstractmethod
    def terminal_utility(self, state, player: int) -> int: ...

    @abc.abstractmethod
    def infoset_key(self, state, player: int) -> InfoSetKey: ...

    @abc.abstractmethod
    def encode_features(self, state, player: int) -> np.ndarray: ...

    @abc.abstractmethod
    def action_label(self, state, action: int) -> str: ...

    @abc.abstractmethod
    def betting_round(self, state) -> int: ...

    @abc.abstractmethod
    def num_player_actions(self, state) -> int:
        """Number of player (non-chance) actions taken so far."""

    def actions(self, state) -> list[Action]:
        if self.current_player(state) == PlayerId.CHANCE:
            ids = [a for a, _ in self.chance_outcomes(state)]
        else:
            ids = list(self.legal_actions(state))
        return [Action(a, self.action_label(state, a)) for a in ids]

    def legal_mask(self, state) -> np.ndarray:
        mask = np.zeros(self.num_actions, dtype=bool)
        mask[list(self.legal_actions(state))] = True
        return mask

    def state_bytes(self, state) -> bytes:
        """Canonical encoding of a history (its full action trace)."""
        return bytes(state.trace)

    def replay(self, state) -> Iterator[tuple[object, int]]:
        """Yield ``(state_k, action_k)`` along the path from the root to ``state``."""
        s = self.initial_state()
        for a in state.trace:
            yield s, a
            s = self.apply_action(s, a)

    def walk(self, state=None, max_nodes: int | None = None) -> Iterator[object]:
        """Depth-first pre-order enumeration of every history below ``state``."""
        stack = [self.initial_state() if state is None else state]
        seen = 0
        while stack:
            s = stack.pop()
            seen += 1
            if max_nodes is not None and seen > max_nodes:
                raise GameTooLarge(f"{self.name}: more than {max_nodes} nodes")
            yield s
            if self.is_terminal(s):
                continue
            if self.current_player(s) == PlayerId.CHANCE:
                children = [a for a, _ in self.chance_outcomes(s)]
            else:
                children = list(self.legal_actions(s))
            for a in reversed(children):
                stack.append(self.apply_action(s, a))


class Policy:
    """Behavioural strategy for one or both players.

    ``distribution(state)`` returns probabilities over
    ``game.legal_actions(state)``. Trajectory-coupled policies override
    :meth:`reset`, which is called once at the start of every episode.
    """

    def reset(self, rng: np.random.Generator) -> None:
        pass

    def distribution(self, state) -> Distribution:
        raise NotImplementedError


class UniformPolicy(Policy):
    def __init__(self, game: Game):
        self.game = game

    def distribution(self, state) -> Distribution:
        n = len(self.game.legal_actions(state))
        return np.full(n, 1.0 / n)


class TabularPolicy(Policy):
    """Lookup table keyed by infoset; missing keys play uniformly."""

    def __init__(self, game: Game, table: dict[InfoSetKey, np.ndarray]):
        self.game = game
        self.table = table

    def distribution(self, state) -> Distribution:
        player = self.game.current_player(state)
        probs = self.table.get(self.game.infoset_key(state, player))
        if probs is None:
            n = len(self.game.legal_actions(state))
            return np.full(n, 1.0 / n)
        return probs


class FixedActionPolicy(Policy):
    """Always plays the first legal action from a preference list."""

    def __init__(self, game: Game, preference: Sequence[int]):
        self.game = game
        self.preference = tuple(preference)

    def distribution(self, state) -> Distribution:
        legal = self.game.legal_actions(state)
        probs = np.zeros(len(legal))
        for a in self.preference:
            if a in legal:
                probs[legal.index(a)] = 1.0
                return probs
        probs[0] = 1.0
        return probs


def sample_index(probs: np.ndarray, rng: np.random.Generator) -> int:
    """Inverse-CDF draw; robust to rounding in the last bucket."""
    u = rng.random()
    acc = 0.0
    for i, p in enumerate(probs):
        acc += p
        if u < acc:
            return i
    for i in range(len(probs) - 1, -1, -1):
        if probs[i] > 0:
            return i
    raise ValueError("distribution has no positive entry")
