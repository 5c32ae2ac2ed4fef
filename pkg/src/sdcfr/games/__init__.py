from __future__ import annotations

from ..game import Game, PlayerId
from .kuhn import KuhnPoker
from .leduc import BIG_LEDUC, LeducConfig, LeducPoker

__all__ = ["KuhnPoker", "LeducPoker", "LeducConfig", "BIG_LEDUC", "enumerate_infosets", "make_game"]


def enumerate_infosets(game: Game) -> dict[PlayerId, list[tuple[bytes, int]]]:
    """Every decision infoset per player with its action count, in DFS discovery order."""
    found: dict[PlayerId, dict[bytes, int]] = {PlayerId.P0: {}, PlayerId.P1: {}}
    for state in game.walk():
        if game.is_terminal(state):
            continue
        player = game.current_player(state)
        if player == PlayerId.CHANCE:
            continue
        found[player].setdefault(game.infoset_key(state, player), len(game.legal_actions(state)))
    return {p: list(keys.items()) for p, keys in found.items()}


def make_game(name: str, leduc: dict | None = None) -> Game:
    if name == "kuhn":
        return KuhnPoker()
    if name == "leduc":
        return LeducPoker(LeducConfig(**(leduc or {})))
    if name == "big_leduc":
        return LeducPoker(LeducConfig(**{**BIG_LEDUC.__dict__, **(leduc or {})}))
    raise ValueError(f"unknown game {name!r}")
