"""
Tabular CFR on Kuhn poker
=========================

Vanilla and linear CFR on the 12-infoset game, with exact exploitability
along the way. The first player's game value at equilibrium is -1/18.
"""

import numpy as np

from sdcfr.evaluation import exploitability, expected_value
from sdcfr.games import make_game
from sdcfr.tabular import TabularCFR

game = make_game("kuhn")

# exploitability in milli-antes per game after 10, 100, 1000 and 5000 iterations
for mode in ("vanilla", "linear"):
    solver = TabularCFR(game, mode)
    row = []
    for target in (10, 100, 1000, 5000):
        solver.run(target - solver.t)
        pol = solver.average_policy()
        row.append(exploitability(game, (pol, pol)).value)
    print(mode.ljust(8), " ".join(f"{e:9.2f}" for e in row))

# the converged profile's value for player 0
pol = solver.average_policy()
print("value", expected_value(game, (pol, pol)), "vs", -1 / 18)

# player 0 holding the jack bets with some probability alpha in [0, 1/3];
# with the king it bets about 3 * alpha
table = solver.average_table()
for key, probs in sorted(table.items()):
    if key[0] == 0 and len(key) == 2:
        print("P0 card", key[1], "bet", np.round(probs[1], 3))
