"""
Averaging from stored iteration strategies
==========================================

Keep every iteration's strategy, then recover the linear average strategy
at any infoset from the stored strategies alone. With exact tables in the
store the result matches tabular linear CFR to rounding error, and playing
whole episodes with one stored strategy drawn per episode reproduces it in
distribution.
"""

from collections import defaultdict

import numpy as np

from sdcfr.deep_cfr import TableModel
from sdcfr.game import PlayerId, sample_index
from sdcfr.games import make_game
from sdcfr.sd_cfr import ModelBuffer, SDCFRPolicy, trajectory_policy
from sdcfr.tabular import TabularCFR

game = make_game("leduc")
solver = TabularCFR(game, "linear", snapshots=True).run(50)

buf = ModelBuffer()
for snap in solver.snapshots:
    for player, strategies in snap.strategies.items():
        buf.add(player, snap.iteration, TableModel(strategies, game.num_actions))

policy = SDCFRPolicy(game, buf)
avg = solver.average_table()
worst = 0.0
for player in (0, 1):
    table = policy.tabulate(game, player)
    worst = max(worst, max(np.abs(table[k] - avg[k]).max() for k in table))
print(f"{len(avg)} infosets, max abs difference {worst:.1e}")

# sampled play: one stored strategy per player per episode, drawn with
# probability proportional to its iteration
kuhn = make_game("kuhn")
ksolver = TabularCFR(kuhn, "linear", snapshots=True).run(20)
kbuf = ModelBuffer()
for snap in ksolver.snapshots:
    for player, strategies in snap.strategies.items():
        kbuf.add(player, snap.iteration, TableModel(strategies, kuhn.num_actions))
traj = trajectory_policy(kuhn, kbuf)
rng = np.random.default_rng(0)
counts = defaultdict(lambda: np.zeros(2))
for _ in range(20_000):
    traj.reset(rng)
    state = kuhn.initial_state()
    while not kuhn.is_terminal(state):
        who = kuhn.current_player(state)
        if who == PlayerId.CHANCE:
            outcomes = kuhn.chance_outcomes(state)
            state = kuhn.apply_action(state, outcomes[sample_index(np.array([p for _, p in outcomes]), rng)][0])
            continue
        i = sample_index(traj.distribution(state), rng)
        counts[kuhn.infoset_key(state, int(who))][i] += 1
        state = kuhn.apply_action(state, kuhn.legal_actions(state)[i])

kavg = ksolver.average_table()
for key in sorted(counts):
    c = counts[key]
    print(key.hex().ljust(10), np.round(c / c.sum(), 3), np.round(kavg[key], 3))
