"""
Two ways to average learned strategies on Kuhn poker
====================================================

One Deep CFR run feeds both: its average-strategy network, and a store of
every value network queried at play time. Small budget, so expect
exploitability in the hundreds of milli-antes; the point is the comparison
and the trend.
"""

from sdcfr.deep_cfr import DeepCFR, DeepCFRConfig
from sdcfr.evaluation import exploitability
from sdcfr.games import make_game
from sdcfr.nn import TrainConfig
from sdcfr.sd_cfr import ModelBuffer, SDCFRPolicy

game = make_game("kuhn")
store = ModelBuffer()
cfg = DeepCFRConfig(
    traversals=300,
    hidden_dims=(32, 32),
    value_train=TrainConfig(256, 200),
    avg_train=TrainConfig(256, 1000),
    seed=0,
)
run = DeepCFR(game, cfg, model_sinks=[store])

print("iter   stored-nets  avg-net   (mA/g)")
for t in range(1, 41):
    run.iterate()
    if t % 10 == 0:
        stored = SDCFRPolicy(game, store)
        nets = [run.train_average_network(p) for p in (0, 1)]
        avg_net = run.average_policy(nets)
        e_sd = exploitability(game, (stored, stored)).value
        e_avg = exploitability(game, (avg_net, avg_net)).value
        print(f"{t:4d}   {e_sd:10.1f}  {e_avg:8.1f}")
