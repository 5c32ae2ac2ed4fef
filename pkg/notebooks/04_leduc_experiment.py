"""
A small shared Leduc run through the experiment harness
=======================================================

The harness writes CSVs and checkpoints to a run directory and can resume
from it. This uses a shrunk configuration that finishes in under a minute;
``recipe("fig1a")`` is the full-size version.
"""

import tempfile
from pathlib import Path

from sdcfr.experiment import ExperimentConfig, read_exploitability, run_experiment

out = Path(tempfile.mkdtemp()) / "leduc"
cfg = ExperimentConfig.from_dict(
    dict(
        name="leduc-small",
        game="leduc",
        algorithm="sd_cfr_shared",
        iterations=60,
        traversals=200,
        hidden_dims=[64, 64],
        value_train={"batch_size": 512, "n_updates": 100},
        avg_train={"batch_size": 512, "n_updates": 400},
        eval_every=20,
        reservoir_capacities=[10],
        head_to_head_pairs=500,
        disagreement_rollouts=300,
        out=str(out),
    )
)
root = run_experiment(cfg)

for label, curve in read_exploitability(root).items():
    print(label.ljust(32), "  ".join(f"t={t}: {e:6.0f}" for t, e in curve))

print((root / "head_to_head.csv").read_text())
print((root / "disagreement.csv").read_text())
