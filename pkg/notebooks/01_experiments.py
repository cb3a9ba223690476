"""Run the three desk experiments and print their summaries.

Each experiment is a shipped preset; its artifacts (per-arm curves and
checkpoints, ``summary.csv``, ``timing.csv`` and the resolved ``config.ini``)
land under ``runs/<preset>``. The same runs are available from the shell as
``nema run desk_biophysical_realism`` and so on.

Usage: ``python3 notebooks/01_experiments.py [preset ...]``
"""

import sys

from nema.experiments import load_config, run_experiment

presets = sys.argv[1:] or ["desk_biophysical_realism", "desk_architecture_statistics", "desk_limitations"]

# %% run each preset in turn, logging progress to stderr
for name in presets:
    cfg = load_config(name)
    print(f"== {name}: {len(cfg.arms)} arms x {len(cfg.seeds)} seeds -> {cfg.output}")
    summary = run_experiment(cfg, log=lambda m: print(m, file=sys.stderr))
    print(summary.table())
