"""Plot mean +- std training curves of one run directory.

The package has no plotting dependency; this script uses matplotlib if it
is installed. Usage: ``python3 notebooks/02_plot_curves.py runs/desk_biophysical_realism``
"""

import glob
import os
import sys

import matplotlib.pyplot as plt
import numpy as np

from nema.evolution import read_curve_csv

run_dir = sys.argv[1] if len(sys.argv) > 1 else "runs/desk_biophysical_realism"

# %% one line per arm: mean over seeds of the per-generation best, shaded by the std
fig, ax = plt.subplots(figsize=(6, 4))
for arm_dir in sorted(d for d in glob.glob(os.path.join(run_dir, "*")) if os.path.isdir(d)):
    curves = [[row["best"] for row in read_curve_csv(p)] for p in sorted(glob.glob(os.path.join(arm_dir, "curve_*.csv")))]
    if not curves:
        continue
    n = min(map(len, curves))
    best = np.array([c[:n] for c in curves])
    mean, std = best.mean(axis=0), best.std(axis=0)
    ax.plot(mean, label=os.path.basename(arm_dir))
    ax.fill_between(np.arange(n), mean - std, mean + std, alpha=0.2)
ax.set_xlabel("generation")
ax.set_ylabel("best fitness")
ax.legend()
fig.tight_layout()
out = os.path.join(run_dir, "curves.png")
fig.savefig(out, dpi=120)
print(f"wrote {out}")
