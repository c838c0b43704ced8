"""One long-time limit path: the slow coordinate moves only while the fast
coordinate sits at the interface, so it looks like a devil's staircase
against time.  Writes staircase.png next to this script when matplotlib is
available, otherwise prints a coarse table.

    python3 demos/cantor_staircase.py
"""

from pathlib import Path

import numpy as np

from nullrec import TimeGrid, average_interface, get_model
from nullrec.limits import limit_path

c = get_model("gaussian_longtime")
avg = average_interface(c)
grid = TimeGrid.covering(1.0, 1e-4)
p = limit_path("longtime", c, avg, [0.0], grid, seed=3)

band = 2.0 * np.sqrt(grid.dt)
moving = np.abs(np.diff(p.w[:, 0])) > 0
near = np.abs(p.x[:-1]) < band
print(f"steps with slow motion: {moving.sum()} of {grid.n_steps}")
print(f"of those, inside the interface band: {np.mean(near[moving]):.3f}")
print(f"final slow value {p.w[-1, 0]:+.4f}, final local time {p.L[-1]:.4f}")

try:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    for j in range(0, grid.n_steps + 1, grid.n_steps // 10):
        print(f"t={p.times[j]:.2f}  x={p.x[j]:+.4f}  y={p.w[j, 0]:+.4f}")
else:
    fig, ax = plt.subplots(2, 1, sharex=True, figsize=(7, 5))
    ax[0].plot(p.times, p.x, lw=0.6)
    ax[0].set_ylabel("fast")
    ax[1].plot(p.times, p.w[:, 0], lw=0.8, color="C3")
    ax[1].set_ylabel("slow")
    ax[1].set_xlabel("t")
    out = Path(__file__).with_name("staircase.png")
    fig.savefig(out, dpi=120)
    print(f"wrote {out}")
