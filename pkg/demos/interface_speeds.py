"""Averaged interface data for a few registered models, then a look at the
fast limit with unequal speeds on the two half-lines.

With speeds 4 (right) and 1 (left) the limit spends time on the right with
probability sqrt(1)/(sqrt(4)+sqrt(1)) = 1/3 at any fixed time.

    python3 demos/interface_speeds.py
"""

import numpy as np

from nullrec import TimeGrid, average_interface, get_model
from nullrec.limits import build_X0

for name in ("sine_speed", "gaussian_drift", "gaussian_longtime", "tanh_interface"):
    c = get_model(name)
    a = average_interface(c)
    y = np.zeros((1, c.d))
    print(f"{name:18s} a+={a.a_plus(y)[0]:.6f} a-={a.a_minus(y)[0]:.6f} "
          f"beta={np.round(a.beta(y)[0], 6).tolist()} alpha={np.round(a.alpha(y)[0], 6).tolist()}")

c = get_model("tanh_interface", a_plus=4.0, a_minus=1.0)
avg = average_interface(c)
grid = TimeGrid.covering(1.0, 1e-3)
x, L = build_X0(avg, np.zeros((grid.n_steps + 1, 1)), grid, seed=7, paths=np.arange(4000))
right = np.mean(x[-1] > 0)
se = np.sqrt(right * (1 - right) / x.shape[1])
print(f"\nfraction right of the interface at t=1: {right:.4f} +- {se:.4f} (expected 1/3)")
print(f"mean local time at t=1: {L.final.mean():.4f}")
