"""KS distance between prelimit deviations and the limit, as eps shrinks.

Small version of the diffusive deviation experiment: a few thousand paths
per ensemble, so the distances sit a little above the noise floor.

    python3 demos/convergence_table.py [n_paths]
"""

import sys

import numpy as np

from nullrec import average_interface, get_model, simulate_ensemble
from nullrec.limits import limit_ensemble
from nullrec.sde import ensemble_deviation, grid_for, solve_unperturbed
from nullrec.streams import derive_seed
from nullrec.validators import ks_distance, noise_floor

n = int(sys.argv[1]) if len(sys.argv) > 1 else 2000
c = get_model("gaussian_diffusion")
avg = average_interface(c)
y0 = np.array([1.0])
seed = 11

lim_grid = grid_for(0.02, 1.0)
lim = limit_ensemble("diffusive", c, avg, y0, lim_grid, n, derive_seed(seed, 2), record_times=[1.0])
ref = lim.w[:, -1, 0]
print(f"limit: mean {ref.mean():+.4f}, sd {ref.std():.4f}")
print(f"noise floor {noise_floor(n, n):.4f}\n")
print(" eps     KS      mean     sd")
for i, eps in enumerate((0.2, 0.1, 0.05)):
    grid = grid_for(eps, 1.0)
    res = simulate_ensemble(c, eps, 0.0, y0, grid, n, derive_seed(seed, 1, i), record_times=[1.0])
    dev = ensemble_deviation(res, solve_unperturbed(c, y0, grid), 0.5)
    z = dev[:, -1, 0]
    print(f"{eps:5.3f}  {ks_distance(z, ref)[0]:.4f}  {z.mean():+.4f}  {z.std():.4f}")
