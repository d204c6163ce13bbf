"""Random walks on the gasket lattice as a check on the analytic picture.

Walks on the level-n lattice approximate Brownian motion with one step per
``L**(n d_w)`` units of time.  The on-diagonal density decays like
``t**(-d_s/2)`` and folding the walk agrees with folding its histogram.

Run with ``python3 demos/03_random_walk.py`` (about half a minute).
"""

import math

import numpy as np

from nestedheat.geometry import load_spec
from nestedheat.random_walk import (
    build_walk_graph,
    compare_histograms,
    empirical_density,
    fold_ensemble,
    on_diagonal_slope,
    pushforward,
    simulate_many,
)

gasket = load_spec("gasket")
graph = build_walk_graph(gasket, -6, 2)
print(f"{graph.n_vertices} lattice vertices, time step {graph.time_step:.3g}")

steps = np.unique(np.round(np.logspace(1, 3, 12)).astype(int))
slope, times, est, err = on_diagonal_slope(graph, (1.0, 0.0), steps, 50_000, seed=0)
print(f"on-diagonal slope {slope:.3f}, expected {-math.log(3) / math.log(5):.3f}")
for t, e, s in zip(times[::3], est[::3], err[::3]):
    print(f"  t={t:.4f}  g={e:.3f} +- {s:.3f}")

M, n_steps = -2, 1000
T = n_steps * graph.time_step
folded = fold_ensemble(simulate_many(graph, (0.125, 0.0), [n_steps], 50_000, seed=1), M)
free = simulate_many(graph, (0.125, 0.0), [n_steps], 50_000, seed=2)
h_fold = empirical_density(folded, T, -4, M=M)
h_push = pushforward(empirical_density(free, T, -4), gasket, M)
z, used = compare_histograms(h_fold, h_push, gasket)
print(f"\nfolded walk vs folded histogram at t={T:.3f}: max z-score {z:.2f} over {used} bins")
print("bin densities (folded walk):", np.round(h_fold.density(gasket), 2).tolist())
