"""Folding the unbounded gasket onto a single complex.

Run with ``python3 demos/01_folding.py``.
"""

import numpy as np

from nestedheat.folding import boundary_set, fiber, project
from nestedheat.geometry import CellComplex, load_spec, sample_points
from nestedheat.labelling import construct_labelling, verify_glp

gasket = load_spec("gasket")
print(f"{gasket.name}: N={gasket.N}, L={gasket.L}, k={gasket.k}")
d = gasket.dims
print(f"d_f={d.d_f:.4f}  d_w={d.d_w:.4f}  d_s={d.d_s:.4f}  d_J={d.d_J:.4f}")

# The 0-complexes of K<2> are unit triangles inside a triangle of side 4.
cx = CellComplex(gasket, 0, 2)
print(f"\nK<2> holds {cx.n_cells} cells of order 0 and {cx.n_vertices} vertices")

# A good labelling gives each cell a rotation; corners carry labels 0, 1, 2.
lab = construct_labelling(gasket, 0, 3)
print("labelling verified:", verify_glp(gasket, lab).ok)
print("rotations of the first nine 0-cells:", lab.rotations[:9].tolist())

# Folding maps any point of the fractal into K<0>, preserving labels.
rng = np.random.default_rng(1)
for p in sample_points(gasket, 3, 4, rng):
    q = project(gasket, lab, p, 0)
    print(f"  {np.round(p, 4).tolist()} -> {np.round(q, 4).tolist()}")

# The fiber of a point: one preimage per 0-cell, grouped by generation.
y = np.array([0.3, 0.0])
fb = fiber(gasket, None, y, 0, 3)
print(f"\nfiber of {y}: shell sizes {[len(a) for a in fb.A_sets]}")
print("shell 0 touches K<0> only at", [np.round(z, 3).tolist() for z in fb.C_contacts])
print("boundary contacts:", [np.round(c.vertex, 3).tolist() for c in boundary_set(gasket, 0)])
