"""Reflected Brownian motion on planar simple nested fractals.

Geometry of the fractal lattice, good labellings and folding projections,
graph metrics, the fiber series for the reflected transition density and a
verification harness for its two-sided envelope estimates.
"""

__version__ = "0.1.0"
