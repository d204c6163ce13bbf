"""Scanning the two-sided envelope estimates across scales.

The estimates hold with constants that do not depend on the level M, so
the harness reports the spread of the fitted constants across levels.

Run with ``python3 demos/04_envelope_scans.py`` (a few seconds).
"""

from nestedheat.geometry import load_spec
from nestedheat.harness import COROLLARY_GRID, Grid, cardinality_scan, scan_corollary, scan_theorem_1, scan_theorem_2
from nestedheat.kernels import calibrated_params

grid = Grid(n_pairs=20)
for name in ("gasket", "pentagasket"):
    sys = load_spec(name)
    params = calibrated_params(sys)
    print(f"\n== {name} ==")
    for scan in (scan_theorem_1, scan_theorem_2):
        rep = scan(params, sys, None, grid)
        print(f"{rep.claim}: ratios in [{rep.min_ratio:.3g}, {rep.max_ratio:.3g}], "
              f"drift across M {tuple(round(v, 2) for v in rep.drift)}, passed {rep.passed}")
        for case in rep.worst_cases[:1]:
            print(f"  tightest lower case: t={case['t']:.3g}, M={case['M']}, ratio {case['ratio']:.3g}")
    rep = scan_corollary(params, sys, None, Grid.from_dict(dict(COROLLARY_GRID.to_dict(), n_pairs=20)))
    print(f"uniform regime band {rep.details['band_A']:.3g}, "
          f"on-diagonal band {rep.details['band_B']:.3g}")
    card = cardinality_scan(sys, M_values=(0,), m_max=3, n_points=5)
    print(f"fiber counts exact: {card.passed}, largest B set {card.details['max_B']}")
