"""The reflected density and its two envelopes.

The reflected density is a sum of free-kernel values over the fiber of the
target point.  Small times see only the nearest preimage (the free profile
``f``), large times see the whole fiber (the uniform level ``h``).

Run with ``python3 demos/02_reflected_density.py``.
"""

import numpy as np

from nestedheat.geometry import load_spec
from nestedheat.kernels import calibrated_params, density_series, log_f_kernel, log_h_envelope

gasket = load_spec("gasket")
params = calibrated_params(gasket)
print("envelope constants:", params.triple())

M = 0
x, y = np.array([0.1, 0.0]), np.array([0.6, 0.3])
r = np.hypot(*(x - y))
ts = np.logspace(-3, 3, 13)
results = density_series(params, gasket, None, ts, x, y, M)


def log10_ratio(res, t, c):
    env = max(log_f_kernel(params, t, r, c), log_h_envelope(params, t, M, c))
    return (res.log_value - env) / np.log(10)


# The lower envelope uses a large constant, the upper one a small constant;
# g_M stays above the first and within a bounded factor of the second.
print(f"\n{'t':>9} {'g_M':>11} {'free part':>11} {'generations':>11} {'log10 g/lo':>11} {'log10 g/up':>11}")
for t, res in zip(ts, results):
    print(f"{t:9.3g} {res.value:11.4g} {res.g_base / res.value:11.3f} {res.m_used:11d} "
          f"{log10_ratio(res, t, params.c_lower):11.3g} {log10_ratio(res, t, params.c_upper):11.3g}")

# For large t the density levels off at a constant multiple of L**(-M d_f).
print("\nuniform level 1 / mu(K<0>) =", gasket.L ** (-M * gasket.dims.d_f))
