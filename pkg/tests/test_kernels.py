import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nestedheat.errors import BadTime, MissingConstants, NoConvergence
from nestedheat.folding import fiber_table, preimages
from nestedheat.geometry import sample_points
from nestedheat.kernels import (
    KernelParams,
    calibrated_params,
    density_series,
    f_kernel,
    g_difference,
    g_M_density,
    growth_constant_c18,
    h_envelope,
    tail_bound,
)


@pytest.fixture(scope="module")
def params(gasket):
    return KernelParams.for_system(gasket)


def brute_force(params, sys, t, x, y, M, D):
    """Fiber sum over all cells of K<M+D>, one shell at a time."""
    table = fiber_table(sys, D)
    pts = preimages(sys, y, M, table)
    r = np.hypot(*(pts - np.asarray(x)).T)
    terms = f_kernel(params, t, r)
    return math.fsum(terms)


def test_f_kernel_formula(params):
    d = params.dims
    t, r = 0.7, 1.3
    want = t ** (-d.d_s / 2) * math.exp(-((r ** d.d_w / t) ** (1 / (d.d_J - 1))))
    assert f_kernel(params, t, r) == pytest.approx(want, rel=1e-14)


@pytest.mark.parametrize("t", [1e-3, 0.5, 10.0, 1e3])
def test_h_envelope_formula(params, t):
    d, L, M = params.dims, params.L, 1
    a = max(L ** M * t ** (-1 / d.d_w), 1.0)
    w = d.d_w / (d.d_J - 1)
    want = L ** (-d.d_f * M) * a ** (d.d_f - w) * math.exp(-(a ** w))
    assert h_envelope(params, t, M) == pytest.approx(want, rel=1e-12)


def test_bad_time(params, gasket):
    with pytest.raises(BadTime):
        f_kernel(params, 0.0, 1.0)
    with pytest.raises(BadTime):
        g_M_density(params, gasket, None, -1.0, (0, 0), (0, 0), 0)


def test_params_must_be_positive(gasket):
    with pytest.raises(ValueError):
        KernelParams.for_system(gasket, c_lower=0.0)


def test_calibrated_constants(gasket):
    p = calibrated_params(gasket)
    assert p.c_lower == pytest.approx(11.4157, rel=1e-4)
    assert p.c_upper == pytest.approx(0.0438, rel=1e-2)


def test_tail_bound_needs_c18(params):
    with pytest.raises(MissingConstants):
        tail_bound(params, 1.0, 0, 1, None)


@settings(max_examples=40, deadline=None)
@given(log_t=st.floats(-3, 3), M=st.integers(-1, 2), m=st.integers(0, 10))
def test_tail_bound_monotone(params, log_t, M, m):
    t = 10.0 ** log_t
    assert tail_bound(params, t, M, m + 1, 3.6) <= tail_bound(params, t, M, m, 3.6)


@pytest.mark.parametrize("t", [0.05, 1.0, 20.0])
def test_tail_bound_is_sound(params, gasket, t):
    c18 = growth_constant_c18(gasket)
    x, y = np.array([0.1, 0.0]), np.array([0.75, 0.4330127018922193])
    table = fiber_table(gasket, 9)
    for m in (1, 3, 5):
        sl = slice(gasket.N ** m, None)
        pts = preimages(gasket, y, 0, table, sl)
        actual = math.fsum(f_kernel(params, t, np.hypot(*(pts - x).T)))
        assert actual <= tail_bound(params, t, 0, m, c18)


def test_diagonal_value_and_base_term(params, gasket):
    r = g_M_density(params, gasket, None, 1.0, (0, 0), (0, 0), 0)
    assert r.g_base == pytest.approx(1.0)
    assert r.value >= 1.0
    assert r.value == pytest.approx(1.1493376646, rel=1e-9)


@pytest.mark.parametrize("t,M", [(0.1, 0), (1.0, 0), (3.0, 1), (0.02, -1)])
def test_series_matches_brute_force(params, gasket, t, M):
    x = np.array([0.1, 0.0]) * gasket.L ** M
    y = np.array([0.75, 0.4330127018922193]) * gasket.L ** M
    r = g_M_density(params, gasket, None, t, x, y, M)
    full = brute_force(params, gasket, t, x, y, M, 12)
    assert abs(full - r.value) <= r.tail_bound + 1e-12 * full


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), log_t=st.floats(-2, 2))
def test_scaling_identity(params, gasket, seed, log_t):
    x, y = sample_points(gasket, 0, 2, np.random.default_rng(seed))
    t = 10.0 ** log_t
    L, d = gasket.L, params.dims
    a = g_M_density(params, gasket, None, t, x, y, 0).value
    b = g_M_density(params, gasket, None, t * L ** d.d_w, L * x, L * y, 1).value
    assert b == pytest.approx(L ** (-d.d_f) * a, rel=1e-7)


def test_difference_is_sum_of_parts(params, gasket):
    x, y = (0.1, 0.0), (0.75, 0.4330127018922193)
    r = g_M_density(params, gasket, None, 1.0, x, y, 0)
    assert g_difference(params, gasket, None, 1.0, x, y, 0) == pytest.approx(r.g1 + r.g2, rel=1e-8)


def test_vectorized_matches_scalar(params, gasket):
    x, y = (0.1, 0.0), (0.75, 0.4330127018922193)
    ts = [0.01, 0.3, 5.0]
    vec = density_series(params, gasket, None, ts, x, y, 0)
    for t, r in zip(ts, vec):
        assert r.value == pytest.approx(g_M_density(params, gasket, None, t, x, y, 0).value, rel=1e-12)


def test_no_convergence_carries_partial(params, gasket):
    with pytest.raises(NoConvergence) as info:
        density_series(params, gasket, None, [1e6], (0, 0), (0.5, 0), 0, rel_tol=1e-12, m_cap=2)
    assert info.value.partial[0].value > 0


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), log_t=st.floats(-1, 2))
def test_swap_ratio_is_bounded(params, gasket, seed, log_t):
    # the surrogate is not exactly symmetric under rotation folding
    x, y = sample_points(gasket, 0, 2, np.random.default_rng(seed))
    t = 10.0 ** log_t
    a = g_M_density(params, gasket, None, t, x, y, 0).value
    b = g_M_density(params, gasket, None, t, y, x, 0).value
    assert 0.1 < a / b < 10.0
