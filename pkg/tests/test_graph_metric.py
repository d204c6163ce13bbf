import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nestedheat.geometry import sample_points
from nestedheat.graph_metric import CellGraph, chain_growth, d_M, growth_constants, separation_constant


def test_distance_oracles(gasket):
    assert d_M(gasket, (0, 0), (0, 0), 0) == 0
    assert d_M(gasket, (0, 0), (0.5, 0), 0) == 1
    assert d_M(gasket, (0, 0), (2, 0), 0) == 2
    assert d_M(gasket, (0, 0), (2, 0), -1) == 4


def test_chain_growth_doubles(gasket):
    assert chain_growth(gasket, 5).tolist() == [2, 4, 8, 16, 32]


def test_separation_constant(gasket):
    assert separation_constant(gasket, 0) == pytest.approx(1.0)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_metric_axioms(gasket, seed):
    rng = np.random.default_rng(seed)
    x, y, z = sample_points(gasket, 2, 3, rng)
    g = CellGraph(gasket, 0, 3)
    dxy, dyx = d_M(gasket, x, y, 0, graph=g), d_M(gasket, y, x, 0, graph=g)
    assert dxy == dyx
    assert dxy <= d_M(gasket, x, z, 0, graph=g) + d_M(gasket, z, y, 0, graph=g)


def test_growth_constants_hold_out(gasket):
    gc = growth_constants(gasket, M_range=[-1, 0, 1], samples=300, seed=1)
    assert gc.holdout_ok
    assert gc.c17_hat == pytest.approx(1.0)
    assert 3.0 < gc.c18_hat < 4.0
    assert max(gc.drift()) < 1.5


def test_lower_sandwich_on_samples(gasket, rng):
    gc = growth_constants(gasket, M_range=[0], samples=200, seed=2)
    X, Y = sample_points(gasket, 2, 50, rng), sample_points(gasket, 2, 50, rng)
    g = CellGraph(gasket, 0, 3)
    for x, y in zip(X, Y):
        r = np.hypot(*(x - y))
        assert d_M(gasket, x, y, 0, graph=g) >= gc.c17_hat * r - 1e-9
