import json

import numpy as np
import pytest

from nestedheat.errors import GridEmpty, VertexBase
from nestedheat.geometry import sample_points
from nestedheat.harness import (
    COROLLARY_GRID,
    Grid,
    cardinality_scan,
    check_cardinalities,
    scan_corollary,
    scan_lemma_tail,
    scan_theorem_1,
    scan_theorem_2,
)
from nestedheat.kernels import calibrated_params

SMALL = Grid(t_factors=(1e-2, 1e-1, 1.0, 10.0, 100.0), M_values=(0, 1), n_pairs=8, seed=5)


@pytest.fixture(scope="module")
def params(gasket):
    return calibrated_params(gasket)


@pytest.mark.parametrize("scan", [scan_theorem_1, scan_theorem_2, scan_lemma_tail])
def test_small_scans_pass(gasket, params, scan):
    rep = scan(params, gasket, None, SMALL)
    assert rep.passed
    assert 0 < rep.min_ratio and rep.max_ratio < np.inf
    assert rep.spec_hash == gasket.spec_hash()


def test_corollary_small(gasket, params):
    # regime C needs grid times close to |x - y|**d_w, hence the full time grid
    grid = Grid(t_factors=COROLLARY_GRID.t_factors, M_values=(0, 1), n_pairs=20)
    rep = scan_corollary(params, gasket, None, grid)
    assert rep.passed
    assert rep.details["band_A"] < 10 and rep.details["band_B"] < 10


def test_report_is_reproducible(gasket, params):
    a = scan_theorem_1(params, gasket, None, SMALL).to_json()
    b = scan_theorem_1(params, gasket, None, SMALL, jobs=3).to_json()
    assert a == b
    assert json.loads(a)["grid"]["seed"] == 5


def test_explicit_pairs_scale_with_level(gasket):
    g = Grid(n_pairs=0, pairs=(((0.1, 0.0), (0.5, 0.0)),), M_values=(1,))
    (x, y), = g.points(gasket, 1)
    assert np.allclose(x, (0.2, 0.0)) and np.allclose(y, (1.0, 0.0))


def test_grid_roundtrip():
    g = Grid(t_factors=(1.0, 2.0), pairs=(((0.1, 0.0), (0.5, 0.0)),))
    assert Grid.from_dict(json.loads(json.dumps(g.to_dict()))) == g


def test_empty_grid(gasket, params):
    with pytest.raises(GridEmpty):
        scan_theorem_1(params, gasket, None, Grid(n_pairs=0, M_values=(0,)))


def test_cardinalities_gasket(gasket):
    rep = cardinality_scan(gasket, M_values=(0,), m_max=3, n_points=5)
    assert rep.passed and rep.details["max_B"] == 0


def test_cardinalities_reject_vertex_base(gasket):
    with pytest.raises(VertexBase):
        check_cardinalities(gasket, None, 0, 2, [np.array([1.0, 0.0])])


def test_cardinalities_snowflake_fail_without_glp(snowflake, rng):
    ys = sample_points(snowflake, 0, 2, rng)
    rep = check_cardinalities(snowflake, None, 0, 2, ys)
    assert not rep.passed
    assert "good labelling" in rep.worst_cases[0]["issue"]
