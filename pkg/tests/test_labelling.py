import numpy as np
import pytest

from nestedheat.errors import NoGLP
from nestedheat.geometry import CellComplex
from nestedheat.labelling import (
    Rotation,
    construct_labelling,
    level_shifts,
    rotation_matrix,
    verify_glp,
    word_rotations,
)


def test_rotation_inverse(gasket):
    R = Rotation(1, 3, gasket.center(0))
    x = np.array([0.3, 0.1])
    assert np.allclose(R.inverse()(R(x)), x)
    assert np.allclose(rotation_matrix(3, 3), np.eye(2))


def test_rotation_permutes_base_vertices(gasket):
    V = gasket.vertices(0)
    img = Rotation(1, 3, gasket.center(0))(V)
    assert np.allclose(np.roll(V, -1, axis=0), img) or np.allclose(np.roll(V, 1, axis=0), img)


@pytest.mark.parametrize("M", [-1, 0, 1])
def test_gasket_labelling_verifies(gasket, M):
    lab = construct_labelling(gasket, M, M + 3)
    assert verify_glp(gasket, lab).ok


def test_orders_agree(gasket):
    a = construct_labelling(gasket, 0, 3, order="bfs")
    b = construct_labelling(gasket, 0, 3, order="dfs")
    c = construct_labelling(gasket, 0, 3, order="random", seed=7)
    assert np.array_equal(a.vertex_labels, b.vertex_labels)
    assert np.array_equal(a.vertex_labels, c.vertex_labels)
    assert np.array_equal(a.rotations, c.rotations)


def test_anchor_shifts_labels(gasket):
    a = construct_labelling(gasket, 0, 2, anchor=0)
    b = construct_labelling(gasket, 0, 2, anchor=1)
    assert np.array_equal((a.vertex_labels - 1) % 3, b.vertex_labels)
    assert np.array_equal(a.rotations, b.rotations)


def test_rotations_match_shift_table(gasket):
    lab = construct_labelling(gasket, 0, 3)
    assert np.array_equal(lab.rotations, word_rotations(gasket, lab.complex.words))


def test_pentagasket_has_glp(pentagasket):
    lab = construct_labelling(pentagasket, 0, 2)
    assert verify_glp(pentagasket, lab).ok


def test_snowflake_has_no_glp(snowflake):
    with pytest.raises(NoGLP):
        construct_labelling(snowflake, 0, 2)
    with pytest.raises(NoGLP):
        level_shifts(snowflake, 2)


def test_corrupted_labelling_is_caught(gasket):
    lab = construct_labelling(gasket, 0, 2)
    word = next(w for w, r in lab.cell_rotation.items() if w != (1, 1))
    lab.cell_rotation[word] = (lab.cell_rotation[word] + 1) % 3
    report = verify_glp(gasket, lab)
    assert not report.ok and len(report.violations) == 1


def test_restrict_is_prefix(gasket):
    lab = construct_labelling(gasket, 0, 3)
    small = lab.restrict(2)
    assert small.J == 2
    assert np.array_equal(small.rotations, lab.rotations[: CellComplex(gasket, 0, 2).n_cells])
    assert verify_glp(gasket, small).ok
