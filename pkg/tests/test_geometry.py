import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nestedheat.errors import BadSpec, EnvelopeTooLarge, NotNested, NotOnFractal
from nestedheat.geometry import (
    CellAddress,
    CellComplex,
    address_from_translation,
    build_system,
    containing_cells,
    enclosing_level,
    fixed_point,
    is_lattice_vertex,
    load_spec,
    on_cell,
    sample_points,
    translation_of,
    vertex_lattice,
)

SQ3 = np.sqrt(3.0)


def test_gasket_essential_points(gasket):
    V = gasket.essential_fixed_points
    expected = np.array([[0, 0], [1, 0], [0.5, SQ3 / 2]])
    assert gasket.k == 3 and gasket.N == 3
    assert np.allclose(sorted(map(tuple, V)), sorted(map(tuple, expected)))


def test_fixed_points_are_fixed(gasket):
    for s in gasket.similitudes:
        p = fixed_point(s)
        assert np.allclose(s(p), p)


def test_dimensions(gasket, snowflake):
    d = gasket.dims
    assert d.d_f == pytest.approx(np.log(3) / np.log(2))
    assert d.d_w == pytest.approx(np.log(5) / np.log(2))
    assert d.d_s == pytest.approx(2 * np.log(3) / np.log(5))
    assert snowflake.N == 7 and snowflake.k == 6


def test_level_one_complex_counts(gasket):
    cx = CellComplex(gasket, 0, 2)
    assert cx.n_cells == 9
    assert cx.n_vertices == 15


def test_first_rows_are_the_smaller_envelope(gasket):
    big = CellComplex(gasket, -1, 2)
    small = CellComplex(gasket, -1, 1)
    assert np.allclose(big.translations[: small.n_cells], small.translations)


def test_rank_counts_meeting_cells(gasket):
    cx = CellComplex(gasket, 0, 2)
    assert sorted(set(cx.rank.tolist())) == [1, 2]
    assert (cx.rank == 1).sum() == 3


def test_address_roundtrip(gasket):
    a = CellAddress(0, (2, 3))
    t = translation_of(gasket, a)
    assert address_from_translation(gasket, t, 0, 2) == a


def test_on_cell_and_holes(gasket):
    assert on_cell(gasket, (0.5, 0.0), 0)
    assert not on_cell(gasket, (0.5, SQ3 / 6), 0)
    with pytest.raises(NotOnFractal):
        enclosing_level(gasket, (0.5, SQ3 / 6), 0)


def test_containing_cells_at_shared_vertex(gasket):
    cells = containing_cells(gasket, (1.0, 0.0), 0, 2)
    assert len(cells) == 2


def test_lattice_vertex(gasket):
    assert is_lattice_vertex(gasket, (2.0, 0.0), 0)
    assert not is_lattice_vertex(gasket, (0.5, 0.0), 0)


def test_vertex_lattice_size(gasket):
    assert len(vertex_lattice(gasket, 0, 1)) == 6


def test_cap_refuses_large_envelopes(gasket):
    with pytest.raises(EnvelopeTooLarge):
        CellComplex(gasket, -20, 0, cap=1000)


def test_bad_specs():
    with pytest.raises(BadSpec):
        build_system([[0, 0], [0.5, 0]], 1.0, 2.0, 2.0)
    with pytest.raises(NotNested):
        build_system([[0, 0], [0, 0], [0.25, 0.4]], 2.0, 2.0, 2.0)
    with pytest.raises(BadSpec):
        build_system([[0.1, 0], [0.5, 0], [0.25, 0.4330127018922193]], 2.0, 2.0, 2.0)


def test_missing_spec_names_path():
    with pytest.raises(FileNotFoundError, match="nowhere.json"):
        load_spec("/nowhere/nowhere.json")


def test_spec_hash_stable(gasket):
    assert gasket.spec_hash() == load_spec("gasket").spec_hash()


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), M=st.integers(-2, 2))
def test_samples_lie_on_fractal(gasket, seed, M):
    pts = sample_points(gasket, M, 5, np.random.default_rng(seed))
    assert all(on_cell(gasket, p, M) for p in pts)
