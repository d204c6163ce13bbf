"""Folding projection onto the base complex and fiber enumeration.

``pi_M`` maps a point of an ``M``-cell with translation ``tau`` and rotation
index ``r`` to ``R_r(x - tau)`` in ``K<M>``.  Fibers are obtained by inverting
this map cell by cell: the preimage of ``y`` in the same cell is
``R_r^{-1}(y) + tau``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyBoundary, NotOnFractal, OutsideEnvelope, VertexBase
from .geometry import (
    GEOM_TOL,
    CellAddress,
    CellComplex,
    FractalSystem,
    _check_cap,
    containing_cells,
    enclosing_level,
    on_cell,
    quantize,
    translation_of,
)
from .labelling import Labelling, Rotation, level_shifts, rotation_matrix, word_rotations


def _rotation_for(sys, lab, address: CellAddress) -> int:
    if lab is not None:
        return lab.rotation_index(address)
    return int(word_rotations(sys, np.array([address.word or (1,)]))[0])


def _cells_for_projection(sys, lab, x, M):
    if lab is not None:
        if lab.M != M:
            raise ValueError(f"labelling is of order {lab.M}, not {M}")
        try:
            return containing_cells(sys, x, M, lab.J)
        except NotOnFractal as exc:
            raise OutsideEnvelope(f"point {tuple(float(v) for v in x)} is outside K<{lab.J}>") from exc
    return containing_cells(sys, x, M, enclosing_level(sys, x, M))


def project(sys: FractalSystem, lab: Labelling | None, x, M: int) -> np.ndarray:
    """Fold ``x`` onto ``K<M>``.

    ``lab`` may be ``None``, in which case rotations come from the per-level
    shift table and the envelope is unbounded.
    """
    cells = _cells_for_projection(sys, lab, x, M)
    return _apply(sys, lab, x, M, cells[0])


def _apply(sys, lab, x, M, address):
    r = _rotation_for(sys, lab, address)
    tau = translation_of(sys, address)
    return Rotation(r, sys.k, sys.center(M))(np.asarray(x, dtype=float) - tau)


def project_all(sys: FractalSystem, lab: Labelling | None, x, M: int) -> list[np.ndarray]:
    """Images of ``x`` computed through every containing cell."""
    return [_apply(sys, lab, x, M, a) for a in _cells_for_projection(sys, lab, x, M)]


def rank(sys: FractalSystem, y, M: int, J: int | None = None) -> int:
    """Number of ``M``-cells containing ``y``."""
    if J is None:
        J = enclosing_level(sys, y, M) + 1
    try:
        return len(containing_cells(sys, y, M, J))
    except NotOnFractal as exc:
        raise OutsideEnvelope(str(exc)) from exc


# --------------------------------------------------------------------------
# boundary contacts


@dataclass(frozen=True, eq=False)
class BoundaryContact:
    vertex: np.ndarray
    vertex_index: int
    cell: CellAddress


def boundary_set(sys: FractalSystem, M: int, J: int | None = None) -> list[BoundaryContact]:
    """Vertices of ``K<M>`` met by some other ``M``-cell in exactly that point."""
    J = M + 2 if J is None else J
    if J < M + 2:
        raise ValueError("probe envelope must satisfy J >= M + 2")
    key = ("boundary", M, J)
    if key in sys._cache:
        return sys._cache[key]
    cx = CellComplex(sys, M, J)
    base = cx.cell_vertices[0]
    shared = np.isin(cx.cell_vertices, base)
    found = {}
    for c in np.flatnonzero(shared.sum(axis=1) == 1):
        if c == 0:
            continue
        v = cx.cell_vertices[c][shared[c]][0]
        j = int(np.flatnonzero(base == v)[0])
        if j not in found:
            found[j] = BoundaryContact(sys.vertices(M)[j], j, cx.address(c))
    out = [found[j] for j in sorted(found)]
    sys._cache[key] = out
    return out


def delta(sys: FractalSystem, x, y, M: int, contacts=None) -> float:
    """``min_z |x - z| + |z - y|`` over the boundary contacts of ``K<M>``."""
    contacts = boundary_set(sys, M) if contacts is None else contacts
    if not contacts:
        raise EmptyBoundary(f"K<{M}> has no single-point boundary contacts")
    Z = np.array([c.vertex for c in contacts])
    x, y = np.asarray(x, float), np.asarray(y, float)
    return float((np.hypot(*(Z - x).T) + np.hypot(*(Z - y).T)).min())


# --------------------------------------------------------------------------
# fibers


class FiberTable:
    """Unit-scale (``M = 0``) data for all cells of ``K<D>``, nested order.

    ``shell[n]`` is ``-1`` for the base cell and otherwise the ``m`` with the
    cell inside ``K<m+1>`` but not ``K<m>``; ``contact[n]`` is the index of the
    base vertex shared with ``K<0>`` or ``-1``.
    """

    def __init__(self, sys: FractalSystem, D: int, previous: "FiberTable | None" = None):
        _check_cap(sys.N ** D)
        self.sys, self.D = sys, D
        shifts = level_shifts(sys, D) if D else np.zeros((0, sys.N), dtype=np.int64)
        if previous is not None and previous.D <= D:
            T, R, d0 = previous.translations, previous.rotations, previous.D
        else:
            T, R, d0 = np.zeros((1, 2)), np.zeros(1, dtype=np.int64), 0
        for d in range(d0 + 1, D + 1):
            s = sys.L ** d
            T = np.concatenate([T + s * sys.nu[i] for i in range(sys.N)])
            R = np.concatenate([(R + shifts[d - 1][i]) % sys.k for i in range(sys.N)])
        self.translations = T
        self.rotations = R
        n = np.arange(len(T))
        shell = np.full(len(T), -1, dtype=np.int64)
        for m in range(D):
            shell[(n >= sys.N ** m) & (n < sys.N ** (m + 1))] = m
        self.shell = shell
        base_keys = quantize(sys, sys.essential_fixed_points, 0)
        contact = np.full(len(T), -1, dtype=np.int64)
        for j, p in enumerate(sys.essential_fixed_points):
            keys = quantize(sys, T[:, None, :] + sys.essential_fixed_points[None], 0)
            hit = (keys == base_keys[j]).all(-1).any(-1)
            contact[hit & (contact < 0)] = j
        contact[0] = -1
        self.contact = contact

    def shell_slice(self, m: int) -> slice:
        N = self.sys.N
        return slice(N ** m, N ** (m + 1))


def fiber_table(sys: FractalSystem, D: int) -> FiberTable:
    cached = sys._cache.get("fiber_table")
    if cached is not None and cached.D >= D:
        return cached
    table = FiberTable(sys, D, previous=cached)
    sys._cache["fiber_table"] = table
    return table


def preimages(sys: FractalSystem, y, M: int, table: FiberTable, sl=slice(None)) -> np.ndarray:
    """Preimage of ``y`` in every cell of ``table[sl]`` at scale ``L**M``."""
    y = np.asarray(y, dtype=float)
    b = sys.center(M)
    Q = rotation_matrix(-np.arange(sys.k), sys.k)
    rotated = np.einsum("rij,j->ri", Q, y - b) + b
    return rotated[table.rotations[sl]] + (sys.L ** M) * table.translations[sl]


@dataclass(eq=False)
class FiberDecomposition:
    base_point: np.ndarray
    M: int
    m_max: int
    A_sets: list
    B_set: np.ndarray
    C_set: np.ndarray
    C_contacts: np.ndarray
    includes_base: bool = True

    def all_points(self) -> np.ndarray:
        return np.concatenate([self.base_point[None]] + self.A_sets)


def is_base_vertex(sys: FractalSystem, y, M: int) -> bool:
    d = np.hypot(*(sys.vertices(M) - np.asarray(y, float)).T)
    return bool((d < GEOM_TOL * sys.L ** M).any())


def fiber(sys: FractalSystem, lab: Labelling | None, y, M: int, m_max: int) -> FiberDecomposition:
    """Preimages of ``y`` under ``pi_M`` in ``K<M+m_max+1>``, split into shells.

    Raises
    ------
    VertexBase
        ``y`` is a vertex of ``K<M>``.
    """
    y = np.asarray(y, dtype=float)
    if is_base_vertex(sys, y, M):
        raise VertexBase(f"{tuple(float(v) for v in y)} is a vertex of K<{M}>")
    if not on_cell(sys, y, M):
        raise NotOnFractal(f"{tuple(float(v) for v in y)} is not in K<{M}>")
    D = m_max + 1
    table = fiber_table(sys, D)
    n = sys.N ** D
    rot = table.rotations[:n]
    if lab is not None:
        if lab.M != M or lab.J < M + D:
            raise OutsideEnvelope("labelling does not cover the fiber envelope")
        rot = lab.rotations[:n]
    pts = _preimages_with(sys, y, M, rot, table.translations[:n])
    A = [pts[table.shell_slice(m)] for m in range(D)]
    shell0 = slice(1, sys.N)
    touching = table.contact[shell0] >= 0
    C = pts[shell0][touching]
    Cz = sys.vertices(M)[table.contact[shell0][touching]]
    B = pts[shell0][~touching]
    return FiberDecomposition(y, M, m_max, A, B, C, Cz)


def _preimages_with(sys, y, M, rotations, translations):
    b = sys.center(M)
    Q = rotation_matrix(-np.arange(sys.k), sys.k)
    rotated = np.einsum("rij,j->ri", Q, y - b) + b
    return rotated[rotations] + (sys.L ** M) * translations
