"""Graph metric on ``M``-cells and empirical geometric constants.

``d_M(x, y)`` is 0 for ``x == y`` and otherwise one more than the shortest
path, in the cell adjacency graph, between a cell holding ``x`` and a cell
holding ``y``.  Two cells are adjacent when they share a vertex.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csgraph

from .errors import NotOnFractal, OutsideEnvelope
from .geometry import (
    GEOM_TOL,
    CellComplex,
    FractalSystem,
    complex_for,
    containing_cells,
    enclosing_level,
    sample_points,
)

ALL_PAIRS_LIMIT = 4000
# largest number of fine cells whose vertex pairs are scanned exhaustively
STRUCTURED_LIMIT = 1000


class CellGraph:
    """Adjacency of the ``M``-cells of ``K<J>``; immutable once built."""

    def __init__(self, sys: FractalSystem, M: int, J: int):
        self.sys, self.M, self.J = sys, M, J
        self.complex: CellComplex = complex_for(sys, M, J)
        self.adjacency = self.complex.adjacency()
        self._all = None
        self._rows = {}

    @property
    def n_cells(self) -> int:
        return self.complex.n_cells

    def edges(self) -> np.ndarray:
        a = self.adjacency.tocoo()
        return np.stack([a.row, a.col], axis=1)

    def _dist_rows(self, sources) -> np.ndarray:
        if self.n_cells <= ALL_PAIRS_LIMIT:
            if self._all is None:
                self._all = csgraph.shortest_path(self.adjacency, unweighted=True)
            return self._all[sources]
        missing = [s for s in sources if s not in self._rows]
        if missing:
            rows = csgraph.shortest_path(self.adjacency, unweighted=True, indices=missing)
            for s, r in zip(missing, rows):
                self._rows[s] = r
        return np.array([self._rows[s] for s in sources])

    def cells_of(self, x) -> list[int]:
        try:
            cells = containing_cells(self.sys, x, self.M, self.J)
        except NotOnFractal as exc:
            raise OutsideEnvelope(f"{tuple(float(v) for v in x)} is outside K<{self.J}>") from exc
        return [self.complex.index_of(a.word) for a in cells]

    def chain_length(self, cells_x, cells_y) -> int:
        """``1 + min`` graph distance between two cell sets."""
        D = self._dist_rows(list(cells_x))[:, list(cells_y)]
        return int(D.min()) + 1

    def distance(self, x, y) -> int:
        x, y = np.asarray(x, float), np.asarray(y, float)
        if math.hypot(*(x - y)) <= GEOM_TOL * self.sys.L ** self.M:
            return 0
        return self.chain_length(self.cells_of(x), self.cells_of(y))


def d_M(sys: FractalSystem, x, y, M: int, J: int | None = None, graph: CellGraph | None = None) -> int:
    """Graph distance ``d_M(x, y)``.

    With ``J`` omitted the envelope is one level above the smallest complex
    holding both points, which is enough for every shortest chain.
    """
    if graph is None:
        if J is None:
            J = max(enclosing_level(sys, x, M), enclosing_level(sys, y, M)) + 1
        graph = CellGraph(sys, M, J)
    return graph.distance(x, y)


# --------------------------------------------------------------------------
# constants


@dataclass
class GrowthConstants:
    """Fitted constants of ``c17 |x-y| / L**M <= d_M <= max(2, c18 |x-y|**d_f / N**M)``."""

    c17_hat: float
    c18_hat: float
    per_level: dict = field(default_factory=dict)
    sample: str = ""
    holdout_ok: bool = True
    holdout_violations: int = 0

    def drift(self) -> tuple[float, float]:
        a = [v[0] for v in self.per_level.values()]
        b = [v[1] for v in self.per_level.values()]
        return max(a) / min(a), max(b) / min(b)


def _lattice_pairs(sys, M, span, refine):
    """All pairs of level ``M-refine`` lattice vertices inside ``K<M+span>``.

    Returns coordinates, a padded table of the ``M``-cells holding each vertex
    and the pair indices.
    """
    fine = complex_for(sys, M - refine, M + span)
    vc = fine.vertex_cells().tocsr()
    up = sys.N ** refine
    sets = [np.unique(vc.indices[vc.indptr[v]:vc.indptr[v + 1]] // up) for v in range(fine.n_vertices)]
    width = max(len(c) for c in sets)
    cells = np.array([np.resize(c, width) for c in sets])
    i, j = np.triu_indices(fine.n_vertices, k=1)
    return fine.vertex_coords, cells, i, j


def _pair_table(sys, M, span, n_random, rng):
    """Distances for structured lattice pairs plus random pairs in ``K<M+span>``."""
    graph = CellGraph(sys, M, M + span + 1)
    X = np.empty((0, 2))
    Y = np.empty((0, 2))
    d = np.empty(0, dtype=np.int64)
    if graph.n_cells <= ALL_PAIRS_LIMIT:
        refine = max([1] + [r for r in range(1, 5) if sys.N ** (span + r) <= STRUCTURED_LIMIT])
        coords, cells, i, j = _lattice_pairs(sys, M, span, refine)
        D = graph._dist_rows(list(range(graph.n_cells)))
        best = np.full(len(i), np.inf)
        for a in range(cells.shape[1]):
            for b in range(cells.shape[1]):
                best = np.minimum(best, D[cells[i, a], cells[j, b]])
        X, Y, d = coords[i], coords[j], best.astype(np.int64) + 1
    rows = _random_pairs(sys, graph, M, span, n_random, rng)
    if rows:
        X = np.concatenate([X, np.array([r[0] for r in rows])])
        Y = np.concatenate([Y, np.array([r[1] for r in rows])])
        d = np.concatenate([d, np.array([r[2] for r in rows])])
    return X, Y, d


def _random_pairs(sys, graph, M, span, n, rng):
    if n == 0:
        return []
    P = sample_points(sys, M + span, 2 * n, rng, exclude_vertices=False)
    cells = [graph.cells_of(p) for p in P]
    out = []
    for a in range(n):
        x, y = P[2 * a], P[2 * a + 1]
        if math.hypot(*(x - y)) <= GEOM_TOL * sys.L ** M:
            continue
        out.append((x, y, graph.chain_length(cells[2 * a], cells[2 * a + 1])))
    return out


def _ratios(sys, M, X, Y, d):
    r = np.hypot(*(X - Y).T)
    keep = r > GEOM_TOL * sys.L ** M
    r, d = r[keep], d[keep]
    low = d * sys.L ** M / r
    far = d > 2
    high = d[far] * sys.N ** M / r[far] ** sys.dims.d_f
    return r, d, low, high


def growth_constants(
    sys: FractalSystem,
    M_range=range(-2, 3),
    samples: int = 1000,
    seed: int = 0,
    span: int = 2,
) -> GrowthConstants:
    """Fit ``c17``, ``c18`` per level and re-verify them on a held-out sample.

    The fitting sample per level holds every pair of fine lattice vertices in
    ``K<M+span>`` (down to level ``M-4``, the resolution of the random
    samples, when the lattice is small enough) plus ``samples`` random pairs; the held-out
    sample is another ``samples`` random pairs from an independent stream.
    """
    ss = np.random.SeedSequence(seed)
    per_level, held = {}, []
    for M, child in zip(M_range, ss.spawn(len(M_range))):
        fit_rng, hold_rng = (np.random.default_rng(s) for s in child.spawn(2))
        X, Y, d = _pair_table(sys, M, span, samples, fit_rng)
        _, _, low, high = _ratios(sys, M, X, Y, d)
        per_level[M] = (float(low.min()), float(high.max()) if len(high) else float("nan"))
        graph = CellGraph(sys, M, M + span + 1)
        held.append((M, _random_pairs(sys, graph, M, span, samples, hold_rng)))
    c17 = min(v[0] for v in per_level.values())
    c18 = max(v[1] for v in per_level.values())
    bad = 0
    for M, rows in held:
        for x, y, d in rows:
            r = math.hypot(*(x - y))
            lo = c17 * r / sys.L ** M
            hi = max(2.0, c18 * r ** sys.dims.d_f / sys.N ** M)
            if not (lo <= d * (1 + 1e-12) and d <= hi * (1 + 1e-12)):
                bad += 1
    desc = (
        f"levels {list(M_range)}; fine lattice pairs in K<M+{span}> plus "
        f"{samples} random pairs per level (fit) and {samples} held-out pairs; seed {seed}"
    )
    return GrowthConstants(c17, c18, per_level, desc, bad == 0, bad)


def separation_constant(sys: FractalSystem, m: int = 0, J: int | None = None) -> float:
    """Smallest distance between vertex sets of disjoint ``m``-cells of ``K<J>``, over ``L**m``."""
    J = m + 2 if J is None else J
    if J < m + 2:
        raise ValueError("envelope must satisfy J >= m + 2")
    cx = complex_for(sys, m, J)
    adj = cx.adjacency().tocsr()
    vc = cx.vertex_cells().tocsc()
    coords = cx.vertex_coords
    best = math.inf
    for a in range(cx.n_cells):
        near = np.zeros(cx.n_cells, dtype=bool)
        near[adj.indices[adj.indptr[a]:adj.indptr[a + 1]]] = True
        near[a] = True
        far_cells = np.flatnonzero(~near)
        if not len(far_cells):
            continue
        far_v = np.unique(vc[:, far_cells].tocoo().row)
        own = coords[cx.cell_vertices[a]]
        dist = np.sqrt(((own[:, None, :] - coords[far_v][None]) ** 2).sum(-1))
        best = min(best, float(dist.min()))
    return best / sys.L ** m


def kumagai_by_level(sys: FractalSystem, M_range=range(-1, 2), samples: int = 1000,
                     seed: int = 0, span: int = 2) -> dict:
    """Largest ``d_M(x, y)`` over sampled pairs with ``|x - y| <= L**M``, per level."""
    ss = np.random.SeedSequence(seed)
    out = {}
    for M, child in zip(M_range, ss.spawn(len(M_range))):
        X, Y, d = _pair_table(sys, M, span, samples, np.random.default_rng(child))
        r = np.hypot(*(X - Y).T)
        close = r <= sys.L ** M * (1 + 1e-12)
        out[M] = int(d[close].max())
    return out


def kumagai_n(sys: FractalSystem, M_range=range(-1, 2), samples: int = 1000, seed: int = 0) -> int:
    return max(kumagai_by_level(sys, M_range, samples, seed).values())


def chain_growth(sys: FractalSystem, levels: int = 5) -> np.ndarray:
    """Length of the shortest ``0``-cell chain between corners 0 and 1 of ``K<n>``.

    A diagnostic for the chemical exponent: the chain grows like
    ``L**(n * d_w / d_J)``.
    """
    out = []
    for n in range(1, levels + 1):
        cx = complex_for(sys, 0, n)
        g = CellGraph(sys, 0, n)
        vc = cx.vertex_cells().tocsr()
        ends = []
        for p in (sys.L ** n) * sys.essential_fixed_points[:2]:
            v = cx.vertex_index(p)
            ends.append(vc.indices[vc.indptr[v]:vc.indptr[v + 1]])
        out.append(g.chain_length(*ends))
    return np.array(out)
