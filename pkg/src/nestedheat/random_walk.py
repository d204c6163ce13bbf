"""Lattice random walks, folded walks and empirical densities.

The walk lives on the vertices of the level-``n`` cells of ``K<J>``; from a
vertex it jumps to any vertex sharing an ``n``-cell with it.  One step is
``L**(n d_w)`` units of process time.  Corners of ``K<J>`` through which the
unbounded fractal continues are absorbing: a walk that reaches one is
stopped and flagged.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .errors import AbsorbedAtEnvelope, InsufficientSamples, OutsideEnvelope
from .geometry import CellComplex, FractalSystem, complex_for, quantize
from .labelling import rotation_matrix, word_rotations

CHUNK = 8192
UNIFORM_CAVEAT = (
    "uniform nearest-neighbour weights; for fractals other than the gasket "
    "this is surrogate dynamics"
)


@dataclass(eq=False)
class WalkGraph:
    """Transition structure on the level-``n`` lattice of ``K<J>``."""

    sys: FractalSystem
    n: int
    J: int
    complex: CellComplex = field(repr=False)
    indptr: np.ndarray = field(repr=False)
    indices: np.ndarray = field(repr=False)
    probs: np.ndarray = field(repr=False)
    absorbing: np.ndarray = field(repr=False)
    caveat: str | None = None
    _pad: tuple | None = field(default=None, repr=False)

    @property
    def coords(self) -> np.ndarray:
        return self.complex.vertex_coords

    @property
    def n_vertices(self) -> int:
        return self.complex.n_vertices

    @property
    def time_step(self) -> float:
        return self.sys.L ** (self.n * self.sys.dims.d_w)

    def degree(self, v: int) -> int:
        return int(self.indptr[v + 1] - self.indptr[v])

    def neighbours(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def vertex(self, point) -> int:
        v = self.complex.vertex_index(point)
        if v is None:
            raise OutsideEnvelope(f"{tuple(float(v) for v in point)} is not a level {self.n} vertex of K<{self.J}>")
        return v

    def _padded(self):
        """Neighbour table and cumulative probabilities padded to the max degree."""
        if self._pad is None:
            deg = np.diff(self.indptr)
            width = int(deg.max())
            nb = np.zeros((self.n_vertices, width), dtype=np.int64)
            p = np.zeros((self.n_vertices, width))
            for j in range(width):
                has = deg > j
                pos = self.indptr[:-1][has] + j
                nb[has, j] = self.indices[pos]
                p[has, j] = self.probs[pos]
            cs = np.cumsum(p, axis=1)
            # the last real column and the padding can never be passed
            cs[np.arange(width)[None, :] >= deg[:, None] - 1] = 2.0
            self._pad = (nb, cs)
        return self._pad


def _is_gasket(sys: FractalSystem) -> bool:
    return sys.N == sys.k == 3 and sys.L == 2.0


def build_walk_graph(sys: FractalSystem, n: int, J: int, weights=None) -> WalkGraph:
    """Lattice walk graph on the level-``n`` vertices of ``K<J>``.

    Parameters
    ----------
    weights : callable, optional
        ``weights(graph_coords, v, neighbours) -> array`` of nonnegative
        weights, normalised per vertex.  Uniform when omitted.
    """
    if J < n:
        raise ValueError("envelope J must be >= n")
    cx = CellComplex(sys, n, J)
    k = sys.k
    a, b = np.meshgrid(np.arange(k), np.arange(k), indexing="ij")
    off = a != b
    rows = cx.cell_vertices[:, a[off]].ravel()
    cols = cx.cell_vertices[:, b[off]].ravel()
    adj = sparse.csr_matrix(
        (np.ones(len(rows)), (rows, cols)), shape=(cx.n_vertices, cx.n_vertices)
    )
    adj.sum_duplicates()
    adj.sort_indices()
    indptr, indices = adj.indptr.astype(np.int64), adj.indices.astype(np.int64)
    if weights is None:
        deg = np.diff(indptr)
        probs = np.repeat(1.0 / deg, deg)
        caveat = None if _is_gasket(sys) else UNIFORM_CAVEAT
    else:
        probs = np.empty(len(indices))
        for v in range(cx.n_vertices):
            sl = slice(indptr[v], indptr[v + 1])
            w = np.asarray(weights(cx.vertex_coords, v, indices[sl]), dtype=float)
            if (w < 0).any() or w.sum() <= 0:
                raise ValueError(f"bad weights at vertex {v}")
            probs[sl] = w / w.sum()
        caveat = "user-supplied weights"
    absorbing = np.zeros(cx.n_vertices, dtype=bool)
    outer = complex_for(sys, J, J + 1)
    for p in sys.vertices(J):
        v = outer.vertex_index(p)
        if outer.rank[v] > 1:
            absorbing[cx.vertex_index(p)] = True
    return WalkGraph(sys, n, J, cx, indptr, indices, probs, absorbing, caveat)


@dataclass(eq=False)
class Trajectory:
    """Vertex indices visited at steps ``0..len-1``."""

    graph: WalkGraph
    positions: np.ndarray
    absorbed: bool = False

    @property
    def start(self) -> int:
        return int(self.positions[0])

    @property
    def time_step(self) -> float:
        return self.graph.time_step

    def points(self) -> np.ndarray:
        return self.graph.coords[self.positions]


def _stream(seed: int, worker: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, worker])))


def _step(graph, v, rng):
    nb, cs = graph._padded()
    u = rng.random(len(v))
    j = (u[:, None] >= cs[v]).sum(axis=1)
    return nb[v, j]


def simulate(graph: WalkGraph, x0, steps: int, seed: int, strict: bool = False) -> Trajectory:
    """One walk of ``steps`` steps from ``x0`` (a point or vertex index).

    A walk reaching an absorbing corner is truncated there and flagged;
    with ``strict`` it raises :class:`AbsorbedAtEnvelope` instead.
    """
    v0 = x0 if isinstance(x0, (int, np.integer)) else graph.vertex(x0)
    rng = _stream(seed, 0)
    pos = np.empty(steps + 1, dtype=np.int64)
    pos[0] = v0
    v = np.array([v0])
    for s in range(1, steps + 1):
        if graph.absorbing[v[0]]:
            if strict:
                raise AbsorbedAtEnvelope(f"walk absorbed at step {s - 1}")
            return Trajectory(graph, pos[:s], absorbed=True)
        v = _step(graph, v, rng)
        pos[s] = v[0]
    return Trajectory(graph, pos, absorbed=bool(graph.absorbing[v[0]]))


@dataclass(eq=False)
class WalkEnsemble:
    """Positions of many independent walks at recorded step counts.

    ``positions[i, w]`` is the vertex of walk ``w`` after ``record[i]``
    steps; ``alive[i, w]`` is false once the walk has been absorbed.
    """

    graph: WalkGraph
    start: int
    record: np.ndarray
    positions: np.ndarray
    alive: np.ndarray
    seed: int

    @property
    def n_walks(self) -> int:
        return self.positions.shape[1]

    def discard_fraction(self, i: int = -1) -> float:
        return float(1.0 - self.alive[i].mean())

    def index_of_time(self, t: float) -> int:
        steps = t / self.graph.time_step
        i = int(np.argmin(np.abs(self.record - steps)))
        if not math.isclose(self.record[i], steps, rel_tol=1e-6, abs_tol=1e-6):
            raise ValueError(f"time {t} is not a recorded time")
        return i


def _run_chunk(graph, v0, record, n, seed, worker):
    rng = _stream(seed, worker)
    v = np.full(n, v0, dtype=np.int64)
    alive = np.ones(n, dtype=bool)
    out = np.empty((len(record), n), dtype=np.int64)
    live = np.empty((len(record), n), dtype=bool)
    s = 0
    for i, target in enumerate(record):
        while s < target:
            nxt = _step(graph, v, rng)
            v = np.where(alive, nxt, v)
            alive &= ~graph.absorbing[v]
            s += 1
        out[i], live[i] = v, alive
    return out, live


def simulate_many(graph: WalkGraph, x0, record, n_walks: int, seed: int,
                  jobs: int = 1, chunk: int = CHUNK) -> WalkEnsemble:
    """Many independent walks, recorded at the step counts in ``record``.

    Walks are split into fixed chunks, chunk ``c`` drawing from the Philox
    stream of ``(seed, c)``, so results do not depend on ``jobs``.
    """
    record = np.asarray(sorted(set(int(r) for r in record)), dtype=np.int64)
    v0 = x0 if isinstance(x0, (int, np.integer)) else graph.vertex(x0)
    sizes = [min(chunk, n_walks - c) for c in range(0, n_walks, chunk)]
    args = [(graph, v0, record, m, seed, w) for w, m in enumerate(sizes)]
    if jobs > 1:
        with ThreadPoolExecutor(jobs) as ex:
            parts = list(ex.map(lambda a: _run_chunk(*a), args))
    else:
        parts = [_run_chunk(*a) for a in args]
    pos = np.concatenate([p[0] for p in parts], axis=1)
    alive = np.concatenate([p[1] for p in parts], axis=1)
    return WalkEnsemble(graph, v0, record, pos, alive, seed)


# --------------------------------------------------------------------------
# folding


def fold_table(graph: WalkGraph, M: int, lab=None) -> np.ndarray:
    """Vertex index of the folded image of every lattice vertex."""
    sys, n = graph.sys, graph.n
    if M < n:
        raise ValueError("folding level must be >= lattice level")
    cx = graph.complex
    # one incident n-cell per vertex; its M-ancestor has the word tail
    first = np.full(cx.n_vertices, -1, dtype=np.int64)
    first[cx.cell_vertices[::-1].ravel()] = np.repeat(np.arange(cx.n_cells)[::-1], sys.k)
    tails = cx.words[first][:, M - n:]
    if lab is not None:
        if lab.M != M or lab.J < graph.J:
            raise OutsideEnvelope("labelling does not cover the walk envelope")
        # nested order: M-cell index from the word tail
        idx = np.zeros(len(tails), dtype=np.int64)
        for d in range(tails.shape[1]):
            idx += (tails[:, d].astype(np.int64) - 1) * sys.N ** d
        rot = lab.rotations[idx]
    else:
        rot = word_rotations(sys, tails)
    tau = np.zeros((len(tails), 2))
    for d in range(tails.shape[1]):
        tau += (sys.L ** (M + d + 1)) * sys.nu[tails[:, d] - 1]
    b = sys.center(M)
    Q = rotation_matrix(rot, sys.k)
    img = np.einsum("nij,nj->ni", Q, graph.coords - tau - b) + b
    keys = quantize(sys, img, n)
    lookup = {tuple(k): i for i, k in enumerate(cx.vertex_keys)}
    return np.array([lookup[tuple(k)] for k in keys], dtype=np.int64)


def fold_trajectory(sys: FractalSystem, lab, traj: Trajectory, M: int) -> Trajectory:
    """Positionwise folding onto ``K<M>``."""
    table = fold_table(traj.graph, M, lab)
    return Trajectory(traj.graph, table[traj.positions], traj.absorbed)


def fold_ensemble(ens: WalkEnsemble, M: int, lab=None) -> WalkEnsemble:
    table = fold_table(ens.graph, M, lab)
    return WalkEnsemble(ens.graph, int(table[ens.start]), ens.record, table[ens.positions],
                        ens.alive, ens.seed)


# --------------------------------------------------------------------------
# densities


@dataclass(eq=False)
class Histogram:
    """Per-bin density estimates; bins are level-``level`` cells."""

    level: int
    words: np.ndarray
    barycenters: np.ndarray
    counts: np.ndarray
    n: int
    discarded: int

    def bin_mass(self, sys) -> float:
        return float(sys.N) ** self.level

    def probabilities(self) -> np.ndarray:
        return self.counts / self.n

    def density(self, sys) -> np.ndarray:
        return self.probabilities() / self.bin_mass(sys)

    def standard_error(self, sys) -> np.ndarray:
        p = self.probabilities()
        return np.sqrt(p * (1 - p) / self.n) / self.bin_mass(sys)


def _bin_incidence(graph: WalkGraph, level: int, within: int | None):
    """Sparse vertex-to-bin weights splitting each vertex equally among its bins."""
    sys, cx = graph.sys, graph.complex
    if not graph.n <= level <= graph.J:
        raise ValueError("bin level must lie between the lattice level and the envelope")
    group = sys.N ** (level - graph.n)
    n_bins = cx.n_cells // group
    if within is not None:
        n_bins = min(n_bins, sys.N ** (within - level))
    rows = cx.cell_vertices.ravel()
    cols = np.repeat(np.arange(cx.n_cells) // group, sys.k)
    keep = cols < n_bins
    inc = sparse.csr_matrix(
        (np.ones(keep.sum()), (rows[keep], cols[keep])), shape=(cx.n_vertices, n_bins)
    )
    inc.data[:] = 1.0
    deg = np.asarray(inc.sum(axis=1)).ravel()
    scale = np.divide(1.0, deg, out=np.zeros_like(deg), where=deg > 0)
    return sparse.diags(scale) @ inc, n_bins


def empirical_density(ens: WalkEnsemble, t: float, bin_level: int, M: int | None = None,
                      min_samples: int = 100) -> Histogram:
    """Histogram of positions at time ``t`` over level-``bin_level`` cells.

    With ``M`` given only bins inside ``K<M>`` are used (for folded
    ensembles).  Absorbed walks are discarded and counted.
    """
    i = ens.index_of_time(t)
    alive = ens.alive[i]
    n = int(alive.sum())
    if n < min_samples:
        raise InsufficientSamples(f"{n} surviving walks, need {min_samples}")
    W, n_bins = _bin_incidence(ens.graph, bin_level, M)
    occ = np.bincount(ens.positions[i][alive], minlength=ens.graph.n_vertices).astype(float)
    counts = W.T @ occ
    cx = ens.graph.complex
    group = ens.graph.sys.N ** (bin_level - ens.graph.n)
    words = cx.words[::group][:n_bins, bin_level - ens.graph.n:]
    # the first n-cell of each bin shares the bin's translation
    bary = cx.translations[::group][:n_bins] + (ens.graph.sys.L ** bin_level) * ens.graph.sys.barycenter
    return Histogram(bin_level, words, bary, counts, n, ens.n_walks - n)


def pushforward(hist: Histogram, sys: FractalSystem, M: int, lab=None) -> Histogram:
    """Fold a free-walk histogram onto the bins of ``K<M>``."""
    l = hist.level
    if l > M:
        raise ValueError("bins must be no coarser than the folding level")
    tails = hist.words[:, M - l:]
    if lab is not None:
        idx = np.zeros(len(tails), dtype=np.int64)
        for d in range(tails.shape[1]):
            idx += (tails[:, d].astype(np.int64) - 1) * sys.N ** d
        rot = lab.rotations[idx]
    else:
        rot = word_rotations(sys, tails)
    tau = np.zeros((len(tails), 2))
    for d in range(tails.shape[1]):
        tau += (sys.L ** (M + d + 1)) * sys.nu[tails[:, d] - 1]
    b = sys.center(M)
    img = np.einsum("nij,nj->ni", rotation_matrix(rot, sys.k), hist.barycenters - tau - b) + b
    n_target = sys.N ** (M - l)
    target = hist.barycenters[:n_target]
    lookup = {tuple(k): i for i, k in enumerate(quantize(sys, target, l))}
    dest = np.array([lookup[tuple(k)] for k in quantize(sys, img, l)])
    counts = np.bincount(dest, weights=hist.counts, minlength=n_target)
    return Histogram(l, hist.words[:n_target], target, counts, hist.n, hist.discarded)


class EmpiricalKernel:
    """Monte Carlo stand-in for the free density from one starting vertex."""

    def __init__(self, ens: WalkEnsemble, bin_level: int):
        self.ens, self.bin_level = ens, bin_level

    def estimate(self, t, x, y):
        g = self.ens.graph
        if g.vertex(x) != self.ens.start:
            raise ValueError("store was simulated from a different start point")
        h = empirical_density(self.ens, float(t), self.bin_level)
        W, _ = _bin_incidence(g, self.bin_level, None)
        row = W[g.vertex(y)].toarray().ravel()
        dens, se = h.density(g.sys), h.standard_error(g.sys)
        return float(row @ dens), float(math.sqrt(float((row ** 2) @ se ** 2)))


# --------------------------------------------------------------------------
# statistics


def on_diagonal_slope(graph: WalkGraph, x0, steps, n_walks: int, seed: int,
                      bin_level: int | None = None, jobs: int = 1):
    """Least-squares slope of ``log g(t, x0, x0)`` against ``log t``.

    Returns ``(slope, times, estimates, standard_errors)``.
    """
    ens = simulate_many(graph, x0, steps, n_walks, seed, jobs=jobs)
    level = graph.n if bin_level is None else bin_level
    W, _ = _bin_incidence(graph, level, None)
    row = W[ens.start].toarray().ravel()
    times, est, err = [], [], []
    for s in ens.record:
        t = s * graph.time_step
        h = empirical_density(ens, t, level)
        times.append(t)
        est.append(float(row @ h.density(graph.sys)))
        err.append(float(math.sqrt((row ** 2) @ h.standard_error(graph.sys) ** 2)))
    slope = np.polyfit(np.log(times), np.log(est), 1)[0]
    return float(slope), np.array(times), np.array(est), np.array(err)


def compare_histograms(a: Histogram, b: Histogram, sys: FractalSystem, min_hits: int = 100):
    """Largest ``|a - b| / sqrt(se_a**2 + se_b**2)`` over bins with enough hits."""
    da, db = a.density(sys), b.density(sys)
    se = np.sqrt(a.standard_error(sys) ** 2 + b.standard_error(sys) ** 2)
    use = (a.counts >= min_hits) & (b.counts >= min_hits) & (se > 0)
    z = np.abs(da - db)[use] / se[use]
    return float(z.max()) if len(z) else 0.0, int(use.sum())
