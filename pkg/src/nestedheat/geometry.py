"""Planar simple nested fractals: similitude systems, cells and vertex lattices.

A system is generated by ``N`` similitudes ``x -> U x / L + nu_i`` sharing the
scale ``L`` and the isometry ``U``.  The level-``M`` cells of the unbounded
fractal are the translates

    K<M> + sum_{j=M+1}^{J} L**j * nu[i_j]

and are addressed by the word ``(i_{M+1}, ..., i_J)`` with 1-based letters.
Because ``nu_1 = 0`` a word padded with trailing ``1`` letters denotes the same
cell, so the cells inside ``K<J>`` are exactly the words of length ``J - M``.

Vertices are identified through quantized coordinates: two points at lattice
level ``m`` share a :class:`VertexId` when they round to the same multiple of
``QUANT * L**m``.
"""

from __future__ import annotations

import itertools
import json
import math
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from .errors import (
    BadAddress,
    BadSpec,
    EnvelopeTooLarge,
    NotConnected,
    NotNested,
    NotOnFractal,
    TooFewEssential,
)

QUANT = 1e-6
DEFAULT_CAP = 10**7
ORTHO_TOL = 1e-12
GEOM_TOL = 1e-9


def enumeration_cap() -> int:
    """Cell-count cap; the ``NESTEDHEAT_CAP`` environment variable overrides it."""
    value = os.environ.get("NESTEDHEAT_CAP")
    return int(value) if value else DEFAULT_CAP


def _check_cap(count: int, cap: int | None = None) -> None:
    cap = enumeration_cap() if cap is None else cap
    if count > cap:
        raise EnvelopeTooLarge(f"{count} cells requested, cap is {cap}")


@dataclass(frozen=True, eq=False)
class Similitude:
    scale_factor: float
    isometry: np.ndarray
    translation: np.ndarray

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self.scale_factor * (x @ self.isometry.T) + self.translation


@dataclass(frozen=True)
class DimensionSet:
    d_f: float
    d_w: float
    d_s: float
    d_J: float

    @classmethod
    def from_inputs(cls, N: int, L: float, d_w: float, d_J: float) -> "DimensionSet":
        if d_J <= 1:
            raise BadSpec(f"chemical exponent must exceed 1, got {d_J}")
        if d_w <= 0:
            raise BadSpec(f"walk dimension must be positive, got {d_w}")
        d_f = math.log(N) / math.log(L)
        return cls(d_f=d_f, d_w=d_w, d_s=2.0 * d_f / d_w, d_J=d_J)


@dataclass(frozen=True, eq=False)
class FractalSystem:
    """A validated planar simple nested fractal.

    ``essential_fixed_points`` is ordered counterclockwise around the
    barycenter, starting from the lexicographically smallest point; position
    ``j`` in this order is the vertex index used by every cell.
    """

    similitudes: tuple
    L: float
    N: int
    fixed_points: np.ndarray
    essential_fixed_points: np.ndarray
    k: int
    dims: DimensionSet
    barycenter: np.ndarray
    radius: float
    diameter: float
    name: str = "fractal"
    osc_trusted: bool = True
    spec: dict = field(default_factory=dict, repr=False)
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def nu(self) -> np.ndarray:
        return np.array([s.translation for s in self.similitudes])

    def vertices(self, M: int) -> np.ndarray:
        """Vertices of the base complex ``K<M>``."""
        return (self.L ** M) * self.essential_fixed_points

    def center(self, M: int) -> np.ndarray:
        return (self.L ** M) * self.barycenter

    def spec_hash(self) -> str:
        import hashlib

        blob = json.dumps(self.spec, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


class VertexId(NamedTuple):
    level: int
    ix: int
    iy: int


def vertex_key(sys: FractalSystem, point, level: int) -> VertexId:
    scale = QUANT * sys.L ** level
    return VertexId(level, int(round(point[0] / scale)), int(round(point[1] / scale)))


def quantize(sys: FractalSystem, points: np.ndarray, level: int) -> np.ndarray:
    return np.rint(np.asarray(points) / (QUANT * sys.L ** level)).astype(np.int64)


@dataclass(frozen=True)
class CellAddress:
    level: int
    word: tuple = ()

    @property
    def J(self) -> int:
        return self.level + len(self.word)

    @property
    def is_base(self) -> bool:
        return all(i == 1 for i in self.word)

    def canonical(self) -> "CellAddress":
        word = list(self.word)
        while word and word[-1] == 1:
            word.pop()
        return CellAddress(self.level, tuple(word))

    def padded(self, J: int) -> "CellAddress":
        if J < self.J:
            return self.canonical().padded(J) if self.canonical().J <= J else self
        return CellAddress(self.level, self.word + (1,) * (J - self.J))


@dataclass(frozen=True, eq=False)
class MComplex:
    address: CellAddress
    translation: np.ndarray
    vertices: np.ndarray

    @property
    def level(self) -> int:
        return self.address.level

    @property
    def diameter(self) -> float:
        diff = self.vertices[:, None, :] - self.vertices[None, :, :]
        return float(np.sqrt((diff ** 2).sum(-1)).max())


class LatticeVertex(NamedTuple):
    id: VertexId
    point: np.ndarray
    rank: int


# --------------------------------------------------------------------------
# construction and validation


def fixed_point(s: Similitude, L: float | None = None) -> np.ndarray:
    """Unique fixed point ``(I - U/L)^{-1} nu`` of a contracting similitude."""
    r = s.scale_factor if L is None else 1.0 / L
    A = np.eye(2) - r * s.isometry
    return np.linalg.solve(A, s.translation)


def isometry_matrix(angle: float = 0.0, reflect: bool = False) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    rot = np.array([[c, -s], [s, c]])
    if reflect:
        rot = rot @ np.array([[1.0, 0.0], [0.0, -1.0]])
    return rot


def _same_point(a, b, tol=GEOM_TOL) -> bool:
    return float(np.hypot(*(np.asarray(a) - np.asarray(b)))) < tol


def _point_set_equal(A: np.ndarray, B: np.ndarray, tol=GEOM_TOL) -> bool:
    if len(A) != len(B):
        return False
    d = np.sqrt(((A[:, None, :] - B[None, :, :]) ** 2).sum(-1))
    return bool((d.min(axis=1) < tol).all() and (d.min(axis=0) < tol).all())


def _order_polygon(points: np.ndarray, center: np.ndarray) -> np.ndarray:
    ang = np.arctan2(points[:, 1] - center[1], points[:, 0] - center[0])
    ccw = points[np.argsort(ang, kind="stable")]
    rounded = np.round(ccw, 9)
    start = min(range(len(ccw)), key=lambda i: (rounded[i, 0], rounded[i, 1]))
    return np.roll(ccw, -start, axis=0)


def build_system(
    nu: Sequence[Sequence[float]],
    L: float,
    d_w: float,
    d_J: float,
    isometry: np.ndarray | None = None,
    name: str = "fractal",
    osc_trusted: bool = True,
    spec: dict | None = None,
) -> FractalSystem:
    """Build and validate a simple nested fractal from its translations.

    Parameters
    ----------
    nu : sequence of points
        Translations ``nu_1, ..., nu_N``; ``nu_1`` must be the origin.
    L : float
        Common scale, ``L > 1``.
    d_w, d_J : float
        Walk dimension and chemical exponent (configuration inputs).
    isometry : (2, 2) array, optional
        Common orthogonal part ``U``; identity by default.

    Raises
    ------
    BadSpec, TooFewEssential, NotNested, NotConnected
    """
    nu = np.asarray(nu, dtype=float)
    if nu.ndim != 2 or nu.shape[1] != 2:
        raise BadSpec("nu must be a list of planar points")
    N = len(nu)
    if N < 2:
        raise TooFewEssential(f"need at least two similitudes, got {N}")
    if not L > 1:
        raise BadSpec(f"scale L must exceed 1, got {L}")
    if not _same_point(nu[0], (0.0, 0.0), 1e-15):
        raise BadSpec("nu_1 must be the origin")
    U = np.eye(2) if isometry is None else np.asarray(isometry, dtype=float)
    if U.shape != (2, 2) or not np.allclose(U @ U.T, np.eye(2), atol=ORTHO_TOL, rtol=0):
        raise BadSpec("isometry part is not orthogonal")
    if len({tuple(np.round(v, 12)) for v in nu}) != N:
        raise NotNested("two similitudes share a translation")
    sims = tuple(Similitude(1.0 / L, U, v.copy()) for v in nu)

    fixed = np.array([fixed_point(s) for s in sims])
    essential = []
    for a in range(N):
        hit = False
        for b in range(N):
            for i in range(N):
                for j in range(N):
                    if i != j and _same_point(sims[i](fixed[a]), sims[j](fixed[b])):
                        hit = True
                        break
                if hit:
                    break
            if hit:
                break
        if hit:
            essential.append(a)
    k = len(essential)
    if k < 2:
        raise TooFewEssential(f"only {k} essential fixed points")

    V0 = fixed[essential]
    bary = V0.mean(axis=0)
    V0 = _order_polygon(V0, bary)
    radii = np.hypot(*(V0 - bary).T)
    sides = np.hypot(*(np.roll(V0, -1, axis=0) - V0).T)
    if k > 2 and (np.ptp(radii) > 1e-9 * radii.max() or np.ptp(sides) > 1e-9 * sides.max()):
        raise BadSpec("essential fixed points do not form a regular polygon")
    if not _point_set_equal(V0 @ U.T, V0):
        raise BadSpec("isometry part must map the essential vertex set onto itself")

    radius = float(np.hypot(*(fixed - bary).T).max())
    diff = V0[:, None, :] - V0[None, :, :]
    diameter = float(np.sqrt((diff ** 2).sum(-1)).max())
    sys = FractalSystem(
        similitudes=sims,
        L=float(L),
        N=N,
        fixed_points=fixed,
        essential_fixed_points=V0,
        k=k,
        dims=DimensionSet.from_inputs(N, L, d_w, d_J),
        barycenter=bary,
        radius=radius,
        diameter=diameter,
        name=name,
        osc_trusted=osc_trusted,
        spec=dict(spec or {}),
    )
    _check_symmetry(sys)
    _check_connectivity(sys)
    _check_nesting(sys)
    return sys


def _copies(sys: FractalSystem) -> list[np.ndarray]:
    """Vertex sets ``Psi_i(V_0)`` of the level -1 copies."""
    return [s(sys.essential_fixed_points) for s in sys.similitudes]


def _check_symmetry(sys: FractalSystem) -> None:
    # indices range over all N similitudes (the printed quantifier says 1..M)
    copies = _copies(sys)
    V0 = sys.essential_fixed_points
    for a, b in itertools.combinations(range(sys.k), 2):
        x, y = V0[a], V0[b]
        n = (y - x) / np.hypot(*(y - x))
        mid = 0.5 * (x + y)
        for C in copies:
            refl = C - 2.0 * np.outer((C - mid) @ n, n)
            if not any(_point_set_equal(refl, D) for D in copies):
                raise BadSpec(f"symmetry fails for the bisector of vertices {a} and {b}")


def _check_connectivity(sys: FractalSystem) -> None:
    copies = _copies(sys)
    pts = np.concatenate(copies)
    keys = quantize(sys, pts, -1)
    _, inv = np.unique(keys, axis=0, return_inverse=True)
    inv = inv.ravel()
    rows, cols = [], []
    for i in range(sys.N):
        ids = inv[i * sys.k:(i + 1) * sys.k]
        for a, b in itertools.combinations(ids, 2):
            rows.append(a)
            cols.append(b)
    n = inv.max() + 1
    g = sparse.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    ncomp, _ = connected_components(g, directed=False)
    if ncomp != 1:
        raise NotConnected(f"level -1 vertex graph has {ncomp} components")


def _check_nesting(sys: FractalSystem, depth: int = 2) -> None:
    # sub-cells of different copies may only meet at points shared by the copies
    cx = CellComplex(sys, -1 - depth, 0)
    copy_of_cell = cx.words[:, -1] - 1
    allowed = set()
    copies = _copies(sys)
    for i, j in itertools.combinations(range(sys.N), 2):
        for p in copies[i]:
            for q in copies[j]:
                if _same_point(p, q):
                    allowed.add(tuple(quantize(sys, p, -1 - depth)))
    owners: dict[int, set] = {}
    for c, vs in enumerate(cx.cell_vertices):
        for v in vs:
            owners.setdefault(int(v), set()).add(int(copy_of_cell[c]))
    for v, own in owners.items():
        if len(own) > 1 and tuple(cx.vertex_keys[v]) not in allowed:
            raise NotNested(f"copies {sorted(own)} meet at {cx.vertex_coords[v]}")


# --------------------------------------------------------------------------
# spec files


def load_spec(source) -> FractalSystem:
    """Load a JSON spec from a path, a dict, or a bundled name.

    Bundled names are ``"gasket"``, ``"snowflake"`` and ``"pentagasket"``.
    """
    if isinstance(source, dict):
        spec = source
    else:
        text = None
        path = Path(source)
        if path.exists():
            text = path.read_text()
        else:
            name = str(source)
            if not name.endswith(".json"):
                name += ".json"
            bundled = resources.files("nestedheat.data").joinpath(Path(name).name)
            if bundled.is_file():
                text = bundled.read_text()
        if text is None:
            raise FileNotFoundError(f"spec file not found: {source}")
        spec = json.loads(text)
    iso = spec.get("isometry", {})
    U = isometry_matrix(iso.get("angle", 0.0), iso.get("reflect", False))
    return build_system(
        spec["nu"],
        spec["L"],
        spec["d_w"],
        spec["d_J"],
        isometry=U,
        name=spec.get("name", "fractal"),
        osc_trusted=spec.get("osc_trusted", True),
        spec=spec,
    )


def gasket() -> FractalSystem:
    return load_spec("gasket")


def snowflake() -> FractalSystem:
    return load_spec("snowflake")


# --------------------------------------------------------------------------
# cells


def translation_of(sys: FractalSystem, address: CellAddress) -> np.ndarray:
    t = np.zeros(2)
    for d, i in enumerate(address.word, start=1):
        if not 1 <= i <= sys.N:
            raise BadAddress(f"letter {i} outside 1..{sys.N}")
        t = t + (sys.L ** (address.level + d)) * sys.similitudes[i - 1].translation
    return t


def cell_from_address(sys: FractalSystem, address: CellAddress) -> MComplex:
    t = translation_of(sys, address)
    return MComplex(address, t, sys.vertices(address.level) + t)


def address_from_translation(sys: FractalSystem, translation, M: int, J: int) -> CellAddress:
    """Recover the word of the ``M``-cell with the given translation.

    Digits are extracted from the coarsest level down, pruning candidates
    whose remainder cannot be produced by the finer levels.
    """
    nu = sys.nu
    nmax = float(np.hypot(*nu.T).max())
    D = J - M
    # reach[d]: largest norm of a sum over levels M+1..M+d
    reach = [0.0]
    for d in range(1, D + 1):
        reach.append(reach[-1] + nmax * sys.L ** (M + d))
    tol = GEOM_TOL * sys.L ** J
    target = np.asarray(translation, dtype=float)

    def search(rem, d):
        if d == 0:
            return () if np.hypot(*rem) < tol else None
        s = sys.L ** (M + d)
        for i in range(sys.N):
            r = rem - s * nu[i]
            if np.hypot(*r) <= reach[d - 1] + tol:
                tail = search(r, d - 1)
                if tail is not None:
                    return tail + (i + 1,)
        return None

    word = search(target, D)
    if word is None:
        raise BadAddress(f"translation {target} is not an {M}-cell inside K<{J}>")
    return CellAddress(M, word)


def _nested_words(N: int, D: int) -> np.ndarray:
    """All words of length D; the first letter varies fastest.

    With this ordering the cells of ``K<M+m>`` are the first ``N**m`` rows.
    """
    n = np.arange(N ** D, dtype=np.int64)
    out = np.empty((N ** D, D), dtype=np.int16)
    for d in range(D):
        out[:, d] = (n // N ** d) % N + 1
    return out


def _nested_translations(sys: FractalSystem, M: int, D: int) -> np.ndarray:
    T = np.zeros((1, 2))
    nu = sys.nu
    for d in range(1, D + 1):
        s = sys.L ** (M + d)
        T = np.concatenate([T + s * nu[i] for i in range(sys.N)])
    return T


class CellComplex:
    """Array view of every ``M``-cell inside ``K<J>``.

    Cells are stored in nested order (see :func:`_nested_words`).  Vertex
    ``j`` of a cell is ``L**M * V0[j] + translation``.
    """

    def __init__(self, sys: FractalSystem, M: int, J: int, cap: int | None = None):
        if J < M:
            raise ValueError("envelope J must be >= M")
        D = J - M
        _check_cap(sys.N ** D, cap)
        self.sys, self.M, self.J, self.D = sys, M, J, D
        self.words = _nested_words(sys.N, D)
        self.translations = _nested_translations(sys, M, D)
        pts = self.translations[:, None, :] + sys.vertices(M)[None, :, :]
        keys = quantize(sys, pts.reshape(-1, 2), M)
        uniq, first, inv = np.unique(keys, axis=0, return_index=True, return_inverse=True)
        self.vertex_keys = uniq
        self.vertex_coords = pts.reshape(-1, 2)[first]
        self.cell_vertices = inv.reshape(-1, sys.k)
        self.rank = np.bincount(inv.ravel(), minlength=len(uniq))
        self._key_index = None
        self._adj = None
        self._vc = None

    @property
    def n_cells(self) -> int:
        return len(self.translations)

    @property
    def n_vertices(self) -> int:
        return len(self.vertex_keys)

    def index_of(self, word: Sequence[int]) -> int:
        word = tuple(word) + (1,) * (self.D - len(word))
        if len(word) != self.D:
            word = CellAddress(self.M, tuple(word)).canonical().padded(self.J).word
            if len(word) != self.D:
                raise BadAddress(f"word {word} does not fit in K<{self.J}>")
        n = 0
        for d, i in enumerate(word):
            if not 1 <= i <= self.sys.N:
                raise BadAddress(f"letter {i} outside 1..{self.sys.N}")
            n += (i - 1) * self.sys.N ** d
        return n

    def address(self, n: int) -> CellAddress:
        return CellAddress(self.M, tuple(int(i) for i in self.words[n]))

    def vertex_index(self, point) -> int | None:
        if self._key_index is None:
            self._key_index = {tuple(k): i for i, k in enumerate(self.vertex_keys)}
        return self._key_index.get(tuple(quantize(self.sys, np.asarray(point), self.M)))

    def vertex_cells(self) -> sparse.csr_matrix:
        """Vertex-by-cell incidence matrix."""
        if self._vc is None:
            n, k = self.cell_vertices.shape
            rows = self.cell_vertices.ravel()
            cols = np.repeat(np.arange(n), k)
            self._vc = sparse.csr_matrix(
                (np.ones(n * k, dtype=np.int32), (rows, cols)), shape=(self.n_vertices, n)
            )
        return self._vc

    def adjacency(self) -> sparse.csr_matrix:
        """Cells are adjacent iff they share a vertex; no self loops."""
        if self._adj is None:
            vc = self.vertex_cells()
            a = (vc.T @ vc).tocsr()
            a.setdiag(0)
            a.eliminate_zeros()
            a.data[:] = 1
            self._adj = a
        return self._adj


def complex_for(sys: FractalSystem, M: int, J: int) -> CellComplex:
    """Cached :class:`CellComplex`."""
    key = ("complex", M, J)
    if key not in sys._cache:
        sys._cache[key] = CellComplex(sys, M, J)
    return sys._cache[key]


def enumerate_cells(sys: FractalSystem, M: int, J: int, cap: int | None = None) -> list[CellAddress]:
    """All ``N**(J-M)`` addresses of ``M``-cells in ``K<J>``, lexicographic."""
    if J < M:
        raise ValueError("envelope J must be >= M")
    _check_cap(sys.N ** (J - M), cap)
    letters = range(1, sys.N + 1)
    return [CellAddress(M, w) for w in itertools.product(letters, repeat=J - M)]


def vertex_lattice(sys: FractalSystem, m: int, J: int) -> list[LatticeVertex]:
    """Deduplicated vertices of the ``m``-cells in ``K<J>`` with their ranks."""
    cx = CellComplex(sys, m, J)
    return [
        LatticeVertex(VertexId(m, int(k[0]), int(k[1])), cx.vertex_coords[i], int(cx.rank[i]))
        for i, k in enumerate(cx.vertex_keys)
    ]


# --------------------------------------------------------------------------
# point location


def _member(sys, x, level, tx, ty, tol, floor) -> bool:
    s = sys.L ** level
    cx = s * sys.barycenter[0] + tx
    cy = s * sys.barycenter[1] + ty
    r = s * sys.radius
    if math.hypot(x[0] - cx, x[1] - cy) > r + tol:
        return False
    if r <= floor:
        return True
    for nu in sys.nu:
        if _member(sys, x, level - 1, tx + s * nu[0], ty + s * nu[1], tol, floor):
            return True
    return False


def on_cell(sys: FractalSystem, x, level: int, translation=(0.0, 0.0), ref_level: int | None = None) -> bool:
    """Whether ``x`` lies (to tolerance) on the ``level``-cell at ``translation``."""
    ref = level if ref_level is None else ref_level
    tol = GEOM_TOL * sys.L ** ref
    floor = 1e-8 * sys.radius * sys.L ** ref
    return _member(sys, (float(x[0]), float(x[1])), level, float(translation[0]),
                   float(translation[1]), tol, floor)


def containing_cells(sys: FractalSystem, x, M: int, J: int) -> list[CellAddress]:
    """Every ``M``-cell inside ``K<J>`` that contains ``x``.

    Raises
    ------
    NotOnFractal
        If no cell contains ``x``.
    """
    x = (float(x[0]), float(x[1]))
    tol = GEOM_TOL * sys.L ** M
    floor = 1e-8 * sys.radius * sys.L ** M
    found = []

    def descend(level, tx, ty, word):
        s = sys.L ** level
        cx = s * sys.barycenter[0] + tx
        cy = s * sys.barycenter[1] + ty
        if math.hypot(x[0] - cx, x[1] - cy) > s * sys.radius + tol:
            return
        if level == M:
            if _member(sys, x, level, tx, ty, tol, floor):
                found.append(CellAddress(M, tuple(reversed(word))))
            return
        for i, nu in enumerate(sys.nu):
            descend(level - 1, tx + s * nu[0], ty + s * nu[1], word + (i + 1,))

    descend(J, 0.0, 0.0, ())
    if not found:
        raise NotOnFractal(f"point {x} is not on any {M}-cell of K<{J}>")
    return found


def enclosing_level(sys: FractalSystem, x, M: int, max_levels: int = 64) -> int:
    """Smallest ``J >= M`` with ``x`` in ``K<J>``."""
    for J in range(M, M + max_levels):
        s = sys.L ** J
        c = s * sys.barycenter
        if math.hypot(x[0] - c[0], x[1] - c[1]) <= s * sys.radius + GEOM_TOL * s:
            if on_cell(sys, x, J, ref_level=M):
                return J
    raise NotOnFractal(f"point {tuple(float(v) for v in x)} is not on the unbounded fractal")


def is_lattice_vertex(sys: FractalSystem, x, M: int) -> bool:
    """Whether ``x`` is a vertex of some ``M``-cell."""
    J = enclosing_level(sys, x, M)
    for a in containing_cells(sys, x, M, J):
        cell = cell_from_address(sys, a)
        if (np.hypot(*(cell.vertices - np.asarray(x)).T) < GEOM_TOL * sys.L ** M).any():
            return True
    return False


# --------------------------------------------------------------------------
# sampling


def sample_points(
    sys: FractalSystem,
    M: int,
    n: int,
    rng: np.random.Generator,
    depth: int = 6,
    exclude_vertices: bool = True,
) -> np.ndarray:
    """Random points of ``K<M>`` by address descent to ``depth`` levels.

    Each sample is a vertex of a random ``(M - depth)``-cell, so it lies
    exactly on the fractal.  Vertices of ``K<M>`` itself are rejected when
    ``exclude_vertices`` is set.
    """
    out = np.empty((0, 2))
    base = sys.vertices(M)
    while len(out) < n:
        m = 2 * (n - len(out)) + 4
        words = rng.integers(0, sys.N, size=(m, depth))
        t = np.zeros((m, 2))
        for d in range(depth):
            t = t + (sys.L ** (M - depth + d + 1)) * sys.nu[words[:, d]]
        corner = rng.integers(0, sys.k, size=m)
        pts = t + (sys.L ** (M - depth)) * sys.essential_fixed_points[corner]
        if exclude_vertices:
            d = np.sqrt(((pts[:, None, :] - base[None]) ** 2).sum(-1)).min(axis=1)
            pts = pts[d > GEOM_TOL * sys.L ** M]
        out = np.concatenate([out, pts])
    return out[:n]
