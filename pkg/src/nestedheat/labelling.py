"""Good labellings of the vertex lattice and the per-cell rotations.

Labels are integers ``0..k-1``.  The base complex ``K<M>`` carries label
``(j - anchor) mod k`` on its vertex ``j`` (vertices ordered counterclockwise
from the lexicographically smallest).  A cell with rotation index ``r`` then
carries label ``(j + r - anchor) mod k`` on its vertex ``j``; this is the
rotation condition ``l(v) = l(R(v - translation))`` with ``R`` the
counterclockwise rotation by ``2 pi r / k`` about the barycenter of ``K<M>``.
"""

from __future__ import annotations

import collections
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NoGLP, UnlabelledCell
from .geometry import (
    CellAddress,
    CellComplex,
    FractalSystem,
    VertexId,
    quantize,
    vertex_key,
)


@dataclass(frozen=True, eq=False)
class Rotation:
    """Counterclockwise rotation by ``2 pi index / k`` about ``center``."""

    index: int
    k: int
    center: np.ndarray

    @property
    def angle(self) -> float:
        return 2.0 * math.pi * self.index / self.k

    @property
    def matrix(self) -> np.ndarray:
        return rotation_matrix(self.index, self.k)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return (x - self.center) @ self.matrix.T + self.center

    def inverse(self) -> "Rotation":
        return Rotation((-self.index) % self.k, self.k, self.center)


def rotation_matrix(index, k: int) -> np.ndarray:
    """Rotation matrices for one index or an array of indices."""
    a = 2.0 * np.pi * np.asarray(index) / k
    c, s = np.cos(a), np.sin(a)
    return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)


@dataclass(eq=False)
class Labelling:
    sys: FractalSystem
    M: int
    J: int
    anchor: int
    label_map: dict
    cell_rotation: dict
    complex: CellComplex = field(repr=False)
    vertex_labels: np.ndarray = field(repr=False)
    rotations: np.ndarray = field(repr=False)

    def label_of(self, point) -> int:
        key = vertex_key(self.sys, point, self.M)
        if key not in self.label_map:
            raise UnlabelledCell(f"no label for vertex {tuple(point)}")
        return self.label_map[key]

    def rotation_index(self, address: CellAddress) -> int:
        word = address.canonical().padded(self.J).word
        if len(word) != self.J - self.M or word not in self.cell_rotation:
            raise UnlabelledCell(f"cell {address} is outside the labelled envelope")
        return self.cell_rotation[word]

    def rotation(self, address: CellAddress) -> Rotation:
        return Rotation(self.rotation_index(address), self.sys.k, self.sys.center(self.M))

    def restrict(self, J: int) -> "Labelling":
        """Restriction to the cells of ``K<J>``; ``J`` may not exceed the envelope."""
        if J > self.J:
            raise UnlabelledCell("cannot restrict to a larger envelope")
        cx = CellComplex(self.sys, self.M, J)
        n = cx.n_cells
        rot = self.rotations[:n].copy()
        labels = np.empty(cx.n_vertices, dtype=np.int64)
        big = self.complex
        labels[cx.cell_vertices] = self.vertex_labels[big.cell_vertices[:n]]
        return _assemble(self.sys, self.M, J, self.anchor, cx, labels, rot)


def _assemble(sys, M, J, anchor, cx, labels, rot) -> Labelling:
    label_map = {
        VertexId(M, int(k[0]), int(k[1])): int(l) for k, l in zip(cx.vertex_keys, labels)
    }
    cell_rotation = {tuple(int(i) for i in w): int(r) for w, r in zip(cx.words, rot)}
    return Labelling(sys, M, J, anchor, label_map, cell_rotation, cx, labels, rot)


def construct_labelling(
    sys: FractalSystem,
    M: int,
    J: int,
    anchor: int = 0,
    order: str = "bfs",
    seed: int | None = None,
) -> Labelling:
    """Propagate a good labelling from ``K<M>`` over every ``M``-cell of ``K<J>``.

    Each newly reached cell has its rotation forced by any already labelled
    vertex; all its other labelled vertices must agree.

    Parameters
    ----------
    order : {"bfs", "dfs", "random"}
        Visiting order.  The result does not depend on it when a good
        labelling exists.
    seed : int, optional
        Seed for ``order="random"``.

    Raises
    ------
    NoGLP
        A reached cell admits no consistent rotation (no good labelling up
        to envelope ``J``).
    """
    k = sys.k
    cx = CellComplex(sys, M, J)
    adj = cx.adjacency()
    cv = cx.cell_vertices
    labels = np.full(cx.n_vertices, -1, dtype=np.int64)
    rot = np.full(cx.n_cells, -1, dtype=np.int64)
    rng = np.random.default_rng(seed)
    j_idx = np.arange(k)

    rot[0] = 0
    labels[cv[0]] = (j_idx - anchor) % k
    frontier = collections.deque([0])
    while frontier:
        c = frontier.pop() if order == "dfs" else frontier.popleft()
        nbrs = adj.indices[adj.indptr[c]:adj.indptr[c + 1]]
        if order == "random":
            nbrs = rng.permutation(nbrs)
        for nb in nbrs:
            if rot[nb] >= 0:
                continue
            vs = cv[nb]
            known = labels[vs] >= 0
            cand = (labels[vs][known] - j_idx[known] + anchor) % k
            if not (cand == cand[0]).all():
                raise NoGLP(
                    f"cell {cx.address(nb)} admits no rotation; no good labelling "
                    f"up to envelope J={J}"
                )
            r = int(cand[0])
            rot[nb] = r
            labels[vs] = (j_idx + r - anchor) % k
            frontier.append(nb)
    if (rot < 0).any():
        raise NoGLP("cell graph is disconnected")
    return _assemble(sys, M, J, anchor, cx, labels, rot)


@dataclass
class GLPReport:
    ok: bool
    violations: list

    def __bool__(self):
        return self.ok


def verify_glp(sys: FractalSystem, lab: Labelling) -> GLPReport:
    """Check bijectivity and the rotation condition on every labelled cell.

    Vertex positions are recomputed from the words and rotated with explicit
    matrices; labels are looked up by quantized coordinates.
    """
    k, M = sys.k, lab.M
    base = sys.vertices(M)
    center = sys.center(M)
    violations = []
    for word, r in lab.cell_rotation.items():
        t = np.zeros(2)
        for d, i in enumerate(word, start=1):
            t = t + (sys.L ** (M + d)) * sys.nu[i - 1]
        verts = base + t
        try:
            got = [lab.label_map[vertex_key(sys, v, M)] for v in verts]
        except KeyError:
            violations.append((CellAddress(M, word), "unlabelled vertex"))
            continue
        if sorted(got) != list(range(k)):
            violations.append((CellAddress(M, word), "labels are not a bijection"))
            continue
        R = Rotation(r, k, center)
        images = R(verts - t)
        want = [lab.label_map.get(vertex_key(sys, p, M)) for p in images]
        if want != got:
            violations.append((CellAddress(M, word), "rotation condition fails"))
    return GLPReport(not violations, violations)


def level_shifts(sys: FractalSystem, depth: int) -> np.ndarray:
    """Per-level label shifts of the translated copies.

    Row ``d - 1`` gives, for each letter ``i``, the cyclic label shift of the
    copy ``K<M+d-1> + L**(M+d) nu_i`` inside ``K<M+d>``.  The rotation index
    of a cell is the sum of the shifts of its letters.  Independent of ``M``
    and of the anchor.

    Raises
    ------
    NoGLP
        If the copies of some level cannot be shifted consistently.
    """
    cached = sys._cache.get("shifts")
    if cached is not None and len(cached) >= depth:
        return cached[:depth]
    k, N, L = sys.k, sys.N, sys.L
    V0 = sys.essential_fixed_points
    corner_labels = np.arange(k)
    shifts = []
    for d in range(1, depth + 1):
        pos = {}
        for i in range(N):
            corners = (L ** (d - 1)) * V0 + (L ** d) * sys.nu[i]
            for c, key in enumerate(map(tuple, quantize(sys, corners, 0))):
                pos.setdefault(key, []).append((i, c))
        s = np.full(N, -1, dtype=np.int64)
        s[0] = 0
        edges = collections.defaultdict(list)
        for members in pos.values():
            for (i, c) in members:
                for (j, e) in members:
                    if i != j:
                        # s_i + lab[c] == s_j + lab[e]
                        edges[i].append((j, (corner_labels[c] - corner_labels[e]) % k))
        queue = collections.deque([0])
        while queue:
            i = queue.popleft()
            for j, diff in edges[i]:
                want = (s[i] + diff) % k
                if s[j] < 0:
                    s[j] = want
                    queue.append(j)
                elif s[j] != want:
                    raise NoGLP(f"no good labelling up to relative depth {d}")
        if (s < 0).any():
            raise NoGLP("copies are not connected")
        new_labels = np.empty(k, dtype=np.int64)
        for c, p in enumerate(quantize(sys, (L ** d) * V0, 0)):
            members = pos.get(tuple(p))
            if not members:
                raise NoGLP(f"corner {c} of level {d} is not a copy corner")
            i, e = members[0]
            new_labels[c] = (corner_labels[e] + s[i]) % k
        corner_labels = new_labels
        shifts.append(s)
    out = np.array(shifts, dtype=np.int64).reshape(depth, N)
    sys._cache["shifts"] = out
    return out


def word_rotations(sys: FractalSystem, words: np.ndarray) -> np.ndarray:
    """Rotation indices for an array of words (1-based letters, finest first)."""
    words = np.atleast_2d(np.asarray(words))
    D = words.shape[1]
    if D == 0:
        return np.zeros(len(words), dtype=np.int64)
    s = level_shifts(sys, D)
    total = np.zeros(len(words), dtype=np.int64)
    for d in range(D):
        total += s[d][words[:, d] - 1]
    return total % sys.k
