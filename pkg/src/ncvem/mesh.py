"""Polygonal meshes of the unit square: data structure, generators, checks."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import linprog

from .exceptions import DegenerateGeometry
from .poly import area_centroid, signed_area


@dataclass(frozen=True)
class PolygonalMesh:
    """Conforming polygonal mesh.

    Attributes
    ----------
    vertices : (nv, 2) array
    elements : list of counter-clockwise vertex index arrays
    edges : (ne, 2) array of vertex pairs, stored as (low, high) index
    edge_elements : (ne, 2) array; column 1 is -1 on boundary edges
    element_edges : list of global edge indices, one per local edge
        (local edge ``i`` joins local vertices ``i`` and ``i + 1``)
    boundary : (ne,) bool array
    """

    vertices: np.ndarray
    elements: list
    edges: np.ndarray
    edge_elements: np.ndarray
    element_edges: list
    boundary: np.ndarray
    edge_refs: list = field(repr=False, default_factory=list)

    @classmethod
    def from_elements(cls, vertices, elements) -> "PolygonalMesh":
        verts = np.asarray(vertices, dtype=float).reshape(-1, 2)
        elems = [np.asarray(e, dtype=int) for e in elements]
        index: dict[tuple[int, int], int] = {}
        refs: list[list[tuple[int, int]]] = []
        elem_edges = []
        for p, loop in enumerate(elems):
            ids = np.empty(len(loop), dtype=int)
            for i in range(len(loop)):
                a, b = int(loop[i]), int(loop[(i + 1) % len(loop)])
                key = (a, b) if a < b else (b, a)
                eid = index.get(key)
                if eid is None:
                    eid = len(refs)
                    index[key] = eid
                    refs.append([])
                refs[eid].append((p, 1 if a < b else -1))
                ids[i] = eid
            elem_edges.append(ids)
        edges = np.array(list(index.keys()), dtype=int).reshape(-1, 2)
        adj = np.full((len(refs), 2), -1, dtype=int)
        for eid, r in enumerate(refs):
            adj[eid, 0] = r[0][0]
            if len(r) > 1:
                adj[eid, 1] = r[1][0]
        boundary = np.array([len(r) == 1 for r in refs], dtype=bool)
        return cls(verts, elems, edges, adj, elem_edges, boundary, refs)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def edge_lengths(self) -> np.ndarray:
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    def to_json(self) -> str:
        return json.dumps(
            {
                "vertices": self.vertices.tolist(),
                "elements": [e.tolist() for e in self.elements],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "PolygonalMesh":
        data = json.loads(text)
        return cls.from_elements(data["vertices"], data["elements"])


def load_mesh(path) -> PolygonalMesh:
    return PolygonalMesh.from_json(Path(path).read_text())


@dataclass(frozen=True)
class ElementGeometry:
    """Geometric data of one polygon.

    ``edge_a[i]``/``edge_b[i]`` are the endpoints of local edge ``i`` in
    counter-clockwise order. ``orient[i]`` is +1 when that direction agrees with
    the global (low to high vertex index) direction of the edge.
    """

    vertices: np.ndarray
    area: float
    centroid: np.ndarray
    diameter: float
    lengths: np.ndarray
    normals: np.ndarray
    edge_a: np.ndarray
    edge_b: np.ndarray
    orient: np.ndarray

    @property
    def n_edges(self) -> int:
        return len(self.lengths)

    @property
    def perimeter(self) -> float:
        return float(self.lengths.sum())

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.edge_a + self.edge_b)

    @property
    def param_start(self) -> np.ndarray:
        """Start point of each edge in its global direction."""
        return np.where(self.orient[:, None] > 0, self.edge_a, self.edge_b)

    @property
    def param_dir(self) -> np.ndarray:
        """Vector from global start to global end of each edge."""
        return (self.edge_b - self.edge_a) * self.orient[:, None]


def polygon_geometry(vertices, orient=None) -> ElementGeometry:
    """Geometry of a counter-clockwise polygon given by its vertices."""
    v = np.asarray(vertices, dtype=float)
    area = signed_area(v)
    if not area > 0:
        raise DegenerateGeometry(f"non-positive polygon area {area:.3e}")
    a = v
    b = np.roll(v, -1, axis=0)
    t = b - a
    lengths = np.hypot(t[:, 0], t[:, 1])
    diff = v[:, None, :] - v[None, :, :]
    diameter = float(np.sqrt((diff**2).sum(axis=2)).max())
    if lengths.min() <= 1e-14 * diameter:
        raise DegenerateGeometry("edge of (near) zero length")
    normals = np.column_stack([t[:, 1], -t[:, 0]]) / lengths[:, None]
    if orient is None:
        orient = np.ones(len(v), dtype=int)
    return ElementGeometry(
        vertices=v,
        area=area,
        centroid=area_centroid(v),
        diameter=diameter,
        lengths=lengths,
        normals=normals,
        edge_a=a,
        edge_b=b,
        orient=np.asarray(orient, dtype=int),
    )


def element_geometry(mesh: PolygonalMesh, elem: int) -> ElementGeometry:
    loop = mesh.elements[elem]
    orient = np.where(loop < np.roll(loop, -1), 1, -1)
    return polygon_geometry(mesh.vertices[loop], orient)


@dataclass(frozen=True)
class MeshStats:
    N_el: int
    N_ed: int
    h: float
    h_min: float
    gamma_h: float


def mesh_stats(mesh: PolygonalMesh) -> MeshStats:
    lengths = mesh.edge_lengths()
    h = 0.0
    gamma = 1.0
    for p, loop in enumerate(mesh.elements):
        v = mesh.vertices[loop]
        diff = v[:, None, :] - v[None, :, :]
        hp = float(np.sqrt((diff**2).sum(axis=2)).max())
        h = max(h, hp)
        gamma = max(gamma, float(hp) / lengths[mesh.element_edges[p]].min())
    return MeshStats(mesh.n_elements, mesh.n_edges, h, float(lengths.min()), float(gamma))


# ---------------------------------------------------------------------------
# Generators


class _VertexPool:
    """Assigns indices to vertices identified by hashable keys."""

    def __init__(self):
        self.index: dict = {}
        self.coords: list = []

    def get(self, key, xy) -> int:
        i = self.index.get(key)
        if i is None:
            i = len(self.coords)
            self.index[key] = i
            self.coords.append(xy)
        return i


def generate_dyadic_square_mesh(n: int, m: int) -> PolygonalMesh:
    """``n`` x ``n`` squares, each side split into ``2**m`` equal edges."""
    if n < 1 or m < 0:
        raise ValueError("need n >= 1 and m >= 0")
    r = 2**m
    nf = n * r
    pool = _VertexPool()

    def vid(i, j):
        return pool.get((i, j), (i / nf, j / nf))

    elements = []
    for J in range(n):
        for I in range(n):
            i0, j0 = I * r, J * r
            loop = [vid(i0 + t, j0) for t in range(r)]
            loop += [vid(i0 + r, j0 + t) for t in range(r)]
            loop += [vid(i0 + r - t, j0 + r) for t in range(r)]
            loop += [vid(i0, j0 + r - t) for t in range(r)]
            elements.append(loop)
    return PolygonalMesh.from_elements(pool.coords, elements)


def dyadic_level(level: int) -> tuple[int, int]:
    """Parameters ``(n, m)`` of the dyadic family at refinement index ``level``."""
    return 2 ** (level + 2), level + 1


def generate_hexagonal_collapse_mesh(level: int, shrink: float = 0.5) -> PolygonalMesh:
    """Flat-top hexagons in ``2**(level+1)`` columns, clipped to the unit square.

    Columns of width ``w = 1.5 a`` alternate a vertical offset of half a cell.
    Vertices on the interior vertical lines are pushed by ``a/4`` sideways to
    form the pointed left and right hexagon corners. Every horizontal edge
    shared by two cells of one column (and not touching the outer boundary) is
    then shortened to ``a * shrink**(level - 1)`` about its midpoint, so the
    short edges shrink by ``shrink/2`` per level while the mesh stays
    conforming.
    """
    if level < 1:
        raise ValueError("level must be >= 1")
    if not 0 < shrink <= 1:
        raise ValueError("shrink must lie in (0, 1]")
    nc = 2 ** (level + 1)
    w = 1.0 / nc
    a = w / 1.5
    delta = a / 4.0
    nr = max(1, int(round(1.0 / (math.sqrt(3.0) * a))))
    H = 1.0 / nr
    short = a * shrink ** (level - 1)

    def corner_keys(col):
        # heights in units of H/2
        if col % 2 == 0:
            return list(range(0, 2 * nr + 1, 2))
        return [0] + list(range(1, 2 * nr, 2)) + [2 * nr]

    corners = [set(corner_keys(c)) for c in range(nc)]
    # vertex x positions on each vertical line, keyed by height
    xpos: dict[tuple[int, int], float] = {}
    line_keys = []
    for i in range(nc + 1):
        left = corners[i - 1] if i > 0 else set()
        right = corners[i] if i < nc else set()
        keys = sorted(left | right)
        line_keys.append(keys)
        for t in keys:
            disp = 0.0
            if 0 < i < nc:
                if t in left and t not in right:
                    disp = -delta
                elif t in right and t not in left:
                    disp = delta
            xpos[(i, t)] = i * w + disp
    # shorten interior horizontal edges
    for c in range(1, nc - 1):
        for t in corner_keys(c):
            if t == 0 or t == 2 * nr:
                continue
            x0, x1 = xpos[(c, t)], xpos[(c + 1, t)]
            mid = 0.5 * (x0 + x1)
            xpos[(c, t)] = mid - 0.5 * short
            xpos[(c + 1, t)] = mid + 0.5 * short
    pool = _VertexPool()

    def vid(i, t):
        return pool.get((i, t), (xpos[(i, t)], t * H / 2.0))

    elements = []
    for c in range(nc):
        ck = corner_keys(c)
        for t0, t1 in zip(ck[:-1], ck[1:]):
            loop = [vid(c, t0), vid(c + 1, t0)]
            loop += [vid(c + 1, t) for t in line_keys[c + 1] if t0 < t < t1]
            loop += [vid(c + 1, t1), vid(c, t1)]
            loop += [vid(c, t) for t in reversed(line_keys[c]) if t0 < t < t1]
            elements.append(loop)
    mesh = PolygonalMesh.from_elements(pool.coords, elements)
    _check_edges(mesh)
    return mesh


def generate_nside_mesh(level: int, growth: bool = False) -> PolygonalMesh:
    """Squares of side ``2**-level`` with nonuniformly subdivided sides.

    Each block side is split into ``b + ((i + 2j + 3o) mod 3)`` edges, where
    ``b`` grows linearly with ``level`` (or doubles when ``growth`` is set) and
    ``(i, j, o)`` locate the side. Break points follow a cosine grading.
    """
    if level < 1:
        raise ValueError("level must be >= 1")
    n = 2**level
    base = 3 * 2 ** (level - 1) if growth else 2 + int(round(1.5 * (level - 1)))
    pool = _VertexPool()

    def count(i, j, o):
        return base + (i + 2 * j + 3 * o) % 3

    def side_points(i, j, o):
        """Vertex ids along a block side, from its low end to its high end."""
        c = count(i, j, o)
        s = 0.5 * (1.0 - np.cos(np.pi * np.arange(c + 1) / c))
        ids = []
        for p, sp in enumerate(s):
            if p == 0:
                key = ("c", i, j)
            elif p == c:
                key = ("c", i + 1, j) if o == 0 else ("c", i, j + 1)
            else:
                key = (o, i, j, p)
            if o == 0:
                xy = ((i + sp) / n, j / n)
            else:
                xy = (i / n, (j + sp) / n)
            ids.append(pool.get(key, xy))
        return ids

    elements = []
    for J in range(n):
        for I in range(n):
            bottom = side_points(I, J, 0)
            right = side_points(I + 1, J, 1)
            top = side_points(I, J + 1, 0)
            left = side_points(I, J, 1)
            loop = bottom[:-1] + right[:-1] + top[::-1][:-1] + left[::-1][:-1]
            elements.append(loop)
    mesh = PolygonalMesh.from_elements(pool.coords, elements)
    _check_edges(mesh)
    return mesh


def _check_edges(mesh: PolygonalMesh) -> None:
    lengths = mesh.edge_lengths()
    for p, loop in enumerate(mesh.elements):
        v = mesh.vertices[loop]
        hp = np.sqrt(((v[:, None] - v[None]) ** 2).sum(axis=2)).max()
        if lengths[mesh.element_edges[p]].min() <= 1e-14 * hp:
            raise DegenerateGeometry(f"element {p}: collapsed edge")


# ---------------------------------------------------------------------------
# Validation


@dataclass
class MeshReport:
    """Outcome of :func:`validate_mesh`; lists violations instead of raising."""

    simple_violations: list
    conformity_violations: list
    total_area: float
    element_gamma: np.ndarray
    kernel_radius_ratio: np.ndarray
    max_adjacent_ratio: float
    max_edge_count: int
    gamma2: float
    nstar: int
    g1_ok: bool
    g2a_ok: bool
    g2b_ok: bool
    g3_ok: bool
    warnings: list

    @property
    def valid(self) -> bool:
        return not self.simple_violations and not self.conformity_violations


def _self_intersects(v: np.ndarray) -> bool:
    n = len(v)
    a = v
    b = np.roll(v, -1, axis=0)
    i, j = np.triu_indices(n, k=2)
    keep = ~((i == 0) & (j == n - 1))
    i, j = i[keep], j[keep]
    if len(i) == 0:
        return False

    def orient(p, q, r):
        return (q[:, 0] - p[:, 0]) * (r[:, 1] - p[:, 1]) - (q[:, 1] - p[:, 1]) * (r[:, 0] - p[:, 0])

    d1 = orient(a[i], b[i], a[j])
    d2 = orient(a[i], b[i], b[j])
    d3 = orient(a[j], b[j], a[i])
    d4 = orient(a[j], b[j], b[i])
    scale = np.abs(v).max() ** 2 * 1e-14
    proper = (d1 * d2 < -scale**2) & (d3 * d4 < -scale**2)
    return bool(proper.any())


def kernel_radius(vertices) -> float:
    """Radius of the largest disc that the polygon is star-shaped with respect to.

    The kernel of a simple polygon is the intersection of the inner half-planes
    of its edges; the largest inscribed disc of that set is a linear program.
    """
    v = np.asarray(vertices, float)
    a = v
    t = np.roll(v, -1, axis=0) - v
    nrm = np.hypot(t[:, 0], t[:, 1])
    normals = np.column_stack([t[:, 1], -t[:, 0]]) / nrm[:, None]
    # n.(c - a) + r <= 0
    A = np.column_stack([normals, np.ones(len(v))])
    rhs = (normals * a).sum(axis=1)
    res = linprog(
        c=[0.0, 0.0, -1.0],
        A_ub=A,
        b_ub=rhs,
        bounds=[(None, None), (None, None), (0, None)],
        method="highs",
    )
    if res.status != 0:
        return 0.0
    return float(res.x[2])


def validate_mesh(
    mesh: PolygonalMesh,
    gamma2: float | None = None,
    nstar: int = 6,
    gamma0: float = 0.05,
) -> MeshReport:
    """Check the mesh and classify which shape assumptions it satisfies.

    Parameters
    ----------
    gamma2 : admissible ratio between adjacent edge lengths; defaults to the
        Steinbach constant ``c0``.
    nstar : admissible number of edges violating the ratio (and, for G2b,
        bound on edges per element).
    gamma0 : kernel-disc radius relative to ``h_P`` below which G1 fails.
    """
    if gamma2 is None:
        from .stab import steinbach_constants

        gamma2 = steinbach_constants()[1]
    simple, conform, warnings = [], [], []
    area = 0.0
    lengths = mesh.edge_lengths()
    gam = np.zeros(mesh.n_elements)
    krad = np.zeros(mesh.n_elements)
    max_adj = 1.0
    max_count = 0
    g3 = True
    for p, loop in enumerate(mesh.elements):
        v = mesh.vertices[loop]
        a = signed_area(v)
        area += a
        if a <= 0 or len(set(loop.tolist())) != len(loop) or _self_intersects(v):
            simple.append(p)
        hp = np.sqrt(((v[:, None] - v[None]) ** 2).sum(axis=2)).max()
        le = lengths[mesh.element_edges[p]]
        gam[p] = hp / le.min()
        krad[p] = kernel_radius(v) / hp
        ratio = np.maximum(le / np.roll(le, -1), np.roll(le, -1) / le)
        max_adj = max(max_adj, float(ratio.max()))
        max_count = max(max_count, len(loop))
        bad = ratio > gamma2
        # an edge belongs to the exceptional set iff one of its neighbour pairs is bad
        exceptional = bad | np.roll(bad, 1)
        if exceptional.sum() > nstar:
            g3 = False
    for eid, refs in enumerate(mesh.edge_refs):
        if len(refs) > 2:
            conform.append(f"edge {eid} shared by {len(refs)} elements")
        elif len(refs) == 2 and refs[0][1] == refs[1][1]:
            conform.append(f"edge {eid} has equal orientation in both elements")
    # boundary edges must lie on the square's boundary
    lo, hi = mesh.vertices.min(axis=0), mesh.vertices.max(axis=0)
    tol = 1e-12 * max(1.0, float(np.abs(hi - lo).max()))
    for eid in np.flatnonzero(mesh.boundary):
        pts = mesh.vertices[mesh.edges[eid]]
        on = [
            np.all(np.abs(pts[:, d] - val) <= tol)
            for d in (0, 1)
            for val in (lo[d], hi[d])
        ]
        if not any(on):
            conform.append(f"edge {eid} is unmatched but interior")
    box = float(np.prod(hi - lo))
    if abs(area - box) > 1e-12 * box:
        conform.append(f"element areas sum to {area!r}, expected {box!r}")
    g1 = bool(np.all(krad >= gamma0))
    if not g1:
        warnings.append(f"{int((krad < gamma0).sum())} elements with small kernel disc")
    return MeshReport(
        simple_violations=simple,
        conformity_violations=conform,
        total_area=area,
        element_gamma=gam,
        kernel_radius_ratio=krad,
        max_adjacent_ratio=max_adj,
        max_edge_count=max_count,
        gamma2=float(gamma2),
        nstar=nstar,
        g1_ok=g1,
        g2a_ok=max_adj <= gamma2,
        g2b_ok=max_count <= nstar,
        g3_ok=g3,
        warnings=warnings,
    )


def generate_mesh(family: str, level: int, shrink: float = 0.5, growth: bool = False):
    """Dispatch to a family generator by name (``hexa``, ``nside``, ``dyadic``)."""
    if family == "dyadic":
        return generate_dyadic_square_mesh(*dyadic_level(level))
    if family == "hexa":
        return generate_hexagonal_collapse_mesh(level, shrink)
    if family == "nside":
        return generate_nside_mesh(level, growth)
    raise ValueError(f"unknown mesh family {family!r}")
