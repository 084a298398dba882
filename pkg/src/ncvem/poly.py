"""Scaled monomials, polynomial calculus and quadrature on edges and polygons.

Monomials on an element are ``m_a(x) = ((x - c) / h) ** a`` with multi-indices
in graded-lexicographic order: degree by degree, and inside one degree
``(d, 0), (d-1, 1), ..., (0, d)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre
from scipy.linalg import solve_triangular
from scipy.special import roots_jacobi

from .exceptions import DegenerateGeometry, NotPositiveDefinite


def poly_dim(degree: int) -> int:
    """Dimension of the 2D polynomial space of total degree ``degree``."""
    if degree < 0:
        return 0
    return (degree + 1) * (degree + 2) // 2


@lru_cache(maxsize=None)
def monomial_exponents(degree: int) -> np.ndarray:
    """Exponents ``(a1, a2)`` with ``a1 + a2 <= degree`` in graded-lex order."""
    exps = [(d - j, j) for d in range(degree + 1) for j in range(d + 1)]
    out = np.array(exps, dtype=int).reshape(-1, 2)
    out.setflags(write=False)
    return out


def exponent_index(a1: int, a2: int) -> int:
    """Position of the monomial with exponents ``(a1, a2)``."""
    d = a1 + a2
    return poly_dim(d - 1) + a2


@dataclass(frozen=True)
class MonomialBasis:
    """Scaled monomials of total degree at most ``degree`` around ``center``."""

    degree: int
    center: tuple
    scale: float

    @property
    def size(self) -> int:
        return poly_dim(self.degree)

    @property
    def exponents(self) -> np.ndarray:
        return monomial_exponents(self.degree)

    def evaluate(self, points) -> np.ndarray:
        """Values at ``points`` (shape ``(n, 2)``); result has shape ``(n, size)``."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        xi = (pts[:, 0] - self.center[0]) / self.scale
        eta = (pts[:, 1] - self.center[1]) / self.scale
        d = self.degree
        px = xi[:, None] ** np.arange(d + 1)
        py = eta[:, None] ** np.arange(d + 1)
        e = self.exponents
        return px[:, e[:, 0]] * py[:, e[:, 1]]

    def gradient(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Partial derivatives at ``points``, each of shape ``(n, size)``."""
        calc = poly_calculus(self)
        vals = self.evaluate(points)
        return vals @ calc.dx, vals @ calc.dy


@dataclass(frozen=True)
class PolyCalculus:
    """Linear maps on monomial coefficient vectors.

    If ``c`` holds the coefficients of ``p``, then ``dx @ c`` holds those of
    ``dp/dx`` and so on.
    """

    dx: np.ndarray
    dy: np.ndarray
    laplacian: np.ndarray


def poly_calculus(basis: MonomialBasis) -> PolyCalculus:
    """Exact differentiation matrices for a scaled monomial basis."""
    n = basis.size
    dx = np.zeros((n, n))
    dy = np.zeros((n, n))
    for col, (a1, a2) in enumerate(basis.exponents):
        if a1 > 0:
            dx[exponent_index(a1 - 1, a2), col] = a1 / basis.scale
        if a2 > 0:
            dy[exponent_index(a1, a2 - 1), col] = a2 / basis.scale
    return PolyCalculus(dx, dy, dx @ dx + dy @ dy)


def edge_trace(basis: MonomialBasis, a, b, degree: int | None = None) -> np.ndarray:
    """Restriction of 2D polynomials to the segment ``[a, b]``.

    The 1D basis is ``s ** j`` with ``s = (x - mid) . (b - a) / |b - a| ** 2``,
    so ``s`` runs over ``[-1/2, 1/2]``. Returns the matrix mapping 2D monomial
    coefficients to 1D coefficients.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    deg = basis.degree if degree is None else degree
    s = np.linspace(-0.5, 0.5, deg + 1)
    pts = 0.5 * (a + b) + s[:, None] * (b - a)
    vander = s[:, None] ** np.arange(deg + 1)
    return np.linalg.solve(vander, basis.evaluate(pts))


def normal_trace(basis: MonomialBasis, a, b, normal) -> np.ndarray:
    """Restriction of the normal derivative ``grad q . n`` to ``[a, b]``."""
    calc = poly_calculus(basis)
    dn = normal[0] * calc.dx + normal[1] * calc.dy
    return edge_trace(basis, a, b) @ dn


def edge_legendre(k: int, s) -> np.ndarray:
    """Edge basis ``q_i(s) = sqrt(2i+1) P_i(2s)`` for ``i < k`` and ``s`` in [-1/2, 1/2].

    Orthonormal for ``int_{-1/2}^{1/2} q_i q_j ds`` with ``q_0 = 1``.
    """
    s = np.asarray(s, dtype=float)
    vals = legendre.legvander(2.0 * s, k - 1)
    return vals * np.sqrt(2.0 * np.arange(k) + 1.0)


# ---------------------------------------------------------------------------
# Quadrature


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and weights; ``degree`` is the polynomial exactness."""

    nodes: np.ndarray
    weights: np.ndarray
    degree: int

    def integrate(self, values) -> float | np.ndarray:
        return np.tensordot(self.weights, np.asarray(values), axes=(0, 0))


@lru_cache(maxsize=None)
def _gauss_legendre_01(npts: int):
    x, w = legendre.leggauss(npts)
    return 0.5 * (x + 1.0), 0.5 * w


def edge_quadrature(order: int) -> QuadratureRule:
    """Gauss-Legendre rule on [0, 1] exact up to degree ``order``."""
    npts = max(1, (order + 2) // 2)
    x, w = _gauss_legendre_01(npts)
    return QuadratureRule(x.copy(), w.copy(), 2 * npts - 1)


@lru_cache(maxsize=None)
def _reference_triangle_rule(order: int):
    # collapsed tensor rule on the triangle (0,0), (1,0), (0,1)
    n = max(1, (order + 2) // 2)
    xu, wu = roots_jacobi(n, 1.0, 0.0)
    u = 0.5 * (xu + 1.0)
    wu = wu / 4.0
    v, wv = _gauss_legendre_01(n)
    uu, vv = np.meshgrid(u, v, indexing="ij")
    ww = np.outer(wu, wv)
    x = uu.ravel()
    y = (vv * (1.0 - uu)).ravel()
    return np.column_stack([x, y]), ww.ravel()


def triangle_quadrature(a, b, c, order: int) -> QuadratureRule:
    """Rule on triangle ``abc`` exact up to degree ``order``."""
    ref, w = _reference_triangle_rule(order)
    a = np.asarray(a, float)
    e1 = np.asarray(b, float) - a
    e2 = np.asarray(c, float) - a
    det = e1[0] * e2[1] - e1[1] * e2[0]
    pts = a + ref[:, :1] * e1 + ref[:, 1:] * e2
    return QuadratureRule(pts, w * abs(det), 2 * max(1, (order + 2) // 2) - 1)


def signed_area(vertices) -> float:
    v = np.asarray(vertices, float)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def area_centroid(vertices) -> np.ndarray:
    v = np.asarray(vertices, float)
    x, y = v[:, 0], v[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * cross.sum()
    cx = ((x + xn) * cross).sum() / (6.0 * area)
    cy = ((y + yn) * cross).sum() / (6.0 * area)
    return np.array([cx, cy])


def drop_collinear(vertices, tol: float = 1e-12) -> np.ndarray:
    """Remove vertices whose two incident edges are collinear and aligned."""
    v = np.asarray(vertices, float)
    while len(v) > 3:
        prev = v - np.roll(v, 1, axis=0)
        nxt = np.roll(v, -1, axis=0) - v
        cross = prev[:, 0] * nxt[:, 1] - prev[:, 1] * nxt[:, 0]
        dot = (prev * nxt).sum(axis=1)
        scale = np.linalg.norm(prev, axis=1) * np.linalg.norm(nxt, axis=1)
        straight = (np.abs(cross) <= tol * scale) & (dot > 0)
        if not straight.any():
            break
        v = v[~straight]
    return v


def _ear_clip(v: np.ndarray) -> list[tuple[int, int, int]]:
    idx = list(range(len(v)))
    tris = []

    def cross(o, p, q):
        return (p[0] - o[0]) * (q[1] - o[1]) - (p[1] - o[1]) * (q[0] - o[0])

    guard = 0
    while len(idx) > 3:
        guard += 1
        if guard > 10 * len(v) ** 2:
            raise DegenerateGeometry("ear clipping failed")
        n = len(idx)
        for t in range(n):
            i0, i1, i2 = idx[t - 1], idx[t], idx[(t + 1) % n]
            a, b, c = v[i0], v[i1], v[i2]
            if cross(a, b, c) <= 0:
                continue
            inside = False
            for j in idx:
                if j in (i0, i1, i2):
                    continue
                p = v[j]
                if cross(a, b, p) >= 0 and cross(b, c, p) >= 0 and cross(c, a, p) >= 0:
                    inside = True
                    break
            if not inside:
                tris.append((i0, i1, i2))
                idx.pop(t)
                break
        else:
            raise DegenerateGeometry("ear clipping failed")
    tris.append(tuple(idx))
    return tris


def polygon_triangles(vertices) -> list[np.ndarray]:
    """Split a counter-clockwise polygon into triangles.

    A fan from the area centroid is used when every fan triangle has positive
    area; otherwise the polygon is ear-clipped.
    """
    v = drop_collinear(vertices)
    c = area_centroid(v)
    nxt = np.roll(v, -1, axis=0)
    d1 = v - c
    d2 = nxt - c
    fan_area = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    scale = np.max(np.linalg.norm(d1, axis=1)) ** 2
    if np.all(fan_area > 1e-14 * scale):
        return [np.array([c, v[i], nxt[i]]) for i in range(len(v))]
    return [v[list(t)] for t in _ear_clip(v)]


def polygon_quadrature(polygon, order: int) -> QuadratureRule:
    """Composite rule on a polygon exact up to degree ``order``.

    ``polygon`` is a vertex array or any object with a ``vertices`` attribute.
    """
    verts = getattr(polygon, "vertices", polygon)
    rules = [triangle_quadrature(*t, order) for t in polygon_triangles(verts)]
    nodes = np.concatenate([r.nodes for r in rules])
    weights = np.concatenate([r.weights for r in rules])
    return QuadratureRule(nodes, weights, rules[0].degree)


def monomial_integrals_green(vertices, basis: MonomialBasis) -> np.ndarray:
    """Integrals of every basis monomial over a polygon by Green's theorem.

    Uses ``int_P X^a Y^b = (h / (a+1)) oint X^(a+1) Y^b dy`` with exact Gauss
    rules on each straight edge.
    """
    v = np.asarray(vertices, float)
    nxt = np.roll(v, -1, axis=0)
    rule = edge_quadrature(basis.degree + 1)
    h = basis.scale
    out = np.zeros(basis.size)
    for a, b in zip(v, nxt):
        pts = a + rule.nodes[:, None] * (b - a)
        xi = (pts[:, 0] - basis.center[0]) / h
        eta = (pts[:, 1] - basis.center[1]) / h
        dy = b[1] - a[1]
        for i, (a1, a2) in enumerate(basis.exponents):
            out[i] += h / (a1 + 1) * dy * np.dot(rule.weights, xi ** (a1 + 1) * eta**a2)
    return out


# ---------------------------------------------------------------------------
# Orthonormalization


def orthonormalize(gram) -> np.ndarray:
    """Inverse-Cholesky orthonormalization of a basis with Gram matrix ``gram``.

    Returns the lower-triangular ``T`` with ``T @ gram @ T.T = I``. Row ``i`` of
    ``T`` expresses the ``i``-th new basis function in the old basis, so the
    first ``j`` new functions span the same space as the first ``j`` old ones.
    """
    g = np.asarray(gram, dtype=float)
    g = 0.5 * (g + g.T)
    n = g.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    try:
        c = np.linalg.cholesky(g)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("Gram matrix is not positive definite") from exc
    piv = np.diag(c) ** 2
    if piv.min() <= 1e-14 * np.max(np.diag(g)):
        raise NotPositiveDefinite(f"pivot {piv.min():.3e} too small")
    return solve_triangular(c, np.eye(n), lower=True)
