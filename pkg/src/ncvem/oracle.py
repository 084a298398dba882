"""Brute-force reference quantities used to check the stabilizations.

These are test and diagnostic tools, never used by the solver.
"""
from __future__ import annotations

import math

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .exceptions import SolveFailure
from .poly import edge_legendre, edge_quadrature, orthonormalize


# ---------------------------------------------------------------------------
# Riesz representative in H^1 with zero boundary average


def _fan_mesh(geom, fineness):
    """Fan triangulation from the centroid, each triangle refined ``n`` times.

    Returns nodes, triangles and boundary segments ``(i, j, edge, s_i, s_j)``
    where ``s`` is the edge parameter in [-1/2, 1/2] along the global edge
    direction.
    """
    c = geom.centroid
    a, b = geom.edge_a, geom.edge_b
    longest = max(np.linalg.norm(a - c, axis=1).max(), geom.lengths.max())
    n = max(1, int(math.ceil(longest / fineness)))
    ii, jj = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
    keep = ii + jj <= n
    ii, jj = ii[keep], jj[keep]
    lattice = {(int(i), int(j)): t for t, (i, j) in enumerate(zip(ii, jj))}
    local_tris = []
    for i in range(n):
        for j in range(n - i):
            local_tris.append((lattice[(i, j)], lattice[(i + 1, j)], lattice[(i, j + 1)]))
            if i + j < n - 1:
                local_tris.append((lattice[(i + 1, j)], lattice[(i + 1, j + 1)], lattice[(i, j + 1)]))
    local_tris = np.array(local_tris)
    pts_all, tris_all, segs = [], [], []
    offset = 0
    for e in range(geom.n_edges):
        pts = c + (ii[:, None] / n) * (a[e] - c) + (jj[:, None] / n) * (b[e] - c)
        pts_all.append(pts)
        tris_all.append(local_tris + offset)
        # boundary lattice points i + j = n, ordered from a to b
        for j in range(n):
            p0 = offset + lattice[(n - j, j)]
            p1 = offset + lattice[(n - j - 1, j + 1)]
            t0, t1 = j / n, (j + 1) / n
            if geom.orient[e] < 0:
                t0, t1 = 1.0 - t0, 1.0 - t1
            segs.append((p0, p1, e, t0 - 0.5, t1 - 0.5))
        offset += len(ii)
    pts = np.concatenate(pts_all)
    tris = np.concatenate(tris_all)
    key = np.round(pts / (geom.diameter * 1e-10)).astype(np.int64)
    _, first, inverse = np.unique(key, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.ravel()
    nodes = pts[first]
    tris = inverse[tris]
    segs = [(inverse[p0], inverse[p1], e, s0, s1) for p0, p1, e, s0, s1 in segs]
    return nodes, tris, segs


def _p1_stiffness(nodes, tris):
    p = nodes[tris]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    area = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    # gradients of barycentric coordinates
    e = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
    grads = np.stack([e[..., 1], -e[..., 0]], axis=-1) / (2.0 * area[:, None, None])
    local = np.einsum("tid,tjd->tij", grads, grads) * np.abs(area)[:, None, None]
    rows = np.repeat(tris, 3, axis=1).ravel()
    cols = np.tile(tris, (1, 3)).ravel()
    n = len(nodes)
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def riesz_dual_seminorm(geom, eta, fineness: float | None = None) -> float:
    """Squared dual seminorm of a boundary piecewise polynomial.

    Parameters
    ----------
    geom : ElementGeometry
    eta : (n_edges, k) coefficients in the edge basis ``q_i`` (global edge
        direction), or an (n_edges,) vector of edge constants
    fineness : target size of the P1 mesh; default ``h_P / 8``

    Returns ``|w|_1^2`` where ``w`` solves the Neumann problem with data
    ``eta`` and zero boundary average.
    """
    eta = np.asarray(eta, dtype=float)
    if eta.ndim == 1:
        eta = eta[:, None]
    k = eta.shape[1]
    if fineness is None:
        fineness = geom.diameter / 8.0
    nodes, tris, segs = _fan_mesh(geom, fineness)
    K = _p1_stiffness(nodes, tris)
    n = len(nodes)
    rule = edge_quadrature(2 * k + 2)
    load = np.zeros(n)
    bavg = np.zeros(n)
    for p0, p1, e, s0, s1 in segs:
        s = s0 + rule.nodes * (s1 - s0)
        length = abs(s1 - s0) * geom.lengths[e]
        vals = edge_legendre(k, s) @ eta[e]
        load[p0] += length * rule.weights @ (vals * (1.0 - rule.nodes))
        load[p1] += length * rule.weights @ (vals * rule.nodes)
        bavg[p0] += 0.5 * length
        bavg[p1] += 0.5 * length
    A = sp.bmat([[K, sp.csr_matrix(bavg[:, None])], [sp.csr_matrix(bavg[None, :]), None]]).tocsc()
    rhs = np.concatenate([load, [0.0]])
    sol = spla.spsolve(A, rhs)
    if not np.all(np.isfinite(sol)):
        raise SolveFailure("Riesz problem could not be solved")
    w = sol[:n]
    res = np.linalg.norm(A @ sol - rhs) / max(np.linalg.norm(rhs), 1e-300)
    if res > 1e-8:
        raise SolveFailure(f"Riesz residual {res:.2e}", residual=res)
    return float(w @ (K @ w))


# ---------------------------------------------------------------------------
# Fourier seminorm on the unit circle


def fourier_minus_half(values, n_max: int | None = None) -> float:
    """``sum_{0<|n|<=n_max} |c_n|^2 / |n|`` for piecewise constants on ``2**M`` cells."""
    v = np.asarray(values, dtype=float)
    v = v - v.mean()
    N = len(v)
    if n_max is None:
        n_max = 16 * N
    n = np.arange(1, n_max + 1)
    dft = np.fft.fft(v)[n % N]
    c = (1.0 - np.exp(-2j * np.pi * n / N)) / (2j * np.pi * n) * dft
    return float(2.0 * np.sum(np.abs(c) ** 2 / n))


def fourier_boundary_gram(edge_lengths, n_max: int | None = None) -> np.ndarray:
    """Gram matrix of edge characteristic functions in the Fourier form.

    The boundary is mapped to the unit-length circle by arclength and the
    result is scaled by the squared perimeter.
    """
    h = np.asarray(edge_lengths, dtype=float)
    L = h.sum()
    t = np.concatenate([[0.0], np.cumsum(h)]) / L
    if n_max is None:
        n_max = int(min(2**22, 64 * math.ceil(L / h.min())))
    G = np.zeros((len(h), len(h)))
    chunk = 1 << 16
    for start in range(1, n_max + 1, chunk):
        n = np.arange(start, min(n_max, start + chunk - 1) + 1)
        ph = np.exp(-2j * np.pi * np.outer(t, n))
        c = (ph[:-1] - ph[1:]) / (2j * np.pi * n)
        G += 2.0 * np.real((c / n) @ c.conj().T)
    return L**2 * G


# ---------------------------------------------------------------------------
# Inf-sup constant on the reference interval


def infsup_reference(k: int) -> float:
    """Smallest singular value of the coupling of ``P_{k-1}`` with ``P_{k+1} cap H^1_0``."""
    if not 1 <= k <= 8:
        raise ValueError("k must lie in 1..8")
    rule = edge_quadrature(2 * k + 4)
    x, w = rule.nodes, rule.weights
    V = x[:, None] ** np.arange(k)
    Bv = V * (x * (1.0 - x))[:, None]
    Tq = orthonormalize((V.T * w) @ V)
    Tb = orthonormalize((Bv.T * w) @ Bv)
    C = Tq @ ((V.T * w) @ Bv) @ Tb.T
    return float(np.linalg.svd(C, compute_uv=False).min())
