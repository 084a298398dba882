"""Element-level operators of the nonconforming virtual element space.

Local DOFs of an element with ``n_e`` edges, in this order:

* edge moments ``(1/h_e) int_e v q_i`` for ``i < k``, edge-major, where
  ``q_i(s) = sqrt(2i+1) P_i(2s)`` and ``s`` runs over [-1/2, 1/2] in the
  edge's global direction;
* interior moments ``(1/|P|) int_P v psi_b`` for the first ``dim P_{k-2}``
  functions of an orthonormal polynomial basis ``psi`` of ``P_k(P)``.

Polynomials on the element are stored as coefficient vectors in the ``psi``
basis, which is orthonormal for ``(1/|P|) int_P``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ..exceptions import SingularProjector
from ..poly import (
    MonomialBasis,
    edge_legendre,
    edge_quadrature,
    orthonormalize,
    poly_calculus,
    poly_dim,
    polygon_quadrature,
)


def local_dof_count(n_edges: int, k: int) -> int:
    return n_edges * k + k * (k - 1) // 2


@dataclass(eq=False)
class LocalElementOperators:
    """Projector and moment matrices of one element.

    Attributes
    ----------
    proj_nabla : (dim P_k, n) matrix of the elliptic projector
    dof_of_poly : (n, dim P_k) DOFs of the basis polynomials
    moments_full : (dim P_k, n) scaled moments up to degree ``k`` in the
        enhanced space; equals the L2 projector in the orthonormal basis
    grad_l2_proj : (2, dim P_{k-1}, n) L2 projection of the gradient
    stiffness_gram : (dim P_k, dim P_k) ``int_P grad psi_i . grad psi_j``
    """

    geom: object
    k: int
    basis: MonomialBasis
    transform: np.ndarray
    proj_nabla: np.ndarray
    dof_of_poly: np.ndarray
    moments_full: np.ndarray
    grad_l2_proj: np.ndarray
    stiffness_gram: np.ndarray

    @property
    def n_dofs(self) -> int:
        return self.proj_nabla.shape[1]

    @property
    def l2_proj(self) -> np.ndarray:
        return self.moments_full

    @cached_property
    def consistency(self) -> np.ndarray:
        c = self.proj_nabla.T @ self.stiffness_gram @ self.proj_nabla
        return 0.5 * (c + c.T)

    @cached_property
    def dof_projector(self) -> np.ndarray:
        """DOF matrix of the elliptic projector, ``D @ Pi``."""
        return self.dof_of_poly @ self.proj_nabla

    def psi(self, points) -> np.ndarray:
        """Orthonormal basis values at ``points``, shape ``(n, dim P_k)``."""
        return self.basis.evaluate(points) @ self.transform.T

    def poly_coefficients(self, func, order: int | None = None) -> np.ndarray:
        """Coefficients of the L2 projection of ``func`` onto ``P_k``."""
        rule = polygon_quadrature(self.geom, order or max(2 * self.k + 2, 12))
        vals = np.asarray(func(rule.nodes[:, 0], rule.nodes[:, 1]), dtype=float)
        return self.psi(rule.nodes).T @ (rule.weights * vals) / self.geom.area

    def dofs_of(self, func, order: int | None = None) -> np.ndarray:
        """DOF vector of a function given as ``func(x, y)`` (by quadrature)."""
        geom, k = self.geom, self.k
        rule = edge_quadrature(order or max(2 * k + 2, 20))
        s = rule.nodes - 0.5
        start = geom.param_start
        d = geom.param_dir
        pts = 0.5 * (start + start + d)[:, None, :] + s[None, :, None] * d[:, None, :]
        vals = np.asarray(func(pts[..., 0], pts[..., 1]), dtype=float)
        q = edge_legendre(k, s)
        edge = np.einsum("g,gi,lg->li", rule.weights, q, vals).ravel()
        nk2 = poly_dim(k - 2)
        if nk2 == 0:
            return edge
        return np.concatenate([edge, self.poly_coefficients(func, order)[:nk2]])


def local_operators(geom, k: int) -> LocalElementOperators:
    """Build all DOF-based projection matrices of one element."""
    if k < 1:
        raise ValueError("degree k must be >= 1")
    n_e = geom.n_edges
    nk = poly_dim(k)
    nk1 = poly_dim(k - 1)
    nk2 = poly_dim(k - 2)
    n = n_e * k + nk2
    area = geom.area
    basis = MonomialBasis(k, tuple(geom.centroid), geom.diameter)

    rule = polygon_quadrature(geom, 2 * k)
    m = basis.evaluate(rule.nodes)
    gram = (m.T * rule.weights) @ m / area
    T = orthonormalize(gram)
    Tinv = np.linalg.inv(T)
    calc = poly_calculus(basis)
    # differentiation in the orthonormal basis acts on coefficient rows:
    # d/dx psi = Ax psi
    Ax = T @ calc.dx.T @ Tinv
    Ay = T @ calc.dy.T @ Tinv
    Ax[np.abs(Ax) < 1e-15 * np.abs(Ax).max(initial=1.0)] = 0.0
    Ay[np.abs(Ay) < 1e-15 * np.abs(Ay).max(initial=1.0)] = 0.0
    lap = Ax @ Ax + Ay @ Ay
    stiff = area * (Ax @ Ax.T + Ay @ Ay.T)
    stiff = 0.5 * (stiff + stiff.T)

    # edge traces, expanded in the edge Legendre basis
    er = edge_quadrature(2 * k + 1)
    s = er.nodes - 0.5
    start = geom.param_start
    d = geom.param_dir
    mid = start + 0.5 * d
    pts = (mid[:, None, :] + s[None, :, None] * d[:, None, :]).reshape(-1, 2)
    mv = basis.evaluate(pts)
    psi = (mv @ T.T).reshape(n_e, len(s), nk)
    gx = (mv @ calc.dx @ T.T).reshape(n_e, len(s), nk)
    gy = (mv @ calc.dy @ T.T).reshape(n_e, len(s), nk)
    dn = gx * geom.normals[:, 0, None, None] + gy * geom.normals[:, 1, None, None]
    q = edge_legendre(k, s)
    trace = np.einsum("g,gi,lgj->lij", er.weights, q, psi)
    ntrace = np.einsum("g,gi,lgj->lij", er.weights, q, dn)
    h = geom.lengths

    B = np.zeros((nk, n))
    B[:, : n_e * k] = (h[:, None, None] * ntrace).transpose(2, 0, 1).reshape(nk, n_e * k)
    B[:, n_e * k :] = -area * lap[:, :nk2]
    G = stiff.copy()
    G[0] = h @ trace[:, 0, :]
    B[0] = 0.0
    B[0, np.arange(n_e) * k] = h
    try:
        proj = np.linalg.solve(G, B)
    except np.linalg.LinAlgError as exc:
        raise SingularProjector("elliptic projector system is singular") from exc
    if np.linalg.cond(G) > 1e13:
        raise SingularProjector("elliptic projector system is ill-conditioned")

    D = np.zeros((n, nk))
    D[: n_e * k] = trace.reshape(n_e * k, nk)
    D[n_e * k :, :nk2] = np.eye(nk2)

    moments = np.zeros((nk, n))
    moments[:nk2, n_e * k :] = np.eye(nk2)
    moments[nk2:] = proj[nk2:]

    # int_P dv/dx psi_a = -int_P v dpsi_a/dx + int_dP v psi_a n_x
    grad = np.zeros((2, nk1, n))
    for c, A in enumerate((Ax, Ay)):
        bnd = h[:, None, None] * geom.normals[:, c, None, None] * trace[:, :, :nk1]
        grad[c, :, : n_e * k] = bnd.transpose(2, 0, 1).reshape(nk1, n_e * k)
        grad[c, :, n_e * k :] = -area * A[:nk1, :nk2]
    grad /= area
    return LocalElementOperators(
        geom=geom,
        k=k,
        basis=basis,
        transform=T,
        proj_nabla=proj,
        dof_of_poly=D,
        moments_full=moments,
        grad_l2_proj=grad,
        stiffness_gram=stiff,
    )


def elliptic_projector(geom, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(proj_nabla, dof_of_poly)`` for one element."""
    ops = local_operators(geom, k)
    return ops.proj_nabla, ops.dof_of_poly


def enhanced_moments(ops: LocalElementOperators, dofs) -> np.ndarray:
    """Scaled interior moments of degree at most ``k`` of the enhanced function."""
    return ops.moments_full @ np.asarray(dofs, dtype=float)


def local_consistency(ops: LocalElementOperators) -> np.ndarray:
    return ops.consistency


def local_stiffness(ops: LocalElementOperators, stab) -> np.ndarray:
    """Consistency plus stabilization of the non-polynomial part."""
    sigma = getattr(stab, "matrix", stab)
    E = np.eye(ops.n_dofs) - ops.dof_projector
    K = ops.consistency + E.T @ sigma @ E
    return 0.5 * (K + K.T)


def local_rhs(ops: LocalElementOperators, f, order: int | None = None) -> np.ndarray:
    """Load vector ``int_P (Pi0_k f) phi_i`` for every local basis function."""
    if f is None:
        return np.zeros(ops.n_dofs)
    coef = ops.poly_coefficients(f, order)
    return ops.geom.area * (ops.moments_full.T @ coef)
