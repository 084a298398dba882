"""Stabilization matrices built from dual boundary forms and generalized inverses.

A stabilization acts on local DOF vectors. For the dual kinds it is assembled
as the generalized inverse of a bilinear form on piecewise polynomials on the
element boundary, split into an edge-constant block and per-edge
average-free blocks.
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .exceptions import DomainError, NotSymmetric, SingularGram, SingularSaddle


class StabKind(enum.Enum):
    DOFI = "dofi"
    L2 = "l2"
    SLB = "slb"
    RLB = "rlb"
    WAV = "wav"

    @classmethod
    def parse(cls, name) -> "StabKind":
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).strip().lower())
        except ValueError as exc:
            choices = ", ".join(k.value for k in cls)
            raise ValueError(f"unknown stabilization {name!r}; choose from {choices}") from exc


DEFAULT_STAB = StabKind.RLB


# ---------------------------------------------------------------------------
# Generalized inverse


def generalized_inverse(S, P) -> np.ndarray:
    """Reflexive generalized inverse of ``S`` fixed by the constraint rows ``P``.

    Column ``i`` of the result is the ``w`` part of the solution of
    ``[[S, P^T], [P, 0]] [w; lam] = [e_i; 0]``.
    """
    S = np.atleast_2d(np.asarray(S, dtype=float))
    P = np.atleast_2d(np.asarray(P, dtype=float))
    n = S.shape[0]
    m = P.shape[0]
    K = np.zeros((n + m, n + m))
    K[:n, :n] = S
    K[:n, n:] = P.T
    K[n:, :n] = P
    scale = max(np.abs(K).max(), 1e-300)
    with warnings.catch_warnings():
        # singularity is detected from the pivots below
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(K, check_finite=False)
    if np.abs(np.diag(lu)).min() < 1e-13 * scale:
        raise SingularSaddle("saddle matrix is singular")
    rhs = np.zeros((n + m, n))
    rhs[:n] = np.eye(n)
    X = sla.lu_solve((lu, piv), rhs, check_finite=False)[:n]
    return 0.5 * (X + X.T)


def double_dagger(S_dagger, P_star) -> np.ndarray:
    """Generalized inverse of ``S_dagger`` under the adjoint constraint ``P_star``."""
    return generalized_inverse(S_dagger, P_star)


def matrix_sqrt_spd(A, clip: float = 1e-12) -> np.ndarray:
    """Symmetric PSD square root by eigendecomposition.

    Eigenvalues above ``-clip * ||A||`` are clipped to zero.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    norm = np.abs(A).max()
    if np.abs(A - A.T).max() > 1e-10 * max(norm, 1e-300):
        raise NotSymmetric("matrix is not symmetric")
    lam, Q = np.linalg.eigh(0.5 * (A + A.T))
    if lam.size and lam.min() < -clip * max(abs(lam).max(), 1e-300):
        raise NotSymmetric(f"matrix has eigenvalue {lam.min():.3e} < 0")
    root = (Q * np.sqrt(np.clip(lam, 0.0, None))) @ Q.T
    return 0.5 * (root + root.T)


# ---------------------------------------------------------------------------
# Edge-constant blocks


def constant_constraint(edge_lengths) -> np.ndarray:
    """Constraint row ``h_e / |dP|`` selecting the boundary average."""
    h = np.asarray(edge_lengths, dtype=float)
    return (h / h.sum())[None, :]


def s0_l2(edge_lengths, perimeter=None) -> np.ndarray:
    """Weighted L2 form on edge constants with the boundary average removed.

    Quadratic form ``sum_e h_e^2 (eta_e - avg(eta))^2``.
    """
    h = np.asarray(edge_lengths, dtype=float)
    L = h.sum() if perimeter is None else float(perimeter)
    B = np.eye(len(h)) - np.outer(np.ones(len(h)), h / L)
    S = B.T @ (h[:, None] ** 2 * B)
    return 0.5 * (S + S.T)


def dual_hat_gram(edge_lengths) -> np.ndarray:
    """``G[i, j] = int_{e_i} phi_j`` for hats on the midpoint dual grid."""
    h = np.asarray(edge_lengths, dtype=float)
    n = len(h)
    if n < 3:
        raise SingularGram("need at least three edges")
    G = np.zeros((n, n))
    for i in range(n):
        im = (i - 1) % n
        ip = (i + 1) % n
        d_left = 0.5 * (h[im] + h[i])  # dual cell between midpoints i-1 and i
        d_right = 0.5 * (h[i] + h[ip])
        half = 0.5 * h[i]
        G[i, i] = half * (1.0 - half / (2.0 * d_left)) + half * (1.0 - half / (2.0 * d_right))
        G[i, im] += half * half / (2.0 * d_left)
        G[i, ip] += half * half / (2.0 * d_right)
    return G


def dual_hat_basis(edge_lengths) -> np.ndarray:
    """Coefficients ``C = G^{-1}`` of the dual basis in the hat basis.

    Column ``i`` of ``C`` holds the hat coefficients of the function whose
    integral over edge ``j`` is ``delta_ij``.
    """
    G = dual_hat_gram(edge_lengths)
    try:
        lu = sla.lu_factor(G, check_finite=False)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise SingularGram("dual Gram matrix is singular") from exc
    if np.abs(np.diag(lu[0])).min() < 1e-14 * np.abs(G).max():
        raise SingularGram("dual Gram matrix is singular")
    return sla.lu_solve(lu, np.eye(len(G)), check_finite=False)


def periodic_hat_matrices(edge_lengths) -> tuple[np.ndarray, np.ndarray]:
    """Stiffness and mass of periodic P1 hats on the midpoint dual grid."""
    h = np.asarray(edge_lengths, dtype=float)
    n = len(h)
    d = 0.5 * (h + np.roll(h, -1))  # cell j joins midpoints j and j+1
    R = np.zeros((n, n))
    M = np.zeros((n, n))
    for j in range(n):
        jp = (j + 1) % n
        R[j, j] += 1.0 / d[j]
        R[jp, jp] += 1.0 / d[j]
        R[j, jp] -= 1.0 / d[j]
        R[jp, j] -= 1.0 / d[j]
        M[j, j] += d[j] / 3.0
        M[jp, jp] += d[j] / 3.0
        M[j, jp] += d[j] / 6.0
        M[jp, j] += d[j] / 6.0
    return R, M


def lb_matrices(edge_lengths) -> tuple[np.ndarray, np.ndarray]:
    """Laplace-Beltrami stiffness and mass in the dual basis."""
    C = dual_hat_basis(edge_lengths)
    R, M = periodic_hat_matrices(edge_lengths)
    Rt = C.T @ R @ C
    Mt = C.T @ M @ C
    return 0.5 * (Rt + Rt.T), 0.5 * (Mt + Mt.T)


def s0_slb(geom) -> np.ndarray:
    """Scaled Laplace-Beltrami block ``h_P * R~`` (acts on edge integrals)."""
    Rt, _ = lb_matrices(geom.lengths)
    return geom.diameter * Rt


def s0_rlb(geom) -> np.ndarray:
    """Square-root Laplace-Beltrami block ``M^1/2 (M^-1/2 R M^-1/2)^1/2 M^1/2``."""
    Rt, Mt = lb_matrices(geom.lengths)
    lam, Q = np.linalg.eigh(Mt)
    if lam.min() <= 0:
        raise SingularGram("dual mass matrix is not positive definite")
    m_half = (Q * np.sqrt(lam)) @ Q.T
    m_ihalf = (Q / np.sqrt(lam)) @ Q.T
    X = m_ihalf @ Rt @ m_ihalf
    # the square root would lift the round-off kernel eigenvalue to ~sqrt(eps);
    # the kernel of X is known exactly, so project it out
    z = m_half @ geom.lengths
    z /= np.linalg.norm(z)
    proj = np.eye(len(z)) - np.outer(z, z)
    root = proj @ matrix_sqrt_spd(0.5 * (X + X.T)) @ proj
    out = m_half @ root @ m_half
    return 0.5 * (out + out.T)


def s0_block(geom, kind: StabKind) -> np.ndarray:
    """Edge-constant block ``s0`` of the dual form, in the edge-characteristic basis."""
    kind = StabKind.parse(kind)
    if kind is StabKind.L2:
        return s0_l2(geom.lengths)
    if kind is StabKind.WAV:
        from .wavelet import s0_wav_matrix

        return s0_wav_matrix(geom)
    if kind in (StabKind.SLB, StabKind.RLB):
        sigma = s0_slb(geom) if kind is StabKind.SLB else s0_rlb(geom)
        # the block whose generalized inverse is the Laplace-Beltrami matrix
        return generalized_inverse(sigma, np.ones((1, geom.n_edges)) / geom.perimeter)
    raise ValueError(f"{kind} has no edge-constant block")


def constant_block_inverse(geom, kind: StabKind) -> np.ndarray:
    """Generalized inverse of the edge-constant block, acting on edge integrals."""
    kind = StabKind.parse(kind)
    if kind is StabKind.SLB:
        return s0_slb(geom)
    if kind is StabKind.RLB:
        return s0_rlb(geom)
    return generalized_inverse(s0_block(geom, kind), constant_constraint(geom.lengths))


# ---------------------------------------------------------------------------
# Boundary form and DOF-space stabilization


def sigma_star(geom, k: int, s0) -> np.ndarray:
    """Dual boundary form on piecewise polynomials of degree ``k - 1``.

    Coordinates are edge-major: for edge ``e`` the coefficients of the scaled
    orthonormal edge basis ``q_0 = 1, q_1, ..., q_{k-1}``. The constant
    coefficients couple through ``s0``; every average-free coefficient carries
    ``h_e**2`` on the diagonal.
    """
    n_e = geom.n_edges
    S = np.zeros((n_e * k, n_e * k))
    idx0 = np.arange(n_e) * k
    S[np.ix_(idx0, idx0)] = s0
    for e in range(n_e):
        for i in range(1, k):
            S[e * k + i, e * k + i] = geom.lengths[e] ** 2
    return S


@dataclass(frozen=True)
class StabMatrix:
    """Symmetric PSD stabilization matrix on local DOFs.

    Attributes
    ----------
    matrix : (n_loc, n_loc) array
    kind : StabKind
    boundary_only : True when interior DOFs carry no stabilization
    """

    matrix: np.ndarray
    kind: StabKind
    boundary_only: bool


def stabilization_matrix(geom, k: int, kind, n_interior: int | None = None) -> StabMatrix:
    """DOF-space stabilization ``Sigma`` for one element.

    The DOFs are edge moments ``(1/h_e) int_e v q_i`` followed by interior
    moments. In these coordinates the average-free edge blocks are the
    identity, and the constant block is ``H S0^+ H`` with ``H = diag(h_e)``.
    """
    kind = StabKind.parse(kind)
    n_e = geom.n_edges
    if n_interior is None:
        n_interior = k * (k - 1) // 2
    n = n_e * k + n_interior
    if kind is StabKind.DOFI:
        return StabMatrix(np.eye(n), kind, False)
    sig = np.zeros((n, n))
    h = geom.lengths
    block = constant_block_inverse(geom, kind)
    idx0 = np.arange(n_e) * k
    sig[np.ix_(idx0, idx0)] = h[:, None] * block * h[None, :]
    for i in range(1, k):
        sig[idx0 + i, idx0 + i] = 1.0
    return StabMatrix(0.5 * (sig + sig.T), kind, True)


# ---------------------------------------------------------------------------
# Steinbach admissibility constants


def steinbach_g(a: float) -> float:
    """``g(a)`` such that the local projector eigenvalues are ``1 +- g(a)``."""
    if not 0.0 < a < 1.0:
        raise DomainError("a must lie in (0, 1)")
    num = 0.5 * math.sqrt(a + 1.0) * (3.0 * a * a - 3.0 * a + 1.0)
    return num / (math.sqrt(2.0 - a) * (a - a**3))


def steinbach_constants(tol: float = 1e-15) -> tuple[float, float]:
    """Root ``a0`` of ``g(a) = 1`` in (0, 1/2) and ``c0 = (1 - a0) / a0``."""
    lo, hi = 1e-6, 0.5  # g(lo) > 1 > g(1/2) = 1/3
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if steinbach_g(mid) > 1.0:
            lo = mid
        else:
            hi = mid
    a0 = 0.5 * (lo + hi)
    return a0, (1.0 - a0) / a0
