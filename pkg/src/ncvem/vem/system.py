"""Global assembly, Dirichlet elimination, linear solve and error norms."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..exceptions import NcvemError, SolveFailure
from ..mesh import PolygonalMesh, element_geometry
from ..poly import edge_legendre, edge_quadrature, poly_dim, polygon_quadrature
from ..stab import StabKind, stabilization_matrix
from .local import LocalElementOperators, local_operators, local_rhs

DIRECT_LIMIT = 40000


@dataclass(frozen=True)
class DofLayout:
    """Global numbering: edge moments edge-major, then interior moments per element."""

    k: int
    n_edges: int
    n_elements: int
    boundary_edges: np.ndarray

    @property
    def n_interior(self) -> int:
        return self.k * (self.k - 1) // 2

    @property
    def n_dofs(self) -> int:
        return self.n_edges * self.k + self.n_elements * self.n_interior

    def element_dofs(self, mesh: PolygonalMesh, elem: int) -> np.ndarray:
        k = self.k
        edges = mesh.element_edges[elem]
        edge_part = (edges[:, None] * k + np.arange(k)).ravel()
        start = self.n_edges * k + elem * self.n_interior
        return np.concatenate([edge_part, np.arange(start, start + self.n_interior)])

    def boundary_dofs(self) -> np.ndarray:
        return (self.boundary_edges[:, None] * self.k + np.arange(self.k)).ravel()


def dof_layout(mesh: PolygonalMesh, k: int) -> DofLayout:
    if k < 1:
        raise ValueError("degree k must be >= 1")
    return DofLayout(k, mesh.n_edges, mesh.n_elements, np.flatnonzero(mesh.boundary))


class Discretization:
    """Mesh plus degree, with element operators cached by element shape.

    Elements that coincide up to translation (with the same edge orientation
    pattern) share one :class:`LocalElementOperators` instance for the
    translation-invariant parts; only the geometry object differs.
    """

    def __init__(self, mesh: PolygonalMesh, k: int):
        self.mesh = mesh
        self.k = k
        self.layout = dof_layout(mesh, k)
        self.geoms = [element_geometry(mesh, p) for p in range(mesh.n_elements)]
        self._shape_key = []
        self._ops_by_key: dict = {}
        for g in self.geoms:
            rel = np.round((g.vertices - g.vertices[0]) / g.diameter, 11) + 0.0
            key = (rel.tobytes(), g.orient.tobytes(), round(g.diameter, 14))
            self._shape_key.append(key)

    def shape_key(self, elem: int):
        return self._shape_key[elem]

    def operators(self, elem: int) -> LocalElementOperators:
        """Local operators of element ``elem`` with its own geometry."""
        key = self._shape_key[elem]
        ref = self._ops_by_key.get(key)
        geom = self.geoms[elem]
        if ref is None:
            try:
                ref = local_operators(geom, self.k)
            except NcvemError as exc:
                raise type(exc)(f"element {elem}: {exc}") from exc
            self._ops_by_key[key] = ref
        if ref.geom is geom:
            return ref
        shift = geom.centroid - ref.geom.centroid
        basis = type(ref.basis)(ref.basis.degree, tuple(np.asarray(ref.basis.center) + shift), ref.basis.scale)
        ops = LocalElementOperators(
            geom=geom,
            k=ref.k,
            basis=basis,
            transform=ref.transform,
            proj_nabla=ref.proj_nabla,
            dof_of_poly=ref.dof_of_poly,
            moments_full=ref.moments_full,
            grad_l2_proj=ref.grad_l2_proj,
            stiffness_gram=ref.stiffness_gram,
        )
        # share cached derived matrices
        ops.__dict__.update({k: v for k, v in ref.__dict__.items() if k in ("consistency", "dof_projector")})
        return ops


@dataclass(eq=False)
class GlobalSystem:
    """Global stiffness ``A``, load ``b`` and Dirichlet bookkeeping.

    ``A`` is kept in factored low-rank form. With ``Pi`` the stacked elliptic
    projectors, ``Y = Sigma D`` per element and ``K = G + D^T Sigma D``,

        A = Sigma + Pi^T K Pi - Y Pi - Pi^T Y^T

    which is the sum of the element matrices ``Pi^T G Pi + (I - D Pi)^T Sigma (I - D Pi)``.
    """

    n: int
    sigma: sp.csr_matrix
    proj: sp.csr_matrix
    core: sp.csr_matrix
    coupling: sp.csr_matrix
    load: np.ndarray
    diag: np.ndarray
    dirichlet_dofs: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    dirichlet_values: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def matvec(self, x) -> np.ndarray:
        z = self.proj @ x
        return self.sigma @ x + self.proj.T @ (self.core @ z) - self.coupling @ z - self.proj.T @ (self.coupling.T @ x)

    def matrix(self) -> sp.csr_matrix:
        """Assembled sparse stiffness matrix."""
        cp = self.coupling @ self.proj
        A = self.sigma + self.proj.T @ self.core @ self.proj - cp - cp.T
        A = sp.csr_matrix(A)
        A.sum_duplicates()
        return A

    @property
    def free_dofs(self) -> np.ndarray:
        mask = np.ones(self.n, dtype=bool)
        mask[self.dirichlet_dofs] = False
        return np.flatnonzero(mask)

    def lifted(self) -> np.ndarray:
        x = np.zeros(self.n)
        x[self.dirichlet_dofs] = self.dirichlet_values
        return x


def _coo(rows, cols, vals, shape):
    return sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=shape
    ).tocsr()


def assemble(disc: Discretization, stab_kind, f=None, g=None) -> GlobalSystem:
    """Assemble the global system; ``f`` and ``g`` are callables of ``(x, y)``."""
    kind = StabKind.parse(stab_kind)
    mesh, layout, k = disc.mesh, disc.layout, disc.k
    nk = poly_dim(k)
    n = layout.n_dofs
    sig_r, sig_c, sig_v = [], [], []
    pr_r, pr_c, pr_v = [], [], []
    co_r, co_c, co_v = [], [], []
    cp_r, cp_c, cp_v = [], [], []
    load = np.zeros(n)
    diag = np.zeros(n)
    stab_cache: dict = {}
    for p in range(mesh.n_elements):
        ops = disc.operators(p)
        key = disc.shape_key(p)
        cached = stab_cache.get(key)
        if cached is None:
            try:
                sigma = stabilization_matrix(ops.geom, k, kind).matrix
            except NcvemError as exc:
                raise type(exc)(f"element {p}: {exc}") from exc
            Pi, D = ops.proj_nabla, ops.dof_of_poly
            Y = sigma @ D
            core = ops.stiffness_gram + D.T @ Y
            local_diag = np.diag(sigma) + np.einsum("ai,ab,bi->i", Pi, core, Pi) - 2.0 * np.einsum("ia,ai->i", Y, Pi)
            cached = (sigma, Y, core, local_diag)
            stab_cache[key] = cached
        sigma, Y, core, local_diag = cached
        dofs = layout.element_dofs(mesh, p)
        nl = len(dofs)
        rows = p * nk + np.arange(nk)
        nz = np.nonzero(sigma)
        sig_r.append(dofs[nz[0]])
        sig_c.append(dofs[nz[1]])
        sig_v.append(sigma[nz])
        pr_r.append(np.repeat(rows, nl))
        pr_c.append(np.tile(dofs, nk))
        pr_v.append(ops.proj_nabla.ravel())
        co_r.append(np.repeat(rows, nk))
        co_c.append(np.tile(rows, nk))
        co_v.append(core.ravel())
        cp_r.append(np.repeat(dofs, nk))
        cp_c.append(np.tile(rows, nl))
        cp_v.append(Y.ravel())
        diag[dofs] += local_diag
        if f is not None:
            load[dofs] += local_rhs(ops, f)
    R = mesh.n_elements * nk
    system = GlobalSystem(
        n=n,
        sigma=_coo(sig_r, sig_c, sig_v, (n, n)),
        proj=_coo(pr_r, pr_c, pr_v, (R, n)),
        core=_coo(co_r, co_c, co_v, (R, R)),
        coupling=_coo(cp_r, cp_c, cp_v, (n, R)),
        load=load,
        diag=diag,
    )
    if g is not None:
        apply_dirichlet(system, disc, g)
    return system


def boundary_moments(disc: Discretization, g, order: int = 40) -> np.ndarray:
    """Edge moments ``(1/h_e) int_e g q_i`` of ``g`` on every boundary edge."""
    mesh, k = disc.mesh, disc.k
    edges = disc.layout.boundary_edges
    rule = edge_quadrature(order)
    s = rule.nodes - 0.5
    a = mesh.vertices[mesh.edges[edges, 0]]
    b = mesh.vertices[mesh.edges[edges, 1]]
    pts = 0.5 * (a + b)[:, None, :] + s[None, :, None] * (b - a)[:, None, :]
    vals = np.asarray(g(pts[..., 0], pts[..., 1]), dtype=float)
    vals = np.broadcast_to(vals, pts.shape[:2])
    q = edge_legendre(k, s)
    return np.einsum("g,gi,lg->li", rule.weights, q, vals).ravel()


def apply_dirichlet(system: GlobalSystem, disc: Discretization, g) -> GlobalSystem:
    """Fix every boundary edge moment to the corresponding moment of ``g``."""
    system.dirichlet_dofs = disc.layout.boundary_dofs()
    system.dirichlet_values = boundary_moments(disc, g)
    return system


def solve(system: GlobalSystem, method: str = "auto", rtol: float = 1e-11) -> np.ndarray:
    """Solve for all DOFs, with Dirichlet DOFs taken from the system.

    ``method`` is ``"direct"`` (sparse LU of the assembled free block), ``"cg"``
    (Jacobi-preconditioned conjugate gradients on the factored operator) or
    ``"auto"``.
    """
    free = system.free_dofs
    x = system.lifted()
    rhs = system.load[free] - system.matvec(x)[free]
    if method == "auto":
        method = "direct" if len(free) <= DIRECT_LIMIT else "cg"
    bnorm = np.linalg.norm(rhs)
    if bnorm == 0.0:
        return x

    def apply(v):
        y = np.zeros(system.n)
        y[free] = v
        return system.matvec(y)[free]

    if method == "direct":
        A = system.matrix()[free][:, free].tocsc()
        lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A")
        xf = lu.solve(rhs)
        res = np.linalg.norm(A @ xf - rhs) / bnorm
        if res > rtol:
            # one step of iterative refinement
            xf = xf + lu.solve(rhs - A @ xf)
            res = np.linalg.norm(A @ xf - rhs) / bnorm
    elif method == "cg":
        op = spla.LinearOperator((len(free), len(free)), matvec=apply, dtype=float)
        dinv = 1.0 / system.diag[free]
        prec = spla.LinearOperator(op.shape, matvec=lambda v: dinv * v, dtype=float)
        xf, info = spla.cg(op, rhs, rtol=0.05 * rtol, atol=0.0, M=prec, maxiter=20 * len(free))
        res = np.linalg.norm(apply(xf) - rhs) / bnorm
    else:
        raise ValueError(f"unknown solve method {method!r}")
    if not res <= rtol:
        raise SolveFailure(f"relative residual {res:.3e} above {rtol:.1e}", residual=res)
    x[free] = xf
    return x


def compute_errors(disc: Discretization, uh, u, grad_u, order: int | None = None) -> tuple[float, float]:
    """Relative errors of ``Pi0_k uh`` against ``u`` and of ``Pi0_{k-1} grad uh`` against ``grad u``."""
    k = disc.k
    nk1 = poly_dim(k - 1)
    order = order or max(2 * k + 2, 12)
    num0 = den0 = num1 = den1 = 0.0
    for p in range(disc.mesh.n_elements):
        ops = disc.operators(p)
        loc = uh[disc.layout.element_dofs(disc.mesh, p)]
        rule = polygon_quadrature(ops.geom, order)
        x, y = rule.nodes[:, 0], rule.nodes[:, 1]
        psi = ops.psi(rule.nodes)
        vh = psi @ (ops.moments_full @ loc)
        gxh = psi[:, :nk1] @ (ops.grad_l2_proj[0] @ loc)
        gyh = psi[:, :nk1] @ (ops.grad_l2_proj[1] @ loc)
        uv = np.broadcast_to(np.asarray(u(x, y), dtype=float), x.shape)
        gx, gy = (np.broadcast_to(np.asarray(c, dtype=float), x.shape) for c in grad_u(x, y))
        w = rule.weights
        num0 += w @ (uv - vh) ** 2
        den0 += w @ uv**2
        num1 += w @ ((gx - gxh) ** 2 + (gy - gyh) ** 2)
        den1 += w @ (gx**2 + gy**2)
    e0 = np.sqrt(num0 / den0) if den0 > 0 else np.sqrt(num0)
    e1 = np.sqrt(num1 / den1) if den1 > 0 else np.sqrt(num1)
    return float(e0), float(e1)


def interpolate(disc: Discretization, func) -> np.ndarray:
    """Global DOF vector of ``func`` (edge and interior moments by quadrature)."""
    x = np.zeros(disc.layout.n_dofs)
    for p in range(disc.mesh.n_elements):
        ops = disc.operators(p)
        x[disc.layout.element_dofs(disc.mesh, p)] = ops.dofs_of(func)
    return x
