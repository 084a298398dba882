"""Auxiliary checks of the stabilizations against the reference oracles.

Everything here is reporting code: condition numbers of the edge-constant
blocks, ratios of the dual boundary form to the Riesz oracle, the wavelet to
Fourier energy ratio and the Steinbach constants.
"""
from __future__ import annotations

import math

import numpy as np
import scipy.linalg as sla

from .mesh import element_geometry, generate_mesh
from .oracle import fourier_boundary_gram, fourier_minus_half, riesz_dual_seminorm
from .stab import StabKind, s0_block, sigma_star, stabilization_matrix, steinbach_constants
from .vem.local import local_operators, local_stiffness
from .wavelet import wavelet_energy

ALL_KINDS = tuple(k.value for k in StabKind)
DUAL_KINDS = ("slb", "rlb", "wav")


def edge_constant_form(geom, kind) -> np.ndarray:
    """Edge-constant block of each stabilization, in edge-characteristic coordinates.

    For ``dofi`` this is ``diag(h_e**2)``, the form the identity on edge
    moments induces on edge constants.
    """
    kind = StabKind.parse(kind)
    if kind is StabKind.DOFI:
        return np.diag(geom.lengths**2)
    return s0_block(geom, kind)


def block_condition(geom, kind, gram=None) -> float:
    """Condition number of the edge-constant block relative to the Fourier form.

    Both forms are restricted to edge constants with zero boundary integral;
    the value is the ratio of the extreme generalized eigenvalues.
    """
    h = geom.lengths
    if gram is None:
        gram = fourier_boundary_gram(h)
    Z = sla.null_space(h[None, :])
    S = Z.T @ edge_constant_form(geom, kind) @ Z
    F = Z.T @ gram @ Z
    lam = sla.eigh(0.5 * (S + S.T), 0.5 * (F + F.T), eigvals_only=True)
    return float(lam.max() / lam.min())


def stiffness_condition(ops, kind) -> float:
    """Condition number of the local stiffness on the complement of constants."""
    K = local_stiffness(ops, stabilization_matrix(ops.geom, ops.k, kind))
    const = ops.dof_of_poly[:, 0]
    Z = sla.null_space(const[None, :])
    lam = np.linalg.eigvalsh(Z.T @ K @ Z)
    if lam.min() <= 0:
        return math.inf
    return float(lam.max() / lam.min())


def element_conditions(mesh, k: int = 1, kinds=ALL_KINDS) -> list[dict]:
    """Per-element block and stiffness condition numbers.

    Elements with identical shape (up to translation) are computed once.
    """
    rows = []
    seen: dict = {}
    for p in range(mesh.n_elements):
        geom = element_geometry(mesh, p)
        key = (np.round((geom.vertices - geom.vertices[0]) / geom.diameter, 11) + 0.0).tobytes()
        if key not in seen:
            gram = fourier_boundary_gram(geom.lengths)
            ops = local_operators(geom, k)
            entry = {"ratio": float(geom.diameter / geom.lengths.min())}
            for kind in kinds:
                entry[f"block_{kind}"] = block_condition(geom, kind, gram)
                entry[f"stiff_{kind}"] = stiffness_condition(ops, kind)
            seen[key] = entry
        rows.append({"element": p, **seen[key]})
    return rows


def sigma_ratios(mesh, k: int = 2, kinds=DUAL_KINDS, n_samples: int = 20, n_elements: int = 3, seed: int = 0):
    """Ratios ``sigma*(eta, eta) / |eta|_{-1}^2`` for random boundary data.

    Returns ``{kind: array of ratios}`` over ``n_samples`` draws spread over
    up to ``n_elements`` elements chosen at random.
    """
    rng = np.random.default_rng(seed)
    elems = rng.choice(mesh.n_elements, size=min(n_elements, mesh.n_elements), replace=False)
    out = {kind: [] for kind in kinds}
    for s in range(n_samples):
        geom = element_geometry(mesh, int(elems[s % len(elems)]))
        eta = rng.standard_normal((geom.n_edges, k))
        ref = riesz_dual_seminorm(geom, eta)
        v = eta.ravel()
        for kind in kinds:
            S = sigma_star(geom, k, s0_block(geom, kind))
            out[kind].append(float(v @ S @ v / ref))
    return {kind: np.array(vals) for kind, vals in out.items()}


def wavelet_fourier_ratios(levels=range(4, 10), n_samples: int = 50, seed: int = 0) -> dict:
    """Wavelet energy over the Fourier form for random data on uniform grids.

    The input on a grid of ``2**M`` cells is scaled by ``2**(-M/2)`` into
    finest-level coefficients. Returns ``{M: array of ratios}``.
    """
    rng = np.random.default_rng(seed)
    out = {}
    for M in levels:
        vals = []
        for _ in range(n_samples):
            v = rng.standard_normal(2**M)
            v -= v.mean()
            vals.append(wavelet_energy(2.0 ** (-M / 2) * v) / fourier_minus_half(v))
        out[M] = np.array(vals)
    return out


def shrink_sweep(level: int = 2, shrinks=(1 / 2, 1 / 8, 1 / 32, 1 / 128), kinds=ALL_KINDS) -> list[dict]:
    """Worst block condition number over hexagonal meshes with shrinking edges.

    Each row holds the shrink factor, the largest ``h_P / min h_e`` and the
    largest block condition number per kind.
    """
    rows = []
    for shrink in shrinks:
        mesh = generate_mesh("hexa", level, shrink=shrink)
        per = element_conditions_blocks(mesh, kinds)
        row = {"shrink": float(shrink), "ratio": max(r["ratio"] for r in per)}
        for kind in kinds:
            row[f"block_{kind}"] = max(r[f"block_{kind}"] for r in per)
        rows.append(row)
    return rows


def element_conditions_blocks(mesh, kinds=ALL_KINDS) -> list[dict]:
    """Block condition numbers only, one row per distinct element shape."""
    seen: dict = {}
    for p in range(mesh.n_elements):
        geom = element_geometry(mesh, p)
        key = (np.round((geom.vertices - geom.vertices[0]) / geom.diameter, 11) + 0.0).tobytes()
        if key in seen:
            continue
        gram = fourier_boundary_gram(geom.lengths)
        entry = {"ratio": float(geom.diameter / geom.lengths.min())}
        for kind in kinds:
            entry[f"block_{kind}"] = block_condition(geom, kind, gram)
        seen[key] = entry
    return list(seen.values())


def log_fit(ratios, values) -> float:
    """Least-squares ``C`` in ``value ~ C * (1 + log(ratio))`` through the origin."""
    x = 1.0 + np.log(np.asarray(ratios, dtype=float))
    y = np.asarray(values, dtype=float)
    return float(x @ y / (x @ x))


def run_diagnostics(family: str = "dyadic", levels=(1,), k: int = 1, shrink: float = 0.5, seed: int = 0) -> dict:
    """Collect all diagnostics into one JSON-serializable dictionary."""
    a0, c0 = steinbach_constants()
    report: dict = {"seed": seed, "steinbach": {"a0": a0, "c0": c0}, "meshes": []}
    for level in levels:
        mesh = generate_mesh(family, level, shrink=shrink)
        ratios = sigma_ratios(mesh, k=max(k, 1), seed=seed)
        report["meshes"].append(
            {
                "family": family,
                "level": level,
                "k": k,
                "elements": element_conditions(mesh, k),
                "sigma_ratio": {
                    kind: {"min": float(r.min()), "max": float(r.max()), "median": float(np.median(r))}
                    for kind, r in ratios.items()
                },
            }
        )
    wav = wavelet_fourier_ratios(seed=seed)
    report["wavelet_fourier"] = [
        {"M": M, "median": float(np.median(r)), "min": float(r.min()), "max": float(r.max())}
        for M, r in wav.items()
    ]
    sweep = shrink_sweep()
    report["shrink_sweep"] = {
        "rows": sweep,
        "fit_l2": log_fit([r["ratio"] for r in sweep], [r["block_l2"] for r in sweep]),
    }
    return report
