"""Periodic biorthogonal wavelet transform and the wavelet edge-constant form."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import BadLength, LevelOverflow

SQRT1_2 = math.sqrt(2.0) / 2.0

#: lowpass taps, complete with their sqrt(2)/2 prefactor
LOWPASS = SQRT1_2 * np.array(
    [3 / 128, -3 / 128, -11 / 64, 11 / 64, 1.0, 1.0, 11 / 64, -11 / 64, -3 / 128, 3 / 128]
)
#: offset of tap 0 relative to position 2k
LOWPASS_SHIFT = -4

MAX_LEVEL = 22


@dataclass(frozen=True)
class AuxGrid:
    """Uniform dyadic grid of ``2**M`` cells laid along the element boundary.

    ``cells_per_edge[e]`` consecutive cells are mapped onto edge ``e``; ``nodes``
    are the arclength positions of the ``2**M + 1`` grid nodes.
    """

    M: int
    cells_per_edge: np.ndarray
    nodes: np.ndarray

    @property
    def cell_edge(self) -> np.ndarray:
        """Edge index of every cell."""
        return np.repeat(np.arange(len(self.cells_per_edge)), self.cells_per_edge)


def aux_level(edge_lengths) -> int:
    """Smallest integer ``M`` with ``M > log2(sum h / min h)``."""
    h = np.asarray(edge_lengths, dtype=float)
    ratio = h.sum() / h.min()
    M = int(math.floor(math.log2(ratio))) + 1
    # guard against rounding in log2 near powers of two
    while 2.0**M <= ratio:
        M += 1
    while M > 1 and 2.0 ** (M - 1) > ratio:
        M -= 1
    return M


def allocate_cells(edge_lengths, M: int) -> np.ndarray:
    """Largest-remainder allocation of ``2**M`` cells, at least one per edge."""
    h = np.asarray(edge_lengths, dtype=float)
    total = 2**M
    if total < len(h):
        raise ValueError("fewer cells than edges")
    target = total * h / h.sum()
    cells = np.maximum(np.floor(target).astype(int), 1)
    rest = total - cells.sum()
    if rest > 0:
        order = np.lexsort((np.arange(len(h)), -(target - np.floor(target))))
        cells[order[:rest]] += 1
    while cells.sum() > total:
        # floors of 1 overshot: take from the largest allocation
        j = int(np.argmax(cells - target))
        cells[j] -= 1
    return cells


def build_aux_grid(geom) -> AuxGrid:
    h = np.asarray(getattr(geom, "lengths", geom), dtype=float)
    if len(h) < 3:
        raise ValueError("need at least three edges")
    M = aux_level(h)
    if M > MAX_LEVEL:
        raise LevelOverflow(f"auxiliary grid would need M = {M} levels")
    cells = allocate_cells(h, M)
    starts = np.concatenate([[0.0], np.cumsum(h)])
    nodes = np.concatenate(
        [starts[e] + h[e] * np.arange(cells[e]) / cells[e] for e in range(len(h))] + [[starts[-1]]]
    )
    return AuxGrid(M, cells, nodes)


def fwt_periodic(values) -> list[tuple[np.ndarray, np.ndarray]]:
    """Periodic fast wavelet transform.

    ``values`` may be a vector of length ``2**M`` or an array whose first axis
    has that length (columns are transformed independently). Returns a list of
    ``(kappa_j, delta_j)`` for ``j = M-1, ..., 0``.
    """
    kappa = np.asarray(values, dtype=float)
    n = kappa.shape[0]
    if n < 2 or n & (n - 1):
        raise BadLength(f"length {n} is not a power of two >= 2")
    out = []
    taps = np.arange(len(LOWPASS)) + LOWPASS_SHIFT
    while kappa.shape[0] > 1:
        size = kappa.shape[0]
        k2 = 2 * np.arange(size // 2)
        idx = (k2[:, None] + taps[None, :]) % size
        coarse = np.tensordot(kappa[idx], LOWPASS, axes=([1], [0]))
        detail = SQRT1_2 * (kappa[k2] - kappa[k2 + 1])
        out.append((coarse, detail))
        kappa = coarse
    return out


def wavelet_energy(values) -> float | np.ndarray:
    """``sum_j 2**-j |delta_j|**2`` of the transform of ``values``."""
    levels = fwt_periodic(values)
    M = len(levels)
    total = 0.0
    for step, (_, delta) in enumerate(levels):
        j = M - 1 - step
        total = total + 2.0**-j * np.sum(delta * delta, axis=0)
    return total


def transport_matrix(grid: AuxGrid) -> np.ndarray:
    """Map from edge values to ``kappa_M`` on the dyadic cells."""
    n_edges = len(grid.cells_per_edge)
    T = np.zeros((2**grid.M, n_edges))
    T[np.arange(2**grid.M), grid.cell_edge] = 2.0 ** (-grid.M / 2.0)
    return T


def s0_wav_matrix(geom) -> np.ndarray:
    """Wavelet form ``h_P^2 sum_j 2^-j delta_j(eta) . delta_j(mu)`` on edge constants."""
    grid = build_aux_grid(geom)
    T = transport_matrix(grid)
    M = grid.M
    S = np.zeros((T.shape[1], T.shape[1]))
    for step, (_, delta) in enumerate(fwt_periodic(T)):
        j = M - 1 - step
        S += 2.0**-j * delta.T @ delta
    S *= geom.diameter**2
    return 0.5 * (S + S.T)


def s0_wav(geom, eta, mu=None) -> float:
    """Value of the wavelet form for edge values ``eta`` (and ``mu``)."""
    S = s0_wav_matrix(geom)
    eta = np.asarray(eta, dtype=float)
    mu = eta if mu is None else np.asarray(mu, dtype=float)
    return float(eta @ S @ mu)
