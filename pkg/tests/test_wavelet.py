import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ncvem.exceptions import BadLength, LevelOverflow
from ncvem.mesh import element_geometry, generate_dyadic_square_mesh, generate_mesh, polygon_geometry
from ncvem.wavelet import (
    LOWPASS,
    allocate_cells,
    aux_level,
    build_aux_grid,
    fwt_periodic,
    s0_wav,
    s0_wav_matrix,
    wavelet_energy,
)

PRINTED = np.array([3 / 128, -3 / 128, -11 / 64, 11 / 64, 1, 1, 11 / 64, -11 / 64, -3 / 128, 3 / 128])


def slow_transform(values):
    """Direct transform with explicit analysis matrices, one level at a time."""
    kappa = np.array(values, dtype=float)
    out = []
    w = math.sqrt(2.0) / 2.0 * PRINTED
    while len(kappa) > 1:
        n = len(kappa)
        H = np.zeros((n // 2, n))
        G = np.zeros((n // 2, n))
        for k in range(n // 2):
            for l in range(10):
                H[k, (2 * k + l - 4) % n] += w[l]
            G[k, 2 * k] = math.sqrt(2.0) / 2.0
            G[k, 2 * k + 1] = -math.sqrt(2.0) / 2.0
        out.append((H @ kappa, G @ kappa))
        kappa = H @ kappa
    return out


def slow_energy(values):
    levels = slow_transform(values)
    M = len(levels)
    return sum(2.0 ** -(M - 1 - i) * d @ d for i, (_, d) in enumerate(levels))


def test_filter_sums():
    assert LOWPASS.sum() == pytest.approx(math.sqrt(2.0), abs=1e-14)
    assert abs(np.sum(LOWPASS * (-1.0) ** np.arange(10))) < 1e-14


def test_constant_input():
    M, c = 6, 1.7
    levels = fwt_periodic(np.full(2**M, c * 2.0 ** (-M / 2)))
    for i, (kappa, delta) in enumerate(levels):
        j = M - 1 - i
        assert np.abs(delta).max() < 1e-13
        assert np.allclose(kappa, c * 2.0 ** (-j / 2), atol=1e-13)
    assert wavelet_energy(np.full(8, 3.0)) < 1e-26


def test_haar_step():
    a, b = 0.8, -0.3
    delta = fwt_periodic(np.array([a, b, a, b]))[0][1]
    assert np.allclose(delta, math.sqrt(2.0) / 2.0 * (a - b) * np.ones(2))


def test_bad_length():
    with pytest.raises(BadLength):
        fwt_periodic(np.ones(6))
    with pytest.raises(BadLength):
        fwt_periodic(np.ones(1))


@pytest.mark.parametrize("M", range(4, 10))
def test_fast_matches_slow(M):
    v = np.random.default_rng(M).standard_normal(2**M)
    fast = fwt_periodic(v)
    slow = slow_transform(v)
    for (kf, df), (ks, ds) in zip(fast, slow):
        assert np.abs(kf - ks).max() < 1e-12
        assert np.abs(df - ds).max() < 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**31 - 1))
def test_energy_nonnegative_zero_only_for_constants(M, seed):
    v = np.random.default_rng(seed).standard_normal(2**M)
    assert wavelet_energy(v) > 0
    assert wavelet_energy(v - v + v[0]) < 1e-25


def test_aux_grid_examples():
    geom = element_geometry(generate_dyadic_square_mesh(8, 2), 0)
    grid = build_aux_grid(geom)
    assert grid.M == 5 and np.all(grid.cells_per_edge == 2)
    sq = polygon_geometry([[0, 0], [1, 0], [1, 1], [0, 1]])
    grid = build_aux_grid(sq)
    assert grid.M == 3 and np.all(grid.cells_per_edge == 2)
    assert np.all(np.diff(grid.nodes) > 0)
    assert grid.nodes[-1] == pytest.approx(sq.perimeter)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(1e-3, 1.0), min_size=3, max_size=30))
def test_allocation_invariants(lengths):
    M = aux_level(lengths)
    assert 2.0**M > sum(lengths) / min(lengths)
    cells = allocate_cells(lengths, M)
    assert cells.sum() == 2**M
    assert cells.min() >= 1


def test_level_overflow():
    h = np.array([1.0, 1.0, 1e-9])
    with pytest.raises(LevelOverflow):
        build_aux_grid(h)


def test_s0_wav_matrix_properties():
    mesh = generate_mesh("hexa", 2, shrink=1 / 32)
    for p in range(0, mesh.n_elements, 9):
        geom = element_geometry(mesh, p)
        S = s0_wav_matrix(geom)
        assert np.abs(S - S.T).max() <= 1e-12 * np.abs(S).max()
        assert np.linalg.eigvalsh(S).min() >= -1e-12 * np.abs(S).max()
        assert s0_wav(geom, np.ones(geom.n_edges)) < 1e-12 * np.abs(S).max()


def test_s0_wav_uniform_matches_slow_transform():
    M = 4
    n = 2**M
    t = 2 * np.pi * np.arange(n) / n
    geom = polygon_geometry(np.column_stack([np.cos(t), np.sin(t)]))
    grid = build_aux_grid(geom)
    eta = (-1.0) ** np.arange(n)
    values = np.repeat(eta, grid.cells_per_edge) * 2.0 ** (-grid.M / 2)
    ref = geom.diameter**2 * slow_energy(values)
    assert s0_wav(geom, eta) == pytest.approx(ref, rel=1e-12)


def test_shift_behaviour():
    v = np.random.default_rng(2).standard_normal(64)
    base = wavelet_energy(v)
    # shifts by half the period commute with every decimation step
    assert wavelet_energy(np.roll(v, 32)) == pytest.approx(base, rel=1e-12)
    # other shifts change the value only by a bounded factor
    for s in range(1, 64):
        assert 0.5 < wavelet_energy(np.roll(v, s)) / base < 2.0
