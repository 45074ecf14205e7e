"""Scaling-function tables, wavelet grids and lattice projections."""

from __future__ import annotations

import numpy as np
import pytest

from electrosense.kernels import green
from electrosense.wavelet import (
    ResolutionError,
    ScalingFilter,
    SingularSourceError,
    WaveletError,
    WaveletGrid,
    cascade,
    detail_center,
    eval_phi2d,
    fwt2,
    green_coeffs,
    green_detail_decay,
    ifwt2,
    phi_gram,
    project,
    psi_moments,
)

UNIT_BOX = (-1.0, 1.0, -1.0, 1.0)


def _ones(x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
    return np.ones(np.broadcast(x1, x2).shape)


def test_filter_properties(db6) -> None:
    assert db6.support == 11
    assert db6.zero_moments == 6
    assert db6.h.sum() == pytest.approx(np.sqrt(2.0))
    assert db6.g.sum() == pytest.approx(0.0, abs=1e-12)
    assert np.dot(db6.h, db6.h) == pytest.approx(1.0)


@pytest.mark.parametrize("name", ["bior2.2", "no-such-wavelet"])
def test_unusable_wavelets_are_rejected(name: str) -> None:
    with pytest.raises(WaveletError):
        ScalingFilter.from_name(name)


def test_cascade_integrates_to_one(db6_table) -> None:
    assert db6_table.phi.sum() * db6_table.step == pytest.approx(1.0, abs=1e-9)
    first = np.sum(db6_table.x * db6_table.phi) * db6_table.step
    assert first == pytest.approx(db6_table.filter.first_moment, abs=1e-3)


def test_cascade_partition_of_unity(db6_table) -> None:
    period = 2**db6_table.depth
    support = db6_table.filter.support
    for m in (0, 17, period // 3, period - 1):
        total = sum(db6_table.phi[m + k * period] for k in range(support))
        assert total == pytest.approx(1.0, abs=1e-8)


def test_shifted_scaling_functions_are_orthonormal(db6_table) -> None:
    gram = phi_gram(db6_table, 0, [0, 1, 2, 3])
    assert np.allclose(gram, np.eye(4), atol=1e-3)


@pytest.mark.parametrize("scale, count", [(-4, 42), (-5, 74)])
def test_grid_counts_on_the_unit_box(db6, scale: int, count: int) -> None:
    grid = WaveletGrid.covering(UNIT_BOX, scale, db6)
    assert grid.counts == (count, count)
    assert grid.size == count * count


def test_grid_index_round_trip(db6) -> None:
    grid = WaveletGrid.covering(UNIT_BOX, -4, db6)
    idx = grid.indices()
    linear = grid.linear(idx[:, 0], idx[:, 1])
    assert np.array_equal(linear, np.arange(grid.size))
    n1, n2 = grid.unravel(linear)
    assert np.array_equal(n1, idx[:, 0])
    assert np.array_equal(n2, idx[:, 1])


def test_empty_box_is_rejected(db2) -> None:
    with pytest.raises(WaveletError):
        WaveletGrid.covering((1.0, 1.0, -1.0, 1.0), -3, db2)


def test_projection_of_constants_and_linears(db2) -> None:
    grid = WaveletGrid.covering(UNIT_BOX, -3, db2)
    inside = grid.interior()
    assert inside.any()
    ones = project(_ones, grid, 9, db2).approx
    assert np.allclose(ones[inside], grid.pixel_size, atol=1e-12)
    linear = project(lambda x1, x2: x1 + 0.0 * x2, grid, 9, db2).approx
    expected = grid.pixel_size * np.broadcast_to(grid.centers(0)[:, None], linear.shape)
    assert np.allclose(linear[inside], expected[inside], atol=1e-10)


def test_details_vanish_on_low_degree_polynomials() -> None:
    db3 = ScalingFilter.from_name("db3")
    grid = WaveletGrid.covering(UNIT_BOX, -3, db3)
    inside = grid.interior()
    assert inside.any()
    proj = project(lambda x1, x2: x1**2 - 3.0 * x1 * x2 + x2, grid, 9, db3, details=True)
    scale = np.abs(proj.approx[inside]).max()
    for band in proj.details:
        assert np.abs(band[inside]).max() <= 1e-9 * scale


def test_projection_needs_a_fine_enough_lattice(db2) -> None:
    grid = WaveletGrid.covering(UNIT_BOX, -3, db2)
    with pytest.raises(ResolutionError):
        project(_ones, grid, 8, db2)


def test_green_coefficients_of_a_distant_source(db2) -> None:
    grid = WaveletGrid.covering(UNIT_BOX, -3, db2)
    source = np.array([5.0, 0.0])
    coeffs = green_coeffs(source, grid, 9, db2).reshape(grid.counts)
    c1, c2 = np.meshgrid(grid.centers(0), grid.centers(1), indexing="ij")
    approx = grid.pixel_size * green(np.stack([c1, c2], axis=-1), source)
    inside = grid.interior()
    assert np.allclose(coeffs[inside], approx[inside], rtol=1e-3)


def test_source_inside_the_domain_needs_smoothing(db2) -> None:
    grid = WaveletGrid.covering(UNIT_BOX, -3, db2)
    with pytest.raises(SingularSourceError):
        green_coeffs([0.1, 0.2], grid, 9, db2)
    coeffs = green_coeffs([0.1, 0.2], grid, 9, db2, smoothing=3.0)
    assert np.all(np.isfinite(coeffs))


def test_discrete_transform_inverts(db2) -> None:
    rng = np.random.default_rng(3)
    samples = rng.standard_normal((32, 32))
    coeffs = fwt2(samples, 2, db2)
    assert np.allclose(ifwt2(coeffs, db2, samples.shape), samples)
    with pytest.raises(WaveletError):
        fwt2(np.ones((30, 32)), 2, db2)


def test_psi_has_vanishing_moments(db6_table) -> None:
    moments = psi_moments(db6_table, range(8), origin=0.5 * db6_table.filter.support)
    assert np.allclose(moments[:6], 0.0, atol=1e-7)
    assert abs(moments[6]) > 1e-3
    assert 0.0 < detail_center(db6_table) < db6_table.filter.support


def test_haar_cascade_is_exact() -> None:
    table = cascade(ScalingFilter.haar(), 6)
    half = 2**5
    assert np.array_equal(table.phi[:-1], np.ones(2 * half))
    assert table.phi[-1] == 0.0
    assert np.allclose(table.psi[:half], 1.0)
    assert np.allclose(table.psi[half:-1], -1.0)


def test_index_set_grows_fourfold_per_scale(db6) -> None:
    coarse = WaveletGrid.covering(UNIT_BOX, -7, db6)
    fine = WaveletGrid.covering(UNIT_BOX, -8, db6)
    assert coarse.counts == (266, 266)
    assert 3.5 <= fine.size / coarse.size <= 4.5


def test_phi2d_is_shift_covariant_and_normalized(db6_table) -> None:
    L, n = -1, (1, -2)
    s = 2.0**L
    rng = np.random.default_rng(5)
    pts = rng.uniform(-3.0, 6.0, size=(200, 2))
    shifted = eval_phi2d(db6_table, L, n, pts)
    assert np.allclose(shifted, eval_phi2d(db6_table, L, (0, 0), pts - s * np.array(n)), atol=1e-12)

    support = db6_table.filter.support
    h = s / 64
    u1 = s * n[0] + h * (np.arange(support * 64) + 0.5)
    u2 = s * n[1] + h * (np.arange(support * 64) + 0.5)
    grid = np.stack(np.meshgrid(u1, u2, indexing="ij"), axis=-1)
    assert np.sum(eval_phi2d(db6_table, L, n, grid) ** 2) * h * h == pytest.approx(1.0, abs=2e-3)


def test_shifted_2d_scaling_functions_are_orthonormal(db6_table) -> None:
    L = -1
    s = 2.0**L
    indices = [(0, 0), (1, 0), (0, 2), (3, 3)]
    support = db6_table.filter.support
    h = s / 64
    axis = h * (np.arange((3 + support) * 64) + 0.5)
    grid = np.stack(np.meshgrid(axis, axis, indexing="ij"), axis=-1)
    values = np.stack([eval_phi2d(db6_table, L, n, grid).ravel() for n in indices])
    gram = values @ values.T * h * h
    assert np.allclose(gram, np.eye(len(indices)), atol=2e-3)


def test_detail_coefficients_of_a_quartic_vanish_at_the_detail_center() -> None:
    db3 = ScalingFilter.from_name("db3")
    table = cascade(db3, 12)
    grid = WaveletGrid.covering(UNIT_BOX, -3, db3)
    inside = grid.interior()
    proj = project(lambda x1, x2: x1**4 + 0.0 * x2, grid, 9, db3, details=True)
    (m3,) = psi_moments(table, [3])
    n1 = np.broadcast_to(grid.axis_indices(0)[:, None], grid.counts)
    # ⟨x₁⁴, ψ_{j,n} ⊗ φ_{j,n}⟩ = 2^{5j} · 4 m₃ (n₁ + c)
    expected = grid.pixel_size**5 * 4.0 * m3 * (n1 + detail_center(table))
    scale = np.abs(expected[inside]).max()
    assert np.allclose(np.abs(proj.details[1][inside]), np.abs(expected[inside]), atol=1e-2 * scale)
    assert np.abs(proj.details[0][inside]).max() <= 1e-9 * scale


def test_green_details_decay_with_the_vanishing_moments(db6_table) -> None:
    decay = green_detail_decay(2.0, [-4, -5, -6], db6_table)
    assert decay.scales == (-4, -5, -6)
    assert all(value > 0 for value in decay.values)
    assert decay.slope == pytest.approx(db6_table.filter.zero_moments + 1, abs=0.5)


@pytest.mark.parametrize("scale", [-5, -6])
def test_doubling_the_source_distance_divides_details_by_two_to_the_p(db6_table, scale: int) -> None:
    near = green_detail_decay(2.0, [scale], db6_table).values[0]
    far = green_detail_decay(4.0, [scale], db6_table).values[0]
    assert 0.7 * 64 <= near / far <= 1.3 * 64


def test_detail_decay_needs_a_positive_distance(db6_table) -> None:
    with pytest.raises(WaveletError):
        green_detail_decay(0.0, [-4], db6_table)
