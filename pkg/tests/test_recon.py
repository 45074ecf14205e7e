"""GPT least squares, masked weighted-ℓ1 reconstruction and its solver contracts."""

from __future__ import annotations

import dataclasses
from math import pi, sqrt

import numpy as np
import pytest
import scipy.sparse as sp

from electrosense.bem import simulate_msr
from electrosense.features import BandMask, assemble_gpt, build_band_mask
from electrosense.recon import (
    InvalidDataError,
    L1Problem,
    LipschitzEstimateError,
    MaskedOperator,
    fista_l1,
    kkt_residual,
    least_squares_gpt,
    masked_relative_error,
    power_lipschitz,
    shrink,
    universal_mu,
)
from electrosense.sensing import (
    ForwardOperator,
    MsrMatrix,
    NoiseModel,
    add_noise,
    build_forward_operator,
    far_field_system,
    multi_indices,
)
from electrosense.wavelet import WaveletGrid

DATA_SIZE = 40


@pytest.fixture(scope="module")
def grid(db2) -> WaveletGrid:
    return WaveletGrid.covering((0.0, 0.5, 0.0, 0.5), -3, db2)


@pytest.fixture(scope="module")
def operator(grid: WaveletGrid) -> ForwardOperator:
    rng = np.random.default_rng(21)
    gx = rng.standard_normal((grid.size, DATA_SIZE)) / sqrt(DATA_SIZE)
    gy = rng.standard_normal((grid.size, DATA_SIZE)) / sqrt(DATA_SIZE)
    return ForwardOperator(gx=gx, gy=gy, basis="wavelet", scale=grid.scale, grid=grid)


@pytest.fixture(scope="module")
def diagonal_mask(grid: WaveletGrid) -> BandMask:
    return build_band_mask(grid, 0)


@pytest.fixture(scope="module")
def truth(grid: WaveletGrid) -> sp.csr_matrix:
    values = np.zeros(grid.size)
    values[[3, 10, 17, 30]] = [1.0, -0.8, 0.6, 1.2]
    return sp.diags(values, format="csr")


@pytest.fixture(scope="module")
def noisy_data(operator: ForwardOperator, truth: sp.csr_matrix) -> MsrMatrix:
    rng = np.random.default_rng(22)
    clean = operator.apply(truth)
    return MsrMatrix(values=clean + 0.01 * rng.standard_normal(clean.shape), noisy=True)


def _dense_columns(A: MaskedOperator) -> np.ndarray:
    gx, gy = A.op.gx, A.op.gy
    return np.stack([np.outer(gx[r], gy[c]).ravel() for r, c in zip(A.rows, A.cols)], axis=1)


def test_shrink() -> None:
    x = np.array([-3.0, -0.5, 0.0, 2.0])
    assert np.allclose(shrink(x, 1.0), [-2.0, 0.0, 0.0, 1.0])
    assert np.allclose(shrink(x, np.array([0.0, 0.0, 1.0, 3.0])), [-3.0, -0.5, 0.0, 0.0])


def test_universal_threshold(diagonal_mask: BandMask) -> None:
    mu = universal_mu(0.1, 10, 20, diagonal_mask, scale=2.0)
    assert mu == pytest.approx(2.0 * 0.1 * sqrt(200) * sqrt(2 * np.log(diagonal_mask.count)))
    single = dataclasses.replace(diagonal_mask, rows=diagonal_mask.rows[:1],
                                 cols=diagonal_mask.cols[:1])
    assert universal_mu(1.0, 1, 1, single) == pytest.approx(sqrt(2.0))
    assert universal_mu(0.0, 10, 10, diagonal_mask) == 0.0
    with pytest.raises(ValueError):
        universal_mu(-1.0, 10, 10, diagonal_mask)
    empty = dataclasses.replace(diagonal_mask, rows=diagonal_mask.rows[:0],
                                cols=diagonal_mask.cols[:0])
    with pytest.raises(InvalidDataError):
        universal_mu(1.0, 10, 10, empty)


def test_masked_operator_adjoint(operator: ForwardOperator, grid: WaveletGrid) -> None:
    mask = build_band_mask(grid, 1)
    A = MaskedOperator(operator, mask.rows, mask.cols)
    rng = np.random.default_rng(23)
    x = rng.standard_normal(A.size)
    R = rng.standard_normal(operator.data_shape)
    assert np.sum(A.forward(x) * R) == pytest.approx(np.dot(x, A.adjoint(R)), rel=1e-10)
    assert np.allclose(A.column_norms(), np.linalg.norm(_dense_columns(A), axis=0))


def test_power_iteration_bounds_the_lipschitz_constant(operator, diagonal_mask) -> None:
    A = MaskedOperator(operator, diagonal_mask.rows, diagonal_mask.cols)
    columns = _dense_columns(A)
    exact = np.linalg.eigvalsh(columns.T @ columns).max()
    estimate = power_lipschitz(A)
    assert 0.8 * exact <= estimate <= exact * (1 + 1e-10)
    empty = MaskedOperator(operator, np.array([], dtype=int), np.array([], dtype=int))
    with pytest.raises(LipschitzEstimateError):
        power_lipschitz(empty)


def test_problem_weights_and_validation(operator, diagonal_mask, noisy_data) -> None:
    problem = L1Problem.build(operator, noisy_data, diagonal_mask, 1.0)
    expected = (np.linalg.norm(operator.gx, axis=1) * np.linalg.norm(operator.gy, axis=1)
                / DATA_SIZE)
    assert np.allclose(problem.weights, expected)
    with pytest.raises(ValueError):
        L1Problem.build(operator, noisy_data, diagonal_mask, -1.0)
    with pytest.raises(InvalidDataError):
        L1Problem.build(operator, MsrMatrix(values=np.zeros((3, 3))), diagonal_mask, 1.0)
    broken = noisy_data.values.copy()
    broken[0, 0] = np.nan
    with pytest.raises(InvalidDataError):
        L1Problem.build(operator, MsrMatrix(values=broken), diagonal_mask, 1.0)


def test_entries_with_zero_weight_are_dropped(operator, diagonal_mask, noisy_data) -> None:
    gx = operator.gx.copy()
    gx[0] = 0.0
    degenerate = dataclasses.replace(operator, gx=gx)
    problem = L1Problem.build(degenerate, noisy_data, diagonal_mask, 1.0)
    assert problem.operator.size == diagonal_mask.count - 1
    assert 0 not in problem.operator.rows


def test_zero_data_gives_zero_estimate(operator, diagonal_mask) -> None:
    zero = MsrMatrix(values=np.zeros(operator.data_shape))
    result = fista_l1(L1Problem.build(operator, zero, diagonal_mask, 1.0))
    assert result.converged
    assert result.nonzeros == 0
    assert not np.any(result.coefficients)


def test_unregularized_solution_is_least_squares(operator, diagonal_mask, noisy_data) -> None:
    problem = L1Problem.build(operator, noisy_data, diagonal_mask, 0.0, max_iterations=5000,
                              tolerance=1e-14)
    result = fista_l1(problem)
    columns = _dense_columns(problem.operator)
    expected, *_ = np.linalg.lstsq(columns, noisy_data.values.ravel(), rcond=None)
    assert np.allclose(result.estimate.diagonal(), expected, atol=1e-6)


def test_solver_contracts(operator, diagonal_mask, noisy_data, truth) -> None:
    problem = L1Problem.build(operator, noisy_data, diagonal_mask, 2.0, max_iterations=5000,
                              tolerance=1e-12)
    result = fista_l1(problem)
    objectives = [row["objective"] for row in result.trace]
    assert all(b <= a for a, b in zip(objectives, objectives[1:]))
    assert result.trace[0]["iteration"] == 0
    assert result.iterations == len(result.trace) - 1
    assert result.converged
    assert kkt_residual(problem, result.coefficients) <= 1e-3 * problem.mu
    assert set(result.estimate.nonzero()[0]) <= {3, 10, 17, 30}
    assert masked_relative_error(result.estimate, truth, diagonal_mask) < 0.2
    assert result.residual < 0.3


def test_half_scale_solves_the_unhalved_objective(operator, diagonal_mask, noisy_data) -> None:
    ns, nr = operator.data_shape
    full = universal_mu(0.01, ns, nr, diagonal_mask)
    half = universal_mu(0.01, ns, nr, diagonal_mask, scale=0.5)
    assert half == pytest.approx(0.5 * full)

    problem = L1Problem.build(operator, noisy_data, diagonal_mask, half, max_iterations=5000,
                              tolerance=1e-12)
    x = fista_l1(problem).coefficients
    A = problem.operator
    # stationarity of ‖A x − V‖² + μ Σ w_e |x_e| at μ = full
    grad = 2.0 * A.adjoint(A.forward(x) - problem.data)
    bound = full * problem.weights
    active = x != 0
    assert np.any(active)
    assert np.all(np.abs(grad[~active]) <= bound[~active] * (1 + 1e-3))
    assert np.allclose(grad[active], -bound[active] * np.sign(x[active]), atol=1e-3 * full)


def test_masked_relative_error(diagonal_mask) -> None:
    n = diagonal_mask.grid.size
    truth = sp.diags(np.full(n, 2.0), format="csr")
    estimate = truth.tolil()
    estimate[0, 0] = 1.0
    estimate[0, 5] = 100.0
    estimate = estimate.tocsr()
    assert masked_relative_error(estimate, truth, diagonal_mask) == pytest.approx(1.0 / sqrt(4 * n))
    assert masked_relative_error(truth, truth, diagonal_mask) == 0.0


def test_disk_polarization_tensor_from_far_field(disk_mesh, disk_np, cond) -> None:
    system = far_field_system(32, 3.0)
    op = build_forward_operator(system, order=2)
    estimate = least_squares_gpt(op, simulate_msr(disk_mesh, cond, system, disk_np))
    assert estimate.effective_rank == 4
    first = estimate.entries[:2, :2]
    assert np.allclose(first, 2 * pi / 7 * np.eye(2), atol=1e-2 * 2 * pi / 7)


def test_closed_loop_gpt_recovers_first_order(flower_mesh, flower_np, cond) -> None:
    system = far_field_system(64, 3.0)
    op = build_forward_operator(system, order=2)
    gpt = assemble_gpt(flower_mesh, cond, 2, flower_np)
    estimate = least_squares_gpt(op, MsrMatrix(values=op.apply(gpt.entries)))
    assert np.allclose(estimate.entries[:2, :2], gpt.block(1, 1), rtol=1e-6, atol=1e-9)
    assert estimate.residual < 1e-8


@pytest.mark.slow
def test_gpt_noise_error_grows_with_the_total_order(flower_mesh, flower_np, cond) -> None:
    system = far_field_system(64, 3.0)
    op = build_forward_operator(system, order=3)
    V = simulate_msr(flower_mesh, cond, system, flower_np)
    clean = least_squares_gpt(op, V).entries
    orders = np.array([a + b for a, b in multi_indices(3)])
    total = orders[:, None] + orders[None, :]

    squared = np.zeros_like(clean)
    for seed in range(20):
        noisy = least_squares_gpt(op, add_noise(V, NoiseModel(level=0.1, seed=seed))).entries
        squared += (noisy - clean) ** 2
    per_order = [np.sqrt(np.mean(squared[total == t])) for t in range(2, 7)]
    assert np.all(np.diff(per_order) > 0)


def test_gpt_estimation_needs_enough_transmitters() -> None:
    op = build_forward_operator(far_field_system(4, 3.0), order=2)
    with pytest.raises(InvalidDataError):
        least_squares_gpt(op, MsrMatrix(values=np.zeros((4, 4))))
