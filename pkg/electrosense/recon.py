"""Feature-matrix estimation from MSR data: GPT least squares and masked weighted-ℓ1 FISTA."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from math import e, log, sqrt
from typing import List, Optional

import numpy as np
import scipy.sparse as sp
from scipy.linalg import svdvals
from scipy.sparse.linalg import norm as sparse_norm

from electrosense.constants import (
    ADJOINT_CHUNK,
    FISTA_MAX_ITERATIONS,
    FISTA_TOLERANCE,
    LSTSQ_CUTOFF,
    POWER_ITERATIONS,
)
from electrosense.features import BandMask
from electrosense.sensing import ForwardOperator, MsrMatrix, MultiIndex, multi_indices
from electrosense.types import TraceRow

logger = logging.getLogger(__name__)

# step = 1 / (LIPSCHITZ_MARGIN * power estimate); the estimate approaches ‖A‖² from below
LIPSCHITZ_MARGIN = 1.05


class InvalidDataError(ValueError):
    """MSR data are non-finite or do not match the operator."""


class LipschitzEstimateError(ArithmeticError):
    """Power iteration did not produce a finite positive Lipschitz constant."""


def _check_data(op: ForwardOperator, V: MsrMatrix) -> np.ndarray:
    values = np.asarray(V.values, dtype=float)
    if values.shape != op.data_shape:
        raise InvalidDataError(
            f"MSR matrix is {values.shape[0]}x{values.shape[1]}, "
            f"operator expects {op.data_shape[0]}x{op.data_shape[1]}"
        )
    if not np.all(np.isfinite(values)):
        raise InvalidDataError("MSR matrix contains non-finite values")
    return values


@dataclass(frozen=True, eq=False)
class GptEstimate:
    order: int
    indices: List[MultiIndex]
    entries: np.ndarray
    effective_rank: int
    residual: float


def least_squares_gpt(op: ForwardOperator, V: MsrMatrix, cutoff: float = LSTSQ_CUTOFF) -> GptEstimate:
    """argmin ‖Gxᵀ X Gy − V‖_F through truncated pseudo-inverses of both factors."""
    if op.order is None:
        raise InvalidDataError("least-squares GPT estimation needs a polynomial operator")
    values = _check_data(op, V)
    ns = op.data_shape[0]
    if not ns > 2 * op.order:
        raise InvalidDataError(f"{ns} transmitters cannot resolve order {op.order}; need > {2 * op.order}")

    sx = svdvals(op.gx)
    rank = int(np.count_nonzero(sx > cutoff * sx[0]))
    if rank < op.size:
        logger.warning("Polynomial operator has effective rank %s of %s", rank, op.size)
    left = np.linalg.pinv(op.gx.T, rcond=cutoff)
    right = left if op.gy is op.gx else np.linalg.pinv(op.gy.T, rcond=cutoff)
    entries = left @ values @ right.T
    norm = float(np.linalg.norm(values))
    residual = float(np.linalg.norm(op.apply(entries) - values)) / norm if norm else 0.0
    return GptEstimate(order=op.order, indices=multi_indices(op.order), entries=entries,
                       effective_rank=rank, residual=residual)


class MaskedOperator:
    """A(x) = L(X) where X is zero off the listed (row, col) entries."""

    def __init__(self, op: ForwardOperator, rows: np.ndarray, cols: np.ndarray) -> None:
        self.op = op
        self.rows = np.asarray(rows, dtype=np.int64)
        self.cols = np.asarray(cols, dtype=np.int64)

    @property
    def size(self) -> int:
        return int(self.rows.size)

    def to_matrix(self, x: np.ndarray) -> sp.csr_matrix:
        n = self.op.size
        matrix = sp.csr_matrix((x, (self.rows, self.cols)), shape=(n, n))
        matrix.eliminate_zeros()
        return matrix

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self.op.apply(self.to_matrix(x))

    def adjoint(self, R: np.ndarray) -> np.ndarray:
        """[Gx R Gyᵀ]_{(n, n')} for the listed entries only."""
        left = self.op.gx @ R
        out = np.empty(self.size)
        for lo in range(0, self.size, ADJOINT_CHUNK):
            hi = min(lo + ADJOINT_CHUNK, self.size)
            out[lo:hi] = np.einsum(
                "ij,ij->i", left[self.rows[lo:hi]], self.op.gy[self.cols[lo:hi]]
            )
        return out

    def column_norms(self) -> np.ndarray:
        # column (n, n') of L is the outer product of Gx row n and Gy row n'
        nx = np.linalg.norm(self.op.gx, axis=1)
        ny = nx if self.op.gy is self.op.gx else np.linalg.norm(self.op.gy, axis=1)
        return nx[self.rows] * ny[self.cols]


def power_lipschitz(A: MaskedOperator, iterations: int = POWER_ITERATIONS) -> float:
    """‖A‖₂² by power iteration on AᵀA from the normalized ones vector."""
    if A.size == 0:
        raise LipschitzEstimateError("masked operator has no columns")
    v = np.ones(A.size) / sqrt(A.size)
    estimate = 0.0
    for _ in range(iterations):
        w = A.adjoint(A.forward(v))
        estimate = float(np.linalg.norm(w))
        if not np.isfinite(estimate) or estimate <= 0:
            raise LipschitzEstimateError(f"power iteration produced {estimate}")
        v = w / estimate
    return estimate


def shrink(x: np.ndarray, tau) -> np.ndarray:
    return np.sign(x) * np.maximum(np.abs(x) - tau, 0.0)


def universal_mu(sigma: float, ns: int, nr: int, mask: BandMask, scale: float = 1.0) -> float:
    """μ = c σ √(N_s N_r) √(2 log ‖M‖₁), with log guarded below by 1.

    The data term of :class:`L1Problem` carries ½, so c = 0.5 gives the threshold
    of the unhalved objective.
    """
    if sigma < 0:
        raise ValueError(f"noise level must be >= 0, got {sigma}")
    if mask.count == 0:
        raise InvalidDataError("mask is empty")
    return scale * sigma * sqrt(ns * nr) * sqrt(2.0 * log(max(mask.count, e)))


@dataclass(frozen=True, eq=False)
class L1Problem:
    """½‖A(x) − V‖² + μ Σ w_e |x_e| over the admissible masked entries."""

    operator: MaskedOperator
    data: np.ndarray
    weights: np.ndarray
    mu: float
    max_iterations: int = FISTA_MAX_ITERATIONS
    tolerance: float = FISTA_TOLERANCE

    @classmethod
    def build(
        cls,
        op: ForwardOperator,
        V: MsrMatrix,
        mask: BandMask,
        mu: float,
        *,
        max_iterations: int = FISTA_MAX_ITERATIONS,
        tolerance: float = FISTA_TOLERANCE,
    ) -> "L1Problem":
        """Weights are RMS column norms w_e = ‖A e‖ / √(N_s N_r) of the masked operator."""
        values = _check_data(op, V)
        if mu < 0:
            raise ValueError(f"regularization weight must be >= 0, got {mu}")
        if mask.grid.size != op.size:
            raise InvalidDataError(f"mask covers {mask.grid.size} indices, operator {op.size}")
        full = MaskedOperator(op, mask.rows, mask.cols)
        ns, nr = op.data_shape
        weights = full.column_norms() / sqrt(ns * nr)
        keep = weights > 0
        if not np.all(keep):
            logger.info("Dropping %s masked entries with zero column norm", int((~keep).sum()))
        operator = MaskedOperator(op, mask.rows[keep], mask.cols[keep])
        return cls(operator=operator, data=values, weights=weights[keep], mu=float(mu),
                   max_iterations=max_iterations, tolerance=tolerance)

    def objective(self, x: np.ndarray, Ax: np.ndarray) -> float:
        misfit = Ax - self.data
        return 0.5 * float(np.sum(misfit * misfit)) + self.mu * float(np.sum(self.weights * np.abs(x)))

    def relative_residual(self, Ax: np.ndarray) -> float:
        norm = float(np.linalg.norm(self.data))
        return float(np.linalg.norm(Ax - self.data)) / norm if norm else 0.0


@dataclass(frozen=True, eq=False)
class ReconResult:
    estimate: sp.csr_matrix
    coefficients: np.ndarray
    trace: List[TraceRow] = field(default_factory=list)
    residual: float = 0.0
    nonzeros: int = 0
    iterations: int = 0
    converged: bool = False
    lipschitz: float = 0.0


def fista_l1(problem: L1Problem, lipschitz: Optional[float] = None) -> ReconResult:
    """FISTA with monotone restart.

    A momentum step that raises the objective is replaced by a plain proximal
    step from the current iterate, and momentum restarts; if that also fails to
    decrease the objective the iterate is kept.
    """
    A = problem.operator
    lip = power_lipschitz(A) if lipschitz is None else lipschitz
    step = 1.0 / (LIPSCHITZ_MARGIN * lip)
    tau = step * problem.mu * problem.weights
    logger.info("FISTA: %s unknowns, mu %.4g, Lipschitz %.4g", A.size, problem.mu, lip)

    x = np.zeros(A.size)
    Ax = np.zeros_like(problem.data)
    F = problem.objective(x, Ax)
    trace: List[TraceRow] = [
        {"iteration": 0, "objective": F, "residual": problem.relative_residual(Ax), "nnz": 0}
    ]
    y, Ay, t = x, Ax, 1.0
    converged = False
    iteration = 0
    for iteration in range(1, problem.max_iterations + 1):
        z = shrink(y - step * A.adjoint(Ay - problem.data), tau)
        Az = A.forward(z)
        Fz = problem.objective(z, Az)
        if Fz > F:
            t = 1.0
            z = shrink(x - step * A.adjoint(Ax - problem.data), tau)
            Az = A.forward(z)
            Fz = problem.objective(z, Az)
            if Fz > F:
                z, Az, Fz = x, Ax, F

        t_next = 0.5 * (1.0 + sqrt(1.0 + 4.0 * t * t))
        beta = (t - 1.0) / t_next
        y = z + beta * (z - x)
        Ay = (1.0 + beta) * Az - beta * Ax
        change = abs(F - Fz) / max(F, np.finfo(float).tiny)
        x, Ax, F, t = z, Az, Fz, t_next

        trace.append({
            "iteration": iteration,
            "objective": F,
            "residual": problem.relative_residual(Ax),
            "nnz": int(np.count_nonzero(x)),
        })
        if iteration % 100 == 0:
            logger.debug("FISTA iteration %s: objective %.8g, nnz %s", iteration, F,
                         trace[-1]["nnz"])
        if change < problem.tolerance:
            converged = True
            break

    if not converged:
        logger.warning("FISTA stopped at the iteration cap %s", problem.max_iterations)
    estimate = A.to_matrix(x)
    result = ReconResult(
        estimate=estimate,
        coefficients=x,
        trace=trace,
        residual=problem.relative_residual(Ax),
        nonzeros=int(estimate.nnz),
        iterations=iteration,
        converged=converged,
        lipschitz=lip,
    )
    logger.info("FISTA finished after %s iterations: residual %.4g, %s nonzeros",
                result.iterations, result.residual, result.nonzeros)
    return result


def kkt_residual(problem: L1Problem, x: np.ndarray) -> float:
    """Largest violation of 0 ∈ Aᵀ(Ax − V) + μ w ∂|x| over the masked entries."""
    A = problem.operator
    grad = A.adjoint(A.forward(x) - problem.data)
    bound = problem.mu * problem.weights
    zero = x == 0
    violation = np.empty_like(grad)
    violation[zero] = np.maximum(np.abs(grad[zero]) - bound[zero], 0.0)
    violation[~zero] = np.abs(grad[~zero] + bound[~zero] * np.sign(x[~zero]))
    return float(violation.max()) if violation.size else 0.0


def masked_relative_error(estimate: sp.spmatrix, truth: sp.spmatrix, mask: BandMask) -> float:
    """‖M∘(X̂ − X)‖_F / ‖M∘X‖_F."""
    reference = truth.multiply(mask.matrix)
    denom = float(sparse_norm(reference)) if reference.nnz else 0.0
    diff = (estimate - truth).multiply(mask.matrix)
    num = float(sparse_norm(diff)) if diff.nnz else 0.0
    return num / denom if denom else num
