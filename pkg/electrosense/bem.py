"""Nyström discretization of the layer potentials, density solves, T_D and MSR simulation."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from math import pi
from typing import Optional

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from electrosense.constants import CONTRAST_MARGIN, COINCIDENT_TOLERANCE, PLACEMENT_TOLERANCE
from electrosense.geometry import BoundaryMesh, distance_to_curve
from electrosense.kernels import green, green_normal_derivative
from electrosense.sensing import MeasurementSystem, MsrMatrix

logger = logging.getLogger(__name__)


class DegenerateMeshError(ValueError):
    """Two mesh nodes coincide."""


class IllPosedContrastError(ValueError):
    """λI − K*_D is singular or close to it for the requested conductivity."""


class PlacementError(ValueError):
    """A transmitter or receiver lies on ∂D."""


@dataclass(frozen=True)
class Conductivity:
    k: float

    def __post_init__(self) -> None:
        if not self.k > 0:
            raise IllPosedContrastError(f"conductivity ratio must be > 0, got {self.k}")
        if self.k == 1:
            raise IllPosedContrastError("conductivity ratio k = 1 has no inclusion contrast")

    @property
    def lam(self) -> float:
        return (self.k + 1.0) / (2.0 * (self.k - 1.0))


@dataclass(frozen=True)
class NpMatrix:
    """K*_D with quadrature weights folded into the columns."""

    entries: np.ndarray
    mesh: BoundaryMesh


@dataclass(frozen=True)
class BoundaryDensity:
    values: np.ndarray
    mesh: BoundaryMesh


def assemble_np(mesh: BoundaryMesh) -> NpMatrix:
    x = mesh.points
    diff = x[:, None, :] - x[None, :, :]
    r2 = np.einsum("ijk,ijk->ij", diff, diff)
    np.fill_diagonal(r2, 1.0)
    if r2.min() <= COINCIDENT_TOLERANCE:
        i, j = np.unravel_index(np.argmin(r2), r2.shape)
        raise DegenerateMeshError(f"mesh nodes {i} and {j} coincide")
    num = np.einsum("ijk,ik->ij", diff, mesh.normals)
    K = num / (2.0 * pi * r2)
    # smooth limit of the kernel at x_i = x_j on a C² curve
    np.fill_diagonal(K, mesh.curvature / (4.0 * pi))
    return NpMatrix(entries=K * mesh.weights[None, :], mesh=mesh)


def np_spectrum(np_matrix: NpMatrix) -> np.ndarray:
    eig = np.linalg.eigvals(np_matrix.entries)
    return eig[np.argsort(eig.real, kind="stable")]


class DensitySolver:
    """Factor λI − K* once, then solve for any number of right-hand sides."""

    def __init__(self, np_matrix: NpMatrix, cond: Conductivity) -> None:
        lam = cond.lam
        if abs(lam) <= 0.5 + CONTRAST_MARGIN:
            raise IllPosedContrastError(f"|λ| = {abs(lam):.6g} is not above 1/2")
        self.mesh = np_matrix.mesh
        self.cond = cond
        system = lam * np.eye(self.mesh.size) - np_matrix.entries
        self._lu = lu_factor(system, check_finite=True)
        pivots = np.abs(np.diag(self._lu[0]))
        if pivots.min() <= np.finfo(float).eps * pivots.max():
            raise IllPosedContrastError("density system is numerically singular")

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape[0] != self.mesh.size:
            raise ValueError(f"right-hand side has {rhs.shape[0]} rows, mesh has {self.mesh.size}")
        return lu_solve(self._lu, rhs)


def solve_density(np_matrix: NpMatrix, cond: Conductivity, rhs: np.ndarray) -> BoundaryDensity:
    values = DensitySolver(np_matrix, cond).solve(rhs)
    return BoundaryDensity(values=values, mesh=np_matrix.mesh)


def tau_bilinear(
    mesh: BoundaryMesh,
    cond: Conductivity,
    f_normal_deriv: np.ndarray,
    g_trace: np.ndarray,
    np_matrix: Optional[NpMatrix] = None,
) -> float:
    """T_D(f, g) = Σ_i g_i φ_i w_i with (λI − K*)φ = ∂f/∂ν."""
    np_matrix = np_matrix if np_matrix is not None else assemble_np(mesh)
    phi = solve_density(np_matrix, cond, f_normal_deriv).values
    return float(np.sum(np.asarray(g_trace, dtype=float) * phi * mesh.weights))


def check_placement(mesh: BoundaryMesh, points: np.ndarray) -> np.ndarray:
    """Distances of ``points`` to ∂D; raises when a point sits on the curve."""
    distances = distance_to_curve(points, mesh.points, mesh.shape)
    on_curve = np.flatnonzero(distances < PLACEMENT_TOLERANCE)
    if on_curve.size:
        raise PlacementError(
            f"{on_curve.size} transmitter(s) lie on the boundary, first index {on_curve[0]}"
        )
    close = int(np.count_nonzero(distances < mesh.spacing))
    if close:
        logger.warning(
            "%s transmitter(s) closer to the boundary than the mesh spacing %.3g; "
            "quadrature accuracy degrades there",
            close,
            mesh.spacing,
        )
    return distances


def simulate_msr(
    mesh: BoundaryMesh,
    cond: Conductivity,
    system: MeasurementSystem,
    np_matrix: Optional[NpMatrix] = None,
) -> MsrMatrix:
    """V_sr = Σ_i Γ(y_r − x_i) φ_s,i w_i with (λI − K*)φ_s = ∂Γ(· − x_s)/∂ν."""
    check_placement(mesh, system.sources)
    if not system.coincident:
        check_placement(mesh, system.receivers)
    np_matrix = np_matrix if np_matrix is not None else assemble_np(mesh)
    solver = DensitySolver(np_matrix, cond)
    pts = mesh.points[:, None, :]
    rhs = green_normal_derivative(pts, mesh.normals[:, None, :], system.sources[None, :, :])
    phi = solver.solve(rhs)
    traces = green(pts, system.receivers[None, :, :])
    values = (phi * mesh.weights[:, None]).T @ traces
    logger.info(
        "Simulated %sx%s MSR matrix (||V||_F = %.4g)", values.shape[0], values.shape[1],
        np.linalg.norm(values),
    )
    return MsrMatrix(values=values, noisy=False, provenance="simulated")


def single_layer_jump(mesh: BoundaryMesh, offset: Optional[float] = None) -> np.ndarray:
    """Exterior normal derivative of S_D[1] on ∂D from offset evaluations.

    S_D[1] is sampled at distances d, 2d, 3d, 4d along the outward normal and the
    cubic through those values is differentiated at the curve. The jump relation
    makes the result equal (1/2 + K*)[1]; its accuracy is set by d (default four
    node spacings, where the trapezoidal rule is still accurate off the curve).
    """
    d = 4.0 * mesh.spacing if offset is None else offset
    weights = (-26.0 / 6.0, 19.0 / 2.0, -7.0, 11.0 / 6.0)
    deriv = np.zeros(mesh.size)
    for step, c in enumerate(weights, start=1):
        shifted = mesh.points + step * d * mesh.normals
        values = green(shifted[:, None, :], mesh.points[None, :, :]) @ mesh.weights
        deriv += c * values
    return deriv / d
