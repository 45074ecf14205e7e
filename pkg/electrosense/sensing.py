"""Measurement systems, the forward operator L(X) = Gxᵀ X Gy, noise and stability diagnostics."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from math import factorial, pi, sqrt
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.linalg import svdvals

from electrosense.constants import MAX_GPT_ORDER, PLACEMENT_TOLERANCE
from electrosense.geometry import BoundaryMesh, closest_points
from electrosense.kernels import green_derivative
from electrosense.wavelet import Box, ScalingFilter, WaveletGrid, green_coeffs

logger = logging.getLogger(__name__)

FAR_FIELD = "far-field"
NEAR_FIELD = "near-field"

MultiIndex = Tuple[int, int]


class SensingConfigError(ValueError):
    """Measurement system or operator request is inconsistent."""


@dataclass(frozen=True, eq=False)
class MeasurementSystem:
    sources: np.ndarray
    receivers: np.ndarray
    layout: str
    coincident: bool
    delta: float
    rho: float
    grid_shape: Optional[Tuple[int, int]] = None
    spacing: Optional[float] = None
    box: Optional[Box] = None

    def __post_init__(self) -> None:
        if self.sources.ndim != 2 or self.sources.shape[1] != 2 or not len(self.sources):
            raise SensingConfigError("sources must be a non-empty (N, 2) array")
        if self.receivers.ndim != 2 or self.receivers.shape[1] != 2 or not len(self.receivers):
            raise SensingConfigError("receivers must be a non-empty (N, 2) array")
        if self.coincident and self.sources is not self.receivers:
            if not np.array_equal(self.sources, self.receivers):
                raise SensingConfigError("coincident systems need identical sources and receivers")

    @property
    def shape(self) -> Tuple[int, int]:
        return (len(self.sources), len(self.receivers))


@dataclass(frozen=True, eq=False)
class MsrMatrix:
    values: np.ndarray
    noisy: bool = False
    provenance: str = "simulated"

    def __post_init__(self) -> None:
        if self.values.ndim != 2:
            raise SensingConfigError("MSR matrix must be two-dimensional")

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape  # type: ignore[return-value]


@dataclass(frozen=True)
class NoiseModel:
    level: float
    seed: int = 0

    def sigma(self, V: MsrMatrix) -> float:
        """σ = σ₀‖V‖_F / √(N_s N_r)."""
        ns, nr = V.shape
        return self.level * float(np.linalg.norm(V.values)) / sqrt(ns * nr)


def far_field_system(
    count: int, radius: float, center: Sequence[float] = (0.0, 0.0), delta: float = 1.0
) -> MeasurementSystem:
    """``count`` coincident transmitters equispaced on a circle of radius ρ."""
    if count < 1:
        raise SensingConfigError("far-field system needs at least one transmitter")
    if not radius > delta:
        raise SensingConfigError(f"far-field radius {radius} must exceed target size {delta}")
    theta = 2.0 * pi * np.arange(count) / count
    pts = np.asarray(center, dtype=float) + radius * np.stack([np.cos(theta), np.sin(theta)], -1)
    return MeasurementSystem(sources=pts, receivers=pts, layout=FAR_FIELD, coincident=True,
                             delta=delta, rho=radius)


def near_field_system(
    box: Box, per_axis: int, mesh: BoundaryMesh, standoff: float, delta: float = 1.0
) -> MeasurementSystem:
    """Cell-centered ``per_axis``² grid over Ω, row-major with x₁ as the slow index.

    Points closer than ``standoff`` to ∂D are pushed away from the curve to that
    distance; grid positions keep their indices.
    """
    if per_axis < 1:
        raise SensingConfigError("near-field grid needs at least one transmitter per axis")
    if not standoff > 0:
        raise SensingConfigError("standoff must be > 0")
    xmin, xmax, ymin, ymax = box
    c1 = xmin + (np.arange(per_axis) + 0.5) * (xmax - xmin) / per_axis
    c2 = ymin + (np.arange(per_axis) + 0.5) * (ymax - ymin) / per_axis
    g1, g2 = np.meshgrid(c1, c2, indexing="ij")
    pts = np.stack([g1.ravel(), g2.ravel()], axis=-1)

    dist, foot = closest_points(pts, mesh.points, mesh.shape)
    moved = dist < standoff
    if np.any(moved):
        direction = np.zeros((int(moved.sum()), 2))
        offsets = pts[moved] - foot[moved]
        norm = np.hypot(offsets[:, 0], offsets[:, 1])
        ok = norm > PLACEMENT_TOLERANCE
        direction[ok] = offsets[ok] / norm[ok, None]
        if not np.all(ok):
            stuck = foot[moved][~ok]
            gaps = np.linalg.norm(mesh.points[None, :, :] - stuck[:, None, :], axis=-1)
            direction[~ok] = mesh.normals[np.argmin(gaps, axis=1)]
        pts[moved] = foot[moved] + standoff * direction
        logger.info(
            "Moved %s near-field transmitter(s) out to the %.3g standoff", int(moved.sum()), standoff
        )
    spacing = (xmax - xmin) / per_axis
    return MeasurementSystem(sources=pts, receivers=pts, layout=NEAR_FIELD, coincident=True,
                             delta=delta, rho=spacing, grid_shape=(per_axis, per_axis),
                             spacing=spacing, box=(xmin, xmax, ymin, ymax))


def add_noise(V: MsrMatrix, model: NoiseModel) -> MsrMatrix:
    """V + W with W i.i.d. N(0, σ²) drawn from a generator seeded by ``model.seed``."""
    sigma = model.sigma(V)
    rng = np.random.default_rng(model.seed)
    noise = rng.standard_normal(V.values.shape) * sigma
    logger.info("Added white noise: level %.3g, sigma %.4g, seed %s", model.level, sigma, model.seed)
    return MsrMatrix(values=V.values + noise, noisy=model.level > 0, provenance=V.provenance)


def multi_indices(order: int) -> List[MultiIndex]:
    """α = (a, b) with 1 ≤ a + b ≤ order, by order then a descending."""
    return [(a, m - a) for m in range(1, order + 1) for a in range(m, -1, -1)]


def taylor_coeffs(points: np.ndarray, order: int) -> np.ndarray:
    """(−1)^{|α|}/α! ∂^αΓ(x) per multi-index (rows) and point (columns)."""
    rows = [
        (-1.0) ** (a + b) / (factorial(a) * factorial(b)) * green_derivative(points, a, b)
        for a, b in multi_indices(order)
    ]
    return np.stack(rows)


@dataclass(frozen=True, eq=False)
class ForwardOperator:
    """L(X) = Gxᵀ X Gy over a wavelet (``scale``) or polynomial (``order``) basis."""

    gx: np.ndarray
    gy: np.ndarray
    basis: str
    scale: Optional[int] = None
    order: Optional[int] = None
    grid: Optional[WaveletGrid] = None

    @property
    def size(self) -> int:
        return int(self.gx.shape[0])

    @property
    def data_shape(self) -> Tuple[int, int]:
        return (int(self.gx.shape[1]), int(self.gy.shape[1]))

    def apply(self, X) -> np.ndarray:
        if sp.issparse(X):
            return self.gx.T @ np.asarray(X @ self.gy)
        return self.gx.T @ np.asarray(X) @ self.gy

    def adjoint(self, V: np.ndarray) -> np.ndarray:
        return self.gx @ np.asarray(V) @ self.gy.T


def _wavelet_columns(
    points: np.ndarray, grid: WaveletGrid, depth: int, filt: ScalingFilter,
    smoothing: Optional[float], workers: int,
) -> np.ndarray:
    def column(point: np.ndarray) -> np.ndarray:
        return green_coeffs(point, grid, depth, filt, smoothing=smoothing)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            cols = list(pool.map(column, points))
    else:
        cols = [column(p) for p in points]
    return np.stack(cols, axis=1)


def build_forward_operator(
    system: MeasurementSystem,
    *,
    grid: Optional[WaveletGrid] = None,
    depth: Optional[int] = None,
    filt: Optional[ScalingFilter] = None,
    order: Optional[int] = None,
    smoothing: Optional[float] = None,
    workers: int = 1,
) -> ForwardOperator:
    """Wavelet operator when ``grid`` is given, polynomial operator when ``order`` is."""
    if (grid is None) == (order is None):
        raise SensingConfigError("give exactly one of a wavelet grid or a polynomial order")
    if order is not None:
        if not 1 <= order <= MAX_GPT_ORDER:
            raise SensingConfigError(f"polynomial order must be in [1, {MAX_GPT_ORDER}]")
        gx = taylor_coeffs(system.sources, order)
        gy = gx if system.coincident else taylor_coeffs(system.receivers, order)
        return ForwardOperator(gx=gx, gy=gy, basis="polynomial", order=order)

    if depth is None or filt is None:
        raise SensingConfigError("wavelet operator needs a lattice depth and a scaling filter")
    if smoothing is None:
        xmin, xmax, ymin, ymax = grid.box
        pts = np.vstack([system.sources, system.receivers])
        inside = (pts[:, 0] > xmin) & (pts[:, 0] < xmax) & (pts[:, 1] > ymin) & (pts[:, 1] < ymax)
        if np.any(inside):
            raise SensingConfigError(
                f"{int(inside.sum())} transmitter(s) inside the domain; set a smoothing radius"
            )
    gx = _wavelet_columns(system.sources, grid, depth, filt, smoothing, workers)
    gy = gx if system.coincident else _wavelet_columns(
        system.receivers, grid, depth, filt, smoothing, workers
    )
    logger.info("Built wavelet forward operator: %s coefficients x %s transmitters", *gx.shape)
    return ForwardOperator(gx=gx, gy=gy, basis="wavelet", scale=grid.scale, grid=grid)


def singular_value_profile(op: ForwardOperator, count: Optional[int] = None) -> np.ndarray:
    """Singular values of L as sorted pairwise products of those of Gx and Gy."""
    sx = svdvals(op.gx)
    sy = sx if op.gy is op.gx else svdvals(op.gy)
    values = np.sort(np.outer(sx, sy).ravel())[::-1]
    return values if count is None else values[:count]


def condition_number(op: ForwardOperator) -> float:
    s = svdvals(op.gx)
    return float(s[0] / s[-1]) if s[-1] > 0 else float("inf")


def truncation_residual(V: MsrMatrix, op: ForwardOperator, X) -> float:
    """‖V − L(X)‖_F / ‖V‖_F."""
    return float(np.linalg.norm(V.values - op.apply(X)) / np.linalg.norm(V.values))
