"""Parametric target shapes and quadrature-ready boundary discretizations."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from math import pi
from typing import Tuple

import numpy as np
from scipy.spatial import cKDTree

from electrosense.constants import (
    COINCIDENT_TOLERANCE,
    CURVE_SAMPLES,
    FOOT_NEWTON_STEPS,
    MIN_MESH_NODES,
)

logger = logging.getLogger(__name__)

SHAPE_KINDS = ("disk", "ellipse", "flower", "custom")

Point = Tuple[float, float]


class InvalidShapeError(ValueError):
    """Shape parameters do not describe a closed simple C² curve."""


@dataclass(frozen=True)
class ParametricShape:
    """Closed curve given by a radius function (disk, flower, custom) or an ellipse.

    The flower is r(θ) = R(1 + a·cos mθ); custom curves add Fourier harmonics
    ``(m, a_m, b_m)`` to the unit radius. The curve is scaled, then rotated, then
    translated to ``center``.
    """

    kind: str = "flower"
    radius: float = 1.0
    semi_axes: Tuple[float, float] = (1.0, 1.0)
    petals: int = 5
    amplitude: float = 0.3
    harmonics: Tuple[Tuple[int, float, float], ...] = ()
    center: Point = (0.0, 0.0)
    rotation: float = 0.0
    scale: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in SHAPE_KINDS:
            raise InvalidShapeError(f"Unknown shape kind {self.kind!r}; expected one of {SHAPE_KINDS}")
        if not self.scale > 0:
            raise InvalidShapeError("scale must be > 0")
        if self.kind == "ellipse":
            if min(self.semi_axes) <= 0:
                raise InvalidShapeError("ellipse semi-axes must be > 0")
            return
        if not self.radius > 0:
            raise InvalidShapeError("radius must be > 0")
        if self.kind == "flower" and self.petals < 1:
            raise InvalidShapeError("flower needs at least one petal")
        theta = np.linspace(0.0, 2.0 * pi, CURVE_SAMPLES, endpoint=False)
        r, _, _ = self._radius(theta)
        if r.min() <= 0:
            raise InvalidShapeError(
                f"radius function reaches {r.min():.3g}; the curve is not simple"
            )

    @classmethod
    def disk(cls, radius: float = 1.0, **kwargs) -> "ParametricShape":
        return cls(kind="disk", radius=radius, **kwargs)

    @classmethod
    def ellipse(cls, a: float, b: float, **kwargs) -> "ParametricShape":
        return cls(kind="ellipse", semi_axes=(a, b), **kwargs)

    @classmethod
    def flower(
        cls, radius: float = 1.0, petals: int = 5, amplitude: float = 0.3, **kwargs
    ) -> "ParametricShape":
        return cls(kind="flower", radius=radius, petals=petals, amplitude=amplitude, **kwargs)

    def _radius(self, theta: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        R = self.radius
        if self.kind == "disk":
            one = np.ones_like(theta)
            return R * one, 0.0 * one, 0.0 * one
        if self.kind == "flower":
            m, a = self.petals, self.amplitude
            c, s = np.cos(m * theta), np.sin(m * theta)
            return R * (1.0 + a * c), -R * a * m * s, -R * a * m * m * c
        r = np.ones_like(theta)
        dr = np.zeros_like(theta)
        ddr = np.zeros_like(theta)
        for m, am, bm in self.harmonics:
            c, s = np.cos(m * theta), np.sin(m * theta)
            r += am * c + bm * s
            dr += m * (bm * c - am * s)
            ddr -= m * m * (am * c + bm * s)
        return R * r, R * dr, R * ddr

    def _local(self, t: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        c, s = np.cos(t), np.sin(t)
        if self.kind == "ellipse":
            a, b = self.semi_axes
            z = np.stack([a * c, b * s], axis=-1)
            dz = np.stack([-a * s, b * c], axis=-1)
            return z, dz, -z
        r, dr, ddr = self._radius(t)
        z = np.stack([r * c, r * s], axis=-1)
        dz = np.stack([dr * c - r * s, dr * s + r * c], axis=-1)
        ddz = np.stack(
            [ddr * c - 2.0 * dr * s - r * c, ddr * s + 2.0 * dr * c - r * s], axis=-1
        )
        return z, dz, ddz

    def evaluate(self, t: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Points, first and second parameter derivatives at parameters ``t``."""
        t = np.asarray(t, dtype=float)
        z, dz, ddz = self._local(t)
        cr, sr = np.cos(self.rotation), np.sin(self.rotation)
        rot = self.scale * np.array([[cr, -sr], [sr, cr]])
        center = np.asarray(self.center, dtype=float)
        return z @ rot.T + center, dz @ rot.T, ddz @ rot.T


@dataclass(frozen=True)
class BoundaryMesh:
    """Equispaced-in-parameter nodes on ∂D with trapezoidal arc-length weights."""

    shape: ParametricShape
    parameters: np.ndarray
    points: np.ndarray
    tangents: np.ndarray
    normals: np.ndarray
    curvature: np.ndarray
    weights: np.ndarray

    @property
    def size(self) -> int:
        return int(self.points.shape[0])

    @property
    def perimeter(self) -> float:
        return float(self.weights.sum())

    @property
    def spacing(self) -> float:
        """Largest distance between consecutive nodes."""
        gaps = np.roll(self.points, -1, axis=0) - self.points
        return float(np.hypot(gaps[:, 0], gaps[:, 1]).max())


def sample_boundary(shape: ParametricShape, M: int) -> BoundaryMesh:
    if M < MIN_MESH_NODES or M % 2:
        raise InvalidShapeError(f"node count must be even and >= {MIN_MESH_NODES}, got {M}")
    t = 2.0 * pi * np.arange(M) / M
    z, dz, ddz = shape.evaluate(t)
    speed = np.hypot(dz[:, 0], dz[:, 1])
    if speed.min() <= COINCIDENT_TOLERANCE:
        raise InvalidShapeError("parametrization is degenerate (zero speed)")
    tangents = dz / speed[:, None]
    normals = np.stack([tangents[:, 1], -tangents[:, 0]], axis=-1)
    curvature = (dz[:, 0] * ddz[:, 1] - dz[:, 1] * ddz[:, 0]) / speed**3
    weights = speed * (2.0 * pi / M)
    logger.debug("Sampled %s boundary with %s nodes", shape.kind, M)
    return BoundaryMesh(
        shape=shape,
        parameters=t,
        points=z,
        tangents=tangents,
        normals=normals,
        curvature=curvature,
        weights=weights,
    )


def signed_area(mesh: BoundaryMesh) -> float:
    """½∮⟨x, ν⟩ ds; positive for counterclockwise curves."""
    return 0.5 * float(np.sum(np.einsum("ij,ij->i", mesh.points, mesh.normals) * mesh.weights))


def _refine_feet(
    pts: np.ndarray, t: np.ndarray, shape: ParametricShape
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Newton iterations on ½|z(t) − p|² from the chord parameters ``t``.

    Returns distances, feet and a mask of feet where p − z(t) is normal to the curve.
    """
    for _ in range(FOOT_NEWTON_STEPS):
        z, dz, ddz = shape.evaluate(t)
        r = z - pts
        speed2 = np.einsum("ij,ij->i", dz, dz)
        grad = np.einsum("ij,ij->i", r, dz)
        hess = speed2 + np.einsum("ij,ij->i", r, ddz)
        # Gauss-Newton near the centre of curvature
        hess = np.where(hess > 1e-3 * speed2, hess, speed2)
        t = t - grad / hess
    foot, dz, _ = shape.evaluate(t)
    r = foot - pts
    d = np.hypot(r[:, 0], r[:, 1])
    normal = np.abs(np.einsum("ij,ij->i", r, dz)) <= 1e-9 * np.hypot(dz[:, 0], dz[:, 1]) * (d + 1.0)
    return d, foot, normal


def closest_points(
    points: np.ndarray, polyline: np.ndarray, shape: ParametricShape | None = None
) -> Tuple[np.ndarray, np.ndarray]:
    """Distances from ``points`` to the closed ``polyline`` and the foot points.

    Chord feet are off by up to half a segment for points far inside a curved
    boundary. When ``polyline`` samples ``shape`` at equispaced parameters (as
    ``sample_boundary`` and ``dense_polyline`` do), feet are refined on the
    exact curve.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    nodes = np.asarray(polyline, dtype=float)
    n = nodes.shape[0]
    _, nearest = cKDTree(nodes).query(pts)
    best_d = np.full(pts.shape[0], np.inf)
    best_foot = np.zeros_like(pts)
    best_t = np.zeros(pts.shape[0])
    best_seg = np.zeros(pts.shape[0])
    for shift in (-1, 0):
        a = nodes[(nearest + shift) % n]
        b = nodes[(nearest + shift + 1) % n]
        ab = b - a
        t = np.clip(np.einsum("ij,ij->i", pts - a, ab) / np.einsum("ij,ij->i", ab, ab), 0.0, 1.0)
        foot = a + t[:, None] * ab
        d = np.hypot(*(pts - foot).T)
        better = d < best_d
        best_d[better] = d[better]
        best_foot[better] = foot[better]
        best_t[better] = (2.0 * pi / n) * ((nearest + shift) % n + t)[better]
        best_seg[better] = np.einsum("ij,ij->i", ab, ab)[better]
    if shape is None:
        return best_d, best_foot
    d, foot, normal = _refine_feet(pts, best_t, shape)
    better = normal & (d <= best_d + np.sqrt(best_seg))
    best_d[better] = d[better]
    best_foot[better] = foot[better]
    return best_d, best_foot


def distance_to_curve(
    points: np.ndarray, polyline: np.ndarray, shape: ParametricShape | None = None
) -> np.ndarray:
    return closest_points(points, polyline, shape)[0]


def dense_polyline(shape: ParametricShape, count: int = CURVE_SAMPLES) -> np.ndarray:
    return sample_boundary(shape, count).points
