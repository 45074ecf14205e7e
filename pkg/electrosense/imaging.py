"""Boundary images from wavelet coefficient matrices or raw MSR data, and their scores."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from math import ceil
from typing import Optional, Tuple, Union

import numpy as np

from electrosense.features import WaveletCoeffMatrix, row_argmax
from electrosense.geometry import ParametricShape, dense_polyline, distance_to_curve
from electrosense.sensing import NEAR_FIELD, MeasurementSystem, MsrMatrix
from electrosense.types import ScoreRecord

logger = logging.getLogger(__name__)

PROSE = "prose"
LITERAL = "literal"
VARIANTS = (PROSE, LITERAL)


class UnsupportedLayoutError(ValueError):
    """Direct imaging needs a coincident near-field transmitter grid."""


@dataclass(frozen=True, eq=False)
class BoundaryImage:
    """Nonnegative intensities indexed like the lattice, axis 0 along x₁."""

    values: np.ndarray
    method: str
    centers1: np.ndarray
    centers2: np.ndarray
    pixel_size: float
    scale: Optional[int] = None
    origin: Tuple[int, int] = (0, 0)

    @property
    def shape(self):
        return self.values.shape

    def pixel_centers(self) -> np.ndarray:
        c1, c2 = np.meshgrid(self.centers1, self.centers2, indexing="ij")
        return np.stack([c1.ravel(), c2.ravel()], axis=-1)


def _lattice_image(values: np.ndarray, X: WaveletCoeffMatrix, method: str) -> BoundaryImage:
    grid = X.grid
    return BoundaryImage(
        values=values.reshape(grid.counts),
        method=method,
        centers1=grid.centers(0),
        centers2=grid.centers(1),
        pixel_size=grid.pixel_size,
        scale=grid.scale,
        origin=grid.lo,
    )


def image_by_diagonal(X: WaveletCoeffMatrix) -> BoundaryImage:
    """I(n) = |X_{n,n}|."""
    return _lattice_image(np.abs(X.matrix.diagonal()), X, "diagonal")


def image_by_maximum(X: WaveletCoeffMatrix, variant: str = PROSE) -> BoundaryImage:
    """Each row n deposits max_{n'}|X_{n,n'}| at its maximizer n* (``prose``) or at n (``literal``)."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown imaging variant {variant!r}; expected one of {VARIANTS}")
    rows, cols, vals = row_argmax(X.matrix)
    intensity = np.zeros(X.grid.size)
    np.add.at(intensity, cols if variant == PROSE else rows, vals)
    return _lattice_image(intensity, X, f"maximum-{variant}")


def image_direct_msr(V: MsrMatrix, system: MeasurementSystem) -> BoundaryImage:
    """|V_ss| placed on the transmitter grid."""
    if system.layout != NEAR_FIELD or system.grid_shape is None or not system.coincident:
        raise UnsupportedLayoutError(f"direct imaging is not defined for a {system.layout} layout")
    if V.shape != system.shape:
        raise UnsupportedLayoutError(f"MSR matrix {V.shape} does not match the system {system.shape}")
    n1, n2 = system.grid_shape
    xmin, _, ymin, _ = system.box
    spacing = float(system.spacing)
    return BoundaryImage(
        values=np.abs(np.diag(V.values)).reshape(n1, n2),
        method="direct",
        centers1=xmin + (np.arange(n1) + 0.5) * spacing,
        centers2=ymin + (np.arange(n2) + 0.5) * spacing,
        pixel_size=spacing,
    )


@dataclass(frozen=True)
class LocalizationScore:
    hit_fraction: float
    quantile: float
    distance: float
    pixels: int
    unit: float = 1.0

    def to_record(self, method: str) -> ScoreRecord:
        return {
            "method": method,
            "quantile": self.quantile,
            "distance": self.distance,
            "unit": self.unit,
            "hit_fraction": self.hit_fraction,
            "pixels": self.pixels,
        }


def localization_score(
    img: BoundaryImage,
    curve: Union[ParametricShape, np.ndarray],
    quantile: float = 0.05,
    distance: float = 2.0,
    unit: Optional[float] = None,
) -> LocalizationScore:
    """Share of the top ⌈q·N⌉ positive pixels whose centers lie within ``distance`` pixels of ∂D.

    Distances are counted in pixels of size ``unit`` (default: the image's own
    pixel), so images of different resolution can be scored against the same
    physical tolerance.
    """
    if not 0 < quantile <= 0.5:
        raise ValueError(f"quantile must be in (0, 0.5], got {quantile}")
    if distance < 1:
        raise ValueError(f"distance must be >= 1 pixel, got {distance}")
    pixel = img.pixel_size if unit is None else float(unit)
    if not pixel > 0:
        raise ValueError(f"pixel unit must be > 0, got {unit}")
    if isinstance(curve, ParametricShape):
        polyline, shape = dense_polyline(curve), curve
    else:
        polyline, shape = np.asarray(curve), None

    values = img.values.ravel()
    top = int(ceil(quantile * values.size))
    order = np.argsort(-values, kind="stable")[:top]
    order = order[values[order] > 0]
    if order.size == 0:
        return LocalizationScore(hit_fraction=0.0, quantile=quantile, distance=distance, pixels=0,
                                 unit=pixel)
    gaps = distance_to_curve(img.pixel_centers()[order], polyline, shape) / pixel
    hit = float(np.mean(gaps <= distance))
    logger.debug("%s image: %s top pixels, hit fraction %.3f", img.method, order.size, hit)
    return LocalizationScore(hit_fraction=hit, quantile=quantile, distance=distance,
                             pixels=int(order.size), unit=pixel)


def total_intensity(img: BoundaryImage) -> float:
    return float(np.sum(img.values))


def intensity_support(img: BoundaryImage, fraction: float = 0.95) -> int:
    """Fewest pixels holding ``fraction`` of the total intensity."""
    values = np.sort(img.values.ravel())[::-1]
    total = float(values.sum())
    if total == 0:
        return 0
    cumulative = np.cumsum(values)
    return int(min(np.searchsorted(cumulative, fraction * total) + 1, values.size))
