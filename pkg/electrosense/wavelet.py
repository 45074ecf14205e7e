"""Daubechies scaling functions, tensor-product grids over Ω and fine-lattice projections.

Coefficients follow the L²-normalized convention

    φ_{L,n}(x) = 2^{−L} φ(2^{−L}x₁ − n₁) φ(2^{−L}x₂ − n₂),

so ⟨1, φ_{L,n}⟩ = 2^L. Single-level transforms come from PyWavelets with zero
extension; lattice indices are tracked through every level.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from math import ceil, floor, pi, sqrt
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
import pywt
from scipy.signal import upfirdn

from electrosense.constants import (
    DEFAULT_WAVELET,
    LATTICE_MARGIN,
    MIN_TABLE_DEPTH,
    SMOOTHING_SAMPLES,
)

logger = logging.getLogger(__name__)

SQRT2 = sqrt(2.0)

Box = Tuple[float, float, float, float]
SampledFunction = Callable[[np.ndarray, np.ndarray], np.ndarray]


class WaveletError(ValueError):
    """Invalid wavelet, grid or transform input."""


class ResolutionError(WaveletError):
    """Sampling too coarse for the requested scale."""


class SingularSourceError(WaveletError):
    """Green-function source inside Ω with no smoothing radius."""


@dataclass(frozen=True, eq=False)
class ScalingFilter:
    """Orthonormal low-pass taps h (Σh = √2) and the derived quadrature-mirror g."""

    name: str
    h: np.ndarray
    zero_moments: int

    @classmethod
    def from_name(cls, name: str = DEFAULT_WAVELET) -> "ScalingFilter":
        try:
            wav = pywt.Wavelet(name)
        except ValueError as e:
            raise WaveletError(f"Unknown wavelet {name!r}: {e}") from e
        if not wav.orthogonal:
            raise WaveletError(f"Wavelet {name!r} is not orthogonal")
        return cls(name=name, h=np.asarray(wav.rec_lo, dtype=float),
                   zero_moments=int(wav.vanishing_moments_psi))

    @classmethod
    def haar(cls) -> "ScalingFilter":
        return cls.from_name("haar")

    @property
    def g(self) -> np.ndarray:
        k = np.arange(self.h.size)
        return (-1.0) ** k * self.h[::-1]

    @property
    def support(self) -> int:
        """φ and ψ are supported on [0, support]."""
        return int(self.h.size - 1)

    @property
    def first_moment(self) -> float:
        """M₁ = ∫ x φ(x) dx."""
        return float(np.arange(self.h.size) @ self.h / SQRT2)

    @property
    def wavelet(self) -> pywt.Wavelet:
        return pywt.Wavelet(self.name)


@dataclass(frozen=True, eq=False)
class ScalingTable:
    """Samples of φ, φ′ and ψ at x = m·2^{−q} on [0, support]."""

    filter: ScalingFilter
    depth: int
    x: np.ndarray
    phi: np.ndarray
    dphi: np.ndarray
    psi: np.ndarray

    @property
    def step(self) -> float:
        return 2.0 ** (-self.depth)

    def phi_at(self, u: np.ndarray) -> np.ndarray:
        return np.interp(u, self.x, self.phi, left=0.0, right=0.0)

    def dphi_at(self, u: np.ndarray) -> np.ndarray:
        return np.interp(u, self.x, self.dphi, left=0.0, right=0.0)

    def psi_at(self, u: np.ndarray) -> np.ndarray:
        return np.interp(u, self.x, self.psi, left=0.0, right=0.0)


def cascade(filt: ScalingFilter, q: int) -> ScalingTable:
    """Tabulate φ and ψ by ``q`` refinement steps starting from the box function."""
    if q < MIN_TABLE_DEPTH:
        raise WaveletError(f"cascade depth must be >= {MIN_TABLE_DEPTH}, got {q}")
    coarse = np.array([1.0])
    for _ in range(q - 1):
        coarse = SQRT2 * upfirdn(filt.h, coarse, up=2)
    phi = SQRT2 * upfirdn(filt.h, coarse, up=2)
    psi = SQRT2 * upfirdn(coarse, filt.g, up=2 ** (q - 1))

    count = filt.support * 2**q + 1
    phi = np.pad(phi, (0, count - phi.size))
    psi = np.pad(psi, (0, count - psi.size))
    x = np.arange(count) * 2.0 ** (-q)
    dphi = np.gradient(phi, 2.0 ** (-q))
    logger.debug("Cascade %s at depth %s: %s samples", filt.name, q, count)
    return ScalingTable(filter=filt, depth=q, x=x, phi=phi, dphi=dphi, psi=psi)


def eval_phi1d(table: ScalingTable, L: int, n: int, x: np.ndarray) -> np.ndarray:
    s = 2.0 ** (-L)
    return sqrt(s) * table.phi_at(s * np.asarray(x, dtype=float) - n)


def eval_phi2d(table: ScalingTable, L: int, n: Sequence[int], x: np.ndarray) -> np.ndarray:
    """2^{−L} φ(2^{−L}x₁ − n₁) φ(2^{−L}x₂ − n₂) for points ``x`` of shape ``(..., 2)``."""
    pts = np.asarray(x, dtype=float)
    s = 2.0 ** (-L)
    return s * table.phi_at(s * pts[..., 0] - n[0]) * table.phi_at(s * pts[..., 1] - n[1])


def phi_gram(table: ScalingTable, L: int, indices: Sequence[int], oversample: int = 8) -> np.ndarray:
    """Gram matrix of 1D φ_{L,n} for ``indices`` by a Riemann sum on the table lattice."""
    S = table.filter.support
    lo, hi = min(indices), max(indices) + S
    h = 2.0 ** (L - table.depth) / oversample
    x = np.arange(lo * 2.0**L, hi * 2.0**L, h)
    values = np.stack([eval_phi1d(table, L, n, x) for n in indices])
    return values @ values.T * h


@dataclass(frozen=True)
class WaveletGrid:
    """Index set Λ of φ_{L,n} whose support meets the open box Ω, row-major."""

    scale: int
    box: Box
    support: int
    offset: float
    lo: Tuple[int, int]
    hi: Tuple[int, int]

    @classmethod
    def covering(cls, box: Sequence[float], scale: int, filt: ScalingFilter) -> "WaveletGrid":
        xmin, xmax, ymin, ymax = (float(v) for v in box)
        if not (xmin < xmax and ymin < ymax):
            raise WaveletError(f"domain box {tuple(box)} is empty")
        s = 2.0 ** (-scale)
        S = filt.support
        lo = (floor(xmin * s - S) + 1, floor(ymin * s - S) + 1)
        hi = (ceil(xmax * s) - 1, ceil(ymax * s) - 1)
        return cls(scale=scale, box=(xmin, xmax, ymin, ymax), support=S,
                   offset=filt.first_moment, lo=lo, hi=hi)

    @property
    def counts(self) -> Tuple[int, int]:
        return (self.hi[0] - self.lo[0] + 1, self.hi[1] - self.lo[1] + 1)

    @property
    def size(self) -> int:
        c1, c2 = self.counts
        return c1 * c2

    @property
    def pixel_size(self) -> float:
        return 2.0**self.scale

    def axis_indices(self, axis: int) -> np.ndarray:
        return np.arange(self.lo[axis], self.hi[axis] + 1)

    def indices(self) -> np.ndarray:
        n1, n2 = np.meshgrid(self.axis_indices(0), self.axis_indices(1), indexing="ij")
        return np.stack([n1.ravel(), n2.ravel()], axis=-1)

    def linear(self, n1: np.ndarray, n2: np.ndarray) -> np.ndarray:
        return (np.asarray(n1) - self.lo[0]) * self.counts[1] + (np.asarray(n2) - self.lo[1])

    def unravel(self, index: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        i1, i2 = np.divmod(np.asarray(index), self.counts[1])
        return i1 + self.lo[0], i2 + self.lo[1]

    def centers(self, axis: int) -> np.ndarray:
        """Pixel centers 2^L(n + M₁) along ``axis``."""
        return self.pixel_size * (self.axis_indices(axis) + self.offset)

    def interior(self) -> np.ndarray:
        """Mask of indices whose support lies inside the closed box."""
        s = self.pixel_size
        n1 = self.axis_indices(0)
        n2 = self.axis_indices(1)
        in1 = (s * n1 >= self.box[0]) & (s * (n1 + self.support) <= self.box[1])
        in2 = (s * n2 >= self.box[2]) & (s * (n2 + self.support) <= self.box[3])
        return in1[:, None] & in2[None, :]


@dataclass(frozen=True, eq=False)
class Projection:
    """Scale-L coefficients of a sampled function; details ordered φ⊗ψ, ψ⊗φ, ψ⊗ψ."""

    grid: WaveletGrid
    approx: np.ndarray
    details: Optional[Tuple[np.ndarray, np.ndarray, np.ndarray]] = None


def _dwt_axis(
    arrays: Sequence[np.ndarray], start: int, axis: int, wavelet: pywt.Wavelet
) -> Tuple[list, int]:
    """One analysis step along ``axis``; coefficient n sits at index n − new_start."""
    if start % 2:
        pad = [(0, 0), (0, 0)]
        pad[axis] = (1, 0)
        arrays = [np.pad(a, pad) for a in arrays]
        start -= 1
    out = [pywt.dwt(a, wavelet, mode="zero", axis=axis) for a in arrays]
    return out, start // 2 + 1 - wavelet.dec_len // 2


def _crop(arr: np.ndarray, start: Sequence[int], grid: WaveletGrid) -> np.ndarray:
    (c1, c2), (o1, o2) = grid.counts, (grid.lo[0] - start[0], grid.lo[1] - start[1])
    if o1 < 0 or o2 < 0 or o1 + c1 > arr.shape[0] or o2 + c2 > arr.shape[1]:
        raise WaveletError("fine lattice does not cover the wavelet index set")
    return arr[o1:o1 + c1, o2:o2 + c2]


def project(
    func: SampledFunction,
    grid: WaveletGrid,
    depth: int,
    filt: ScalingFilter,
    *,
    details: bool = False,
) -> Projection:
    """Coefficients ⟨f, φ_{L,n}⟩ for n ∈ Λ from samples on the 2^{−depth} lattice.

    Fine coefficients are 2^{−q} f(2^{−q}(k + M₁)) over the union of supports of Λ,
    followed by q + L analysis steps along both axes.
    """
    levels = depth + grid.scale
    if depth < -grid.scale + LATTICE_MARGIN:
        raise ResolutionError(
            f"lattice depth {depth} too coarse for scale {grid.scale}; "
            f"need >= {-grid.scale + LATTICE_MARGIN}"
        )
    factor = 2**levels
    S = grid.support
    start = [grid.lo[0] * factor, grid.lo[1] * factor]
    h = 2.0 ** (-depth)
    axes = [
        h * (np.arange(start[a], (grid.hi[a] + S) * factor) + filt.first_moment) for a in (0, 1)
    ]
    samples = h * func(axes[0][:, None], axes[1][None, :])
    logger.debug("Projecting on %sx%s fine lattice (%s levels)", *samples.shape, levels)

    wavelet = filt.wavelet
    arr = samples
    for level in range(levels):
        if details and level == levels - 1:
            [(lo0, hi0)], start[0] = _dwt_axis([arr], start[0], 0, wavelet)
            [(ll, lh), (hl, hh)], start[1] = _dwt_axis([lo0, hi0], start[1], 1, wavelet)
            return Projection(
                grid=grid,
                approx=_crop(ll, start, grid),
                details=(_crop(lh, start, grid), _crop(hl, start, grid), _crop(hh, start, grid)),
            )
        [(arr, _)], start[0] = _dwt_axis([arr], start[0], 0, wavelet)
        [(arr, _)], start[1] = _dwt_axis([arr], start[1], 1, wavelet)
    return Projection(grid=grid, approx=_crop(arr, start, grid))


def _inside(point: Sequence[float], box: Box) -> bool:
    return box[0] < point[0] < box[1] and box[2] < point[1] < box[3]


def _green_sampler(source: Sequence[float], radius: float) -> SampledFunction:
    s1, s2 = float(source[0]), float(source[1])

    def sampled_green(x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
        return np.log(np.maximum(np.hypot(x1 - s1, x2 - s2), radius)) / (2.0 * pi)

    return sampled_green


def green_coeffs(
    source: Sequence[float],
    grid: WaveletGrid,
    depth: int,
    filt: ScalingFilter,
    smoothing: Optional[float] = None,
) -> np.ndarray:
    """Row-major coefficients ⟨Γ(· − x_s), φ_{L,n}⟩ over Λ.

    Samples closer than ``smoothing`` lattice steps to the source take the ring
    average (1/2π) log r of Γ at that radius.
    """
    if smoothing is None and _inside(source, grid.box):
        raise SingularSourceError(
            f"source {tuple(source)} lies inside the domain; a smoothing radius is required"
        )
    radius = (SMOOTHING_SAMPLES if smoothing is None else smoothing) * 2.0 ** (-depth)
    return project(_green_sampler(source, radius), grid, depth, filt).approx.ravel()


def psi_moments(table: ScalingTable, orders: Sequence[int], origin: float = 0.0) -> np.ndarray:
    """∫ (x − origin)^k ψ(x) dx for each k, as sums over the table lattice."""
    u = table.x - origin
    return np.array([float(np.sum(u**k * table.psi)) * table.step for k in orders])


def detail_center(table: ScalingTable) -> float:
    """Point c with ∫ (x − c)^{p+1} ψ = 0, p the number of vanishing moments.

    Expanding a smooth f about 2^j(n + c) leaves ⟨f, ψ_{j,n}⟩ with no 2^{(p+2)j} term.
    """
    p = table.filter.zero_moments
    origin = 0.5 * table.filter.support
    m_p, m_next = psi_moments(table, (p, p + 1), origin)
    return origin + m_next / ((p + 1) * m_p)


@dataclass(frozen=True)
class DetailDecay:
    """|⟨Γ(· − x_s), ψ_{j,n} ⊗ φ_{j,n}⟩| per scale, for a source ``distance`` away along x₁."""

    distance: float
    scales: Tuple[int, ...]
    values: Tuple[float, ...]

    @property
    def slope(self) -> float:
        """Least-squares slope of log₂|d_j| against j."""
        return float(np.polyfit(self.scales, np.log2(self.values), 1)[0])


def green_detail_decay(
    distance: float, scales: Sequence[int], table: ScalingTable
) -> DetailDecay:
    """Detail coefficients of Γ at the index nearest the origin, source at distance ρ.

    The coefficient is located at 2^j(n₁ + c, n₂ + M₁) with c from
    :func:`detail_center`; the source sits ``distance`` further along x₁.
    """
    if not distance > 0:
        raise WaveletError(f"source distance must be > 0, got {distance}")
    filt = table.filter
    center = detail_center(table)
    values = []
    for j in scales:
        s = 2.0**j
        grid = WaveletGrid.covering((-s, s, -s, s), j, filt)
        n1, n2 = round(-center), round(-filt.first_moment)
        location = (s * (n1 + center), s * (n2 + filt.first_moment))
        source = (location[0] + distance, location[1])
        depth = -j + LATTICE_MARGIN
        proj = project(_green_sampler(source, s * 2.0 ** (-LATTICE_MARGIN)), grid, depth, filt,
                       details=True)
        i1, i2 = n1 - grid.lo[0], n2 - grid.lo[1]
        values.append(abs(float(proj.details[1][i1, i2])))
        logger.debug("Scale %s: detail %.4g at %s, source %s", j, values[-1], location, source)
    return DetailDecay(distance=float(distance), scales=tuple(int(j) for j in scales),
                       values=tuple(values))


def fwt2(samples: np.ndarray, levels: int, filt: ScalingFilter) -> list:
    """Multi-level 2D transform with zero extension (PyWavelets coefficient layout)."""
    arr = np.asarray(samples, dtype=float)
    if arr.ndim != 2:
        raise WaveletError("fwt2 expects a 2D array")
    if levels < 1 or any(side % 2**levels for side in arr.shape):
        raise WaveletError(f"array sides {arr.shape} are not divisible by 2^{levels}")
    return pywt.wavedec2(arr, filt.wavelet, mode="zero", level=levels)


def ifwt2(coeffs: list, filt: ScalingFilter, shape: Optional[Tuple[int, int]] = None) -> np.ndarray:
    out = pywt.waverec2(coeffs, filt.wavelet, mode="zero")
    if shape is not None:
        out = out[: shape[0], : shape[1]]
    return out
