"""Feature matrices of T_D: wavelet coefficients, GPTs, band masks and their diagnostics."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from math import ceil, sqrt
from typing import List, Optional, Protocol, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import norm as sparse_norm

from electrosense.bem import (
    Conductivity,
    DensitySolver,
    NpMatrix,
    assemble_np,
    tau_bilinear,
)
from electrosense.constants import DROP_TOLERANCE, LATTICE_MARGIN, NODES_PER_SUPPORT
from electrosense.geometry import BoundaryMesh
from electrosense.sensing import MultiIndex, multi_indices
from electrosense.types import NTermPoint
from electrosense.wavelet import (
    Box,
    ResolutionError,
    ScalingFilter,
    ScalingTable,
    WaveletGrid,
    project,
)

logger = logging.getLogger(__name__)


class TruncationDecayError(ArithmeticError):
    """Truncation errors did not shrink from one scale to the next."""


class SmoothFunction(Protocol):
    def __call__(self, x1: np.ndarray, x2: np.ndarray) -> np.ndarray: ...

    def gradient(self, x1: np.ndarray, x2: np.ndarray) -> Tuple[np.ndarray, np.ndarray]: ...


@dataclass(frozen=True)
class GaussianBump:
    """exp(−|x − c|² / width²)."""

    center: Tuple[float, float] = (0.0, 0.0)
    width: float = 0.5

    def __call__(self, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
        d1, d2 = x1 - self.center[0], x2 - self.center[1]
        return np.exp(-(d1**2 + d2**2) / self.width**2)

    def gradient(self, x1: np.ndarray, x2: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        d1, d2 = x1 - self.center[0], x2 - self.center[1]
        value = self(x1, x2)
        scale = -2.0 / self.width**2
        return scale * d1 * value, scale * d2 * value


@dataclass(frozen=True)
class LinearFunction:
    c1: float = 1.0
    c2: float = 0.0
    c0: float = 0.0

    def __call__(self, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
        return self.c0 + self.c1 * x1 + self.c2 * x2

    def gradient(self, x1: np.ndarray, x2: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        shape = np.broadcast(x1, x2).shape
        return np.full(shape, self.c1), np.full(shape, self.c2)


@dataclass(frozen=True)
class Monomial:
    """x₁^a x₂^b."""

    a: int
    b: int

    def __call__(self, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
        return x1**self.a * x2**self.b

    def gradient(self, x1: np.ndarray, x2: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        d1 = self.a * x1 ** max(self.a - 1, 0) * x2**self.b if self.a else 0.0 * x1
        d2 = self.b * x1**self.a * x2 ** max(self.b - 1, 0) if self.b else 0.0 * x2
        return d1, d2


def trace(func: SmoothFunction, mesh: BoundaryMesh) -> np.ndarray:
    return func(mesh.points[:, 0], mesh.points[:, 1])


def normal_derivative(func: SmoothFunction, mesh: BoundaryMesh) -> np.ndarray:
    g1, g2 = func.gradient(mesh.points[:, 0], mesh.points[:, 1])
    return g1 * mesh.normals[:, 0] + g2 * mesh.normals[:, 1]


@dataclass(frozen=True, eq=False)
class WaveletCoeffMatrix:
    """X_{n,n'} = T_D(φ_{L,n}, φ_{L,n'}) over the row-major index space of ``grid``."""

    grid: WaveletGrid
    matrix: sp.csr_matrix
    active: np.ndarray

    @property
    def scale(self) -> int:
        return self.grid.scale

    @property
    def nnz(self) -> int:
        return int(self.matrix.nnz)

    @property
    def frobenius(self) -> float:
        return float(sparse_norm(self.matrix)) if self.matrix.nnz else 0.0

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()


def _axis_tables(
    table: ScalingTable, grid: WaveletGrid, coords: np.ndarray, axis: int
) -> Tuple[np.ndarray, np.ndarray]:
    u = coords / grid.pixel_size
    arg = u[None, :] - grid.axis_indices(axis)[:, None]
    return table.phi_at(arg), table.dphi_at(arg)


def assemble_wavelet_matrix(
    mesh: BoundaryMesh,
    cond: Conductivity,
    grid: WaveletGrid,
    table: ScalingTable,
    np_matrix: Optional[NpMatrix] = None,
    *,
    solver: Optional[DensitySolver] = None,
    drop_tolerance: float = DROP_TOLERANCE,
) -> WaveletCoeffMatrix:
    """One density solve per index whose support meets ∂D, traces for every column."""
    crossing = grid.support * grid.pixel_size / mesh.spacing
    if crossing < NODES_PER_SUPPORT:
        raise ResolutionError(
            f"mesh spacing {mesh.spacing:.3g} gives {crossing:.1f} nodes per wavelet support; "
            f"need >= {NODES_PER_SUPPORT}"
        )
    if solver is None:
        solver = DensitySolver(np_matrix if np_matrix is not None else assemble_np(mesh), cond)

    A1, dA1 = _axis_tables(table, grid, mesh.points[:, 0], 0)
    A2, dA2 = _axis_tables(table, grid, mesh.points[:, 1], 1)
    touch = ((A1 != 0).astype(float) @ (A2 != 0).T.astype(float)) > 0
    a1, a2 = np.nonzero(touch)
    size = grid.size
    active = np.zeros(size, dtype=bool)
    lin = a1 * grid.counts[1] + a2
    active[lin] = True
    if lin.size == 0:
        logger.warning("No scaling function support meets the boundary at scale %s", grid.scale)
        return WaveletCoeffMatrix(grid=grid, matrix=sp.csr_matrix((size, size)), active=active)

    s = 1.0 / grid.pixel_size
    traces = s * A1[a1] * A2[a2]
    dnu = s * s * (mesh.normals[:, 0] * dA1[a1] * A2[a2] + mesh.normals[:, 1] * A1[a1] * dA2[a2])
    density = solver.solve(dnu.T)
    block = (density * mesh.weights[:, None]).T @ traces.T
    block[np.abs(block) < drop_tolerance] = 0.0

    r, c = np.nonzero(block)
    matrix = sp.csr_matrix((block[r, c], (lin[r], lin[c])), shape=(size, size))
    matrix.sort_indices()
    logger.info(
        "Assembled wavelet matrix at scale %s: %s active indices, %s nonzeros",
        grid.scale, lin.size, matrix.nnz,
    )
    return WaveletCoeffMatrix(grid=grid, matrix=matrix, active=active)


@dataclass(frozen=True, eq=False)
class GptMatrix:
    order: int
    indices: List[MultiIndex]
    entries: np.ndarray

    def block(self, m: int, n: int) -> np.ndarray:
        """Entries with |α| = m and |β| = n."""
        rows = [i for i, (a, b) in enumerate(self.indices) if a + b == m]
        cols = [j for j, (a, b) in enumerate(self.indices) if a + b == n]
        return self.entries[np.ix_(rows, cols)]


def assemble_gpt(
    mesh: BoundaryMesh, cond: Conductivity, order: int, np_matrix: Optional[NpMatrix] = None
) -> GptMatrix:
    indices = multi_indices(order)
    monomials = [Monomial(a, b) for a, b in indices]
    dnu = np.stack([normal_derivative(m, mesh) for m in monomials], axis=1)
    traces = np.stack([trace(m, mesh) for m in monomials], axis=1)
    solver = DensitySolver(np_matrix if np_matrix is not None else assemble_np(mesh), cond)
    density = solver.solve(dnu)
    entries = (density * mesh.weights[:, None]).T @ traces
    return GptMatrix(order=order, indices=indices, entries=entries)


@dataclass(frozen=True, eq=False)
class BandMask:
    """Pairs (n, n') with |n − n'|_∞ ≤ N₀, as sorted linear index arrays and a boolean matrix."""

    grid: WaveletGrid
    half_width: int
    rows: np.ndarray
    cols: np.ndarray
    matrix: sp.csr_matrix

    @property
    def count(self) -> int:
        return int(self.rows.size)

    @property
    def fraction(self) -> float:
        return self.count / float(self.grid.size) ** 2

    @property
    def bands(self) -> int:
        """Band diagonals per lattice axis."""
        return 2 * self.half_width + 1


def build_band_mask(grid: WaveletGrid, half_width: int) -> BandMask:
    if half_width < 0:
        raise ValueError(f"mask half-width must be >= 0, got {half_width}")
    c1, c2 = grid.counts
    i1, i2 = np.meshgrid(np.arange(c1), np.arange(c2), indexing="ij")
    i1, i2 = i1.ravel(), i2.ravel()
    rows, cols = [], []
    for d1 in range(-half_width, half_width + 1):
        for d2 in range(-half_width, half_width + 1):
            j1, j2 = i1 + d1, i2 + d2
            ok = (j1 >= 0) & (j1 < c1) & (j2 >= 0) & (j2 < c2)
            rows.append(i1[ok] * c2 + i2[ok])
            cols.append(j1[ok] * c2 + j2[ok])
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    matrix = sp.csr_matrix((np.ones(r.size, dtype=bool), (r, c)), shape=(grid.size, grid.size))
    matrix.sort_indices()
    coo = matrix.tocoo()
    logger.debug("Band mask N0=%s: %s entries (%.2f%%)", half_width, coo.nnz,
                 100.0 * coo.nnz / grid.size**2)
    return BandMask(grid=grid, half_width=half_width, rows=coo.row.astype(np.int64),
                    cols=coo.col.astype(np.int64), matrix=matrix)


def mask_error(X: WaveletCoeffMatrix, mask: BandMask) -> float:
    """‖X − M∘X‖_F / ‖X‖_F."""
    total = X.frobenius
    if total == 0:
        return 0.0
    outside = X.matrix - X.matrix.multiply(mask.matrix)
    return float(sparse_norm(outside)) / total if outside.nnz else 0.0


def band_energy_fraction(X: WaveletCoeffMatrix, mask: BandMask) -> float:
    return 1.0 - mask_error(X, mask) ** 2


def nterm_error(X: WaveletCoeffMatrix, fraction: float) -> Tuple[int, float]:
    """Keep the ⌈fraction·N²⌉ largest entries; return (kept, relative Frobenius error)."""
    kept = int(ceil(fraction * float(X.grid.size) ** 2))
    magnitudes = np.sort(np.abs(X.matrix.data))[::-1]
    total = float(np.sum(magnitudes**2))
    if total == 0:
        return kept, 0.0
    dropped = float(np.sum(magnitudes[kept:] ** 2))
    return kept, sqrt(dropped / total)


def nterm_curve(X: WaveletCoeffMatrix, fractions: Sequence[float]) -> List[NTermPoint]:
    curve: List[NTermPoint] = []
    for fraction in fractions:
        kept, err = nterm_error(X, fraction)
        curve.append({"fraction": float(fraction), "kept": kept, "relative_error": err})
    return curve


def row_argmax(matrix: sp.csr_matrix) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per non-empty row: column of the largest |entry| (smallest column on ties) and |value|."""
    csr = matrix.tocsr(copy=True)
    csr.sort_indices()
    rows, cols, vals = [], [], []
    for r in range(csr.shape[0]):
        lo, hi = csr.indptr[r], csr.indptr[r + 1]
        if lo == hi:
            continue
        mags = np.abs(csr.data[lo:hi])
        if not mags.any():
            continue
        k = int(np.argmax(mags))
        rows.append(r)
        cols.append(int(csr.indices[lo + k]))
        vals.append(float(mags[k]))
    return np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64), np.asarray(vals)


def row_localization(X: WaveletCoeffMatrix, radius: int = 2) -> float:
    """Share of non-empty rows whose maximizing column lies within ``radius`` in lattice ∞-metric."""
    rows, cols, _ = row_argmax(X.matrix)
    if rows.size == 0:
        return 0.0
    r1, r2 = X.grid.unravel(rows)
    c1, c2 = X.grid.unravel(cols)
    close = np.maximum(np.abs(r1 - c1), np.abs(r2 - c2)) <= radius
    return float(np.mean(close))


def spectral_norm(matrix, iterations: int = 100) -> float:
    """‖A‖₂ by power iteration on AᵀA from a fixed start vector."""
    n = matrix.shape[1]
    v = np.ones(n) / sqrt(n)
    sigma = 0.0
    for _ in range(iterations):
        w = matrix.T @ (matrix @ v)
        norm = float(np.linalg.norm(w))
        if norm == 0:
            return 0.0
        v = w / norm
        sigma = sqrt(norm)
    return sigma


def spectral_norm_scaling(matrices: Sequence[WaveletCoeffMatrix]) -> Tuple[float, List[float]]:
    """Least-squares slope of log₂‖X‖₂ against −L, with the per-scale norms."""
    if len(matrices) < 3:
        raise ValueError("spectral norm scaling needs three or more scales")
    norms = [spectral_norm(X.matrix) for X in matrices]
    scales = np.array([-X.scale for X in matrices], dtype=float)
    slope = float(np.polyfit(scales, np.log2(norms), 1)[0])
    logger.info("Spectral norm slope %.3f over scales %s", slope, [X.scale for X in matrices])
    return slope, norms


@dataclass(frozen=True)
class TruncationDecay:
    scales: Tuple[int, ...]
    errors: Tuple[float, ...]

    @property
    def increases(self) -> List[Tuple[int, int]]:
        """Consecutive scale pairs (L, L') where the error did not drop."""
        return [
            (a, b)
            for (a, b), (prev, cur) in zip(zip(self.scales, self.scales[1:]),
                                           zip(self.errors, self.errors[1:]))
            if cur >= prev
        ]

    @property
    def monotone(self) -> bool:
        return not self.increases

    def require_monotone(self) -> "TruncationDecay":
        if not self.monotone:
            raise TruncationDecayError(
                f"truncation error did not decrease between scales {self.increases}: "
                f"{list(self.errors)}"
            )
        return self


def truncation_decay(
    mesh: BoundaryMesh,
    cond: Conductivity,
    f: SmoothFunction,
    g: SmoothFunction,
    scales: Sequence[int],
    box: Box,
    table: ScalingTable,
    np_matrix: Optional[NpMatrix] = None,
) -> TruncationDecay:
    """|T_D(P_L f, P_L g) − T_D(f, g)| for each scale, through coefficient vectors and X.

    A sequence that fails to decrease is logged and flagged on the result;
    ``require_monotone()`` turns the flag into an error.
    """
    filt: ScalingFilter = table.filter
    np_matrix = np_matrix if np_matrix is not None else assemble_np(mesh)
    solver = DensitySolver(np_matrix, cond)
    reference = tau_bilinear(mesh, cond, normal_derivative(f, mesh), trace(g, mesh), np_matrix)
    errors: List[float] = []
    for L in scales:
        grid = WaveletGrid.covering(box, L, filt)
        X = assemble_wavelet_matrix(mesh, cond, grid, table, solver=solver)
        depth = -L + LATTICE_MARGIN
        gf = project(f, grid, depth, filt).approx.ravel()
        gg = project(g, grid, depth, filt).approx.ravel()
        value = float(gf @ (X.matrix @ gg))
        errors.append(abs(value - reference))
        logger.debug("Scale %s: projected %.10g, reference %.10g", L, value, reference)
    result = TruncationDecay(scales=tuple(int(L) for L in scales), errors=tuple(errors))
    if not result.monotone:
        logger.warning("Truncation error did not decrease between scales %s: %s",
                       result.increases, ["%.3g" % e for e in errors])
    return result
