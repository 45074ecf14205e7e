"""Typed report records written into manifests and sparsity reports."""

from __future__ import annotations

from typing import List, TypedDict


class NTermPoint(TypedDict):
    """One point of the N-term approximation curve."""

    fraction: float
    kept: int
    relative_error: float


class SparsityReport(TypedDict):
    scale: int
    size: int
    nonzeros: int
    nonzero_fraction: float
    nterm: List[NTermPoint]
    mask_half_width: int
    mask_fraction: float
    mask_bands: int
    mask_error: float
    band_energy: float
    row_localization: float


class StabilityReport(TypedDict):
    """Singular-value comparison between far-field and near-field layouts."""

    index: int
    far_relative: float
    near_relative: float
    ratio: float
    far_condition: float
    near_condition: float
    near_more_stable: bool


class ScoreRecord(TypedDict):
    method: str
    quantile: float
    distance: float
    unit: float
    hit_fraction: float
    pixels: int


class TraceRow(TypedDict):
    """Solver progress after one iteration."""

    iteration: int
    objective: float
    residual: float
    nnz: int
