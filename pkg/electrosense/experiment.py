"""Pipeline objects built lazily from a configuration module."""

from __future__ import annotations

import logging
import time
from contextlib import contextmanager
from functools import cached_property
from typing import Any, Dict, Iterator, Mapping, Optional

import numpy as np

from electrosense.bem import Conductivity, NpMatrix, assemble_np, simulate_msr
from electrosense.features import (
    BandMask,
    GptMatrix,
    WaveletCoeffMatrix,
    assemble_gpt,
    assemble_wavelet_matrix,
    build_band_mask,
)
from electrosense.geometry import (
    BoundaryMesh,
    InvalidShapeError,
    ParametricShape,
    dense_polyline,
    sample_boundary,
)
from electrosense.sensing import (
    FAR_FIELD,
    NEAR_FIELD,
    ForwardOperator,
    MeasurementSystem,
    MsrMatrix,
    NoiseModel,
    add_noise,
    build_forward_operator,
    far_field_system,
    near_field_system,
)
from electrosense.wavelet import Box, ScalingFilter, ScalingTable, WaveletGrid, cascade

logger = logging.getLogger(__name__)

SHAPE_KEYS = (
    "kind", "radius", "semi_axes", "petals", "amplitude", "harmonics", "center", "rotation", "scale"
)


def shape_from_settings(spec: Mapping[str, Any]) -> ParametricShape:
    """Build a shape from the SHAPE setting; unknown keys are rejected."""
    unknown = sorted(set(spec) - set(SHAPE_KEYS))
    if unknown:
        raise InvalidShapeError(f"Unknown SHAPE key(s): {', '.join(unknown)}")
    kwargs: Dict[str, Any] = dict(spec)
    if "semi_axes" in kwargs:
        kwargs["semi_axes"] = tuple(float(v) for v in kwargs["semi_axes"])
    if "center" in kwargs:
        kwargs["center"] = tuple(float(v) for v in kwargs["center"])
    if "harmonics" in kwargs:
        kwargs["harmonics"] = tuple((int(m), float(a), float(b)) for m, a, b in kwargs["harmonics"])
    return ParametricShape(**kwargs)


class Experiment:
    """One configured run: shape, mesh, systems, lattices and operators, built on first use."""

    def __init__(
        self,
        config: Any,
        *,
        seed: Optional[int] = None,
        mu_scale: Optional[float] = None,
        variant: Optional[str] = None,
    ) -> None:
        self.config = config
        self.seed = int(config.SEED if seed is None else seed)
        self.mu_scale = float(config.MU_SCALE if mu_scale is None else mu_scale)
        self.variant = str(config.IMAGING_VARIANT if variant is None else variant)
        self.timings: Dict[str, float] = {}

    @contextmanager
    def stage(self, name: str) -> Iterator[None]:
        start = time.perf_counter()
        try:
            yield
        finally:
            elapsed = time.perf_counter() - start
            self.timings[name] = self.timings.get(name, 0.0) + elapsed
            logger.info("Stage %s took %.2fs", name, elapsed)

    @cached_property
    def shape(self) -> ParametricShape:
        return shape_from_settings(self.config.SHAPE)

    @cached_property
    def mesh(self) -> BoundaryMesh:
        return sample_boundary(self.shape, int(self.config.MESH_NODES))

    @cached_property
    def cond(self) -> Conductivity:
        return Conductivity(float(self.config.CONDUCTIVITY))

    @cached_property
    def np_matrix(self) -> NpMatrix:
        with self.stage("assemble_np"):
            return assemble_np(self.mesh)

    @cached_property
    def box(self) -> Box:
        xmin, xmax, ymin, ymax = (float(v) for v in self.config.DOMAIN)
        return (xmin, xmax, ymin, ymax)

    @cached_property
    def delta(self) -> float:
        """Target size: largest distance from the shape center to ∂D."""
        center = np.asarray(self.shape.center, dtype=float)
        return float(np.max(np.linalg.norm(self.mesh.points - center, axis=1)))

    @cached_property
    def polyline(self) -> np.ndarray:
        return dense_polyline(self.shape)

    @cached_property
    def filter(self) -> ScalingFilter:
        return ScalingFilter.from_name(self.config.WAVELET)

    @cached_property
    def table(self) -> ScalingTable:
        with self.stage("cascade"):
            return cascade(self.filter, int(self.config.TABLE_DEPTH))

    @cached_property
    def grid(self) -> WaveletGrid:
        return WaveletGrid.covering(self.box, int(self.config.SCALE), self.filter)

    @cached_property
    def far_system(self) -> MeasurementSystem:
        return far_field_system(
            int(self.config.FAR_FIELD_COUNT),
            float(self.config.FAR_FIELD_RADIUS),
            center=self.shape.center,
            delta=self.delta,
        )

    @cached_property
    def near_system(self) -> MeasurementSystem:
        return near_field_system(
            self.box,
            int(self.config.TRANSMITTERS_PER_AXIS),
            self.mesh,
            float(self.config.STANDOFF),
            delta=self.delta,
        )

    @cached_property
    def system(self) -> MeasurementSystem:
        return self.far_system if self.config.LAYOUT == FAR_FIELD else self.near_system

    @cached_property
    def clean_msr(self) -> MsrMatrix:
        with self.stage("simulate"):
            return simulate_msr(self.mesh, self.cond, self.system, self.np_matrix)

    @cached_property
    def noise(self) -> NoiseModel:
        return NoiseModel(level=float(self.config.NOISE_LEVEL), seed=self.seed)

    @cached_property
    def noisy_msr(self) -> MsrMatrix:
        return add_noise(self.clean_msr, self.noise)

    def wavelet_operator(self, system: MeasurementSystem) -> ForwardOperator:
        smoothing = float(self.config.SMOOTHING_SAMPLES) if system.layout == NEAR_FIELD else None
        with self.stage(f"operator_{system.layout}"):
            return build_forward_operator(
                system,
                grid=self.grid,
                depth=int(self.config.LATTICE_DEPTH),
                filt=self.filter,
                smoothing=smoothing,
                workers=int(self.config.WORKERS),
            )

    @cached_property
    def operator(self) -> ForwardOperator:
        return self.wavelet_operator(self.system)

    @cached_property
    def polynomial_operator(self) -> ForwardOperator:
        return build_forward_operator(self.far_system, order=int(self.config.GPT_ORDER))

    @cached_property
    def wavelet_matrix(self) -> WaveletCoeffMatrix:
        with self.stage("assemble_wavelet"):
            return assemble_wavelet_matrix(self.mesh, self.cond, self.grid, self.table, self.np_matrix)

    @cached_property
    def gpt(self) -> GptMatrix:
        with self.stage("assemble_gpt"):
            return assemble_gpt(self.mesh, self.cond, int(self.config.GPT_ORDER), self.np_matrix)

    @cached_property
    def mask(self) -> BandMask:
        return build_band_mask(self.grid, int(self.config.MASK_HALF_WIDTH))
