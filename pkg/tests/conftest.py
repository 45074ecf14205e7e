"""Shared pytest fixtures."""

from __future__ import annotations

from types import SimpleNamespace

import pytest

from electrosense.bem import Conductivity, NpMatrix, assemble_np
from electrosense.geometry import BoundaryMesh, ParametricShape, sample_boundary
from electrosense.wavelet import ScalingFilter, ScalingTable, cascade


@pytest.fixture
def minimal_config_ns() -> SimpleNamespace:
    """Small valid config: a flower in a unit box at a coarse scale, fast enough for CLI runs."""
    return SimpleNamespace(
        SHAPE={"kind": "flower", "radius": 0.3, "petals": 5, "amplitude": 0.3},
        CONDUCTIVITY=4.0 / 3.0,
        MESH_NODES=128,
        DOMAIN=[-0.5, 0.5, -0.5, 0.5],
        LAYOUT="near-field",
        TRANSMITTERS_PER_AXIS=4,
        STANDOFF=1e-3,
        FAR_FIELD_COUNT=16,
        FAR_FIELD_RADIUS=2.0,
        WAVELET="db2",
        SCALE=-2,
        LATTICE_DEPTH=8,
        TABLE_DEPTH=10,
        SMOOTHING_SAMPLES=3,
        MASK_HALF_WIDTH=2,
        GPT_ORDER=2,
        NTERM_FRACTIONS=[0.01, 0.1],
        NOISE_LEVEL=0.1,
        SEED=7,
        MU_SCALE=1.0,
        MAX_ITERATIONS=200,
        TOLERANCE=1e-6,
        IMAGING_VARIANT="prose",
        SCORE_QUANTILE=0.2,
        SCORE_DISTANCE=2.0,
        OUTPUT_DIR="runs/test",
        WORKERS=1,
        APPRISE_URLS=[],
        VERBOSE=False,
        SHOW_FULL_ERRORS=False,
        LOG_FILE="",
        LOG_MAX_BYTES=10 * 1024 * 1024,
        LOG_BACKUP_COUNT=5,
    )


@pytest.fixture(scope="session")
def cond() -> Conductivity:
    return Conductivity(4.0 / 3.0)


@pytest.fixture(scope="session")
def disk_mesh() -> BoundaryMesh:
    return sample_boundary(ParametricShape.disk(1.0), 256)


@pytest.fixture(scope="session")
def disk_np(disk_mesh: BoundaryMesh) -> NpMatrix:
    return assemble_np(disk_mesh)


@pytest.fixture(scope="session")
def flower_shape() -> ParametricShape:
    return ParametricShape.flower(radius=0.6, petals=5, amplitude=0.3)


@pytest.fixture(scope="session")
def flower_mesh(flower_shape: ParametricShape) -> BoundaryMesh:
    return sample_boundary(flower_shape, 512)


@pytest.fixture(scope="session")
def flower_np(flower_mesh: BoundaryMesh) -> NpMatrix:
    return assemble_np(flower_mesh)


@pytest.fixture(scope="session")
def db6() -> ScalingFilter:
    return ScalingFilter.from_name("db6")


@pytest.fixture(scope="session")
def db6_table(db6: ScalingFilter) -> ScalingTable:
    return cascade(db6, 12)


@pytest.fixture(scope="session")
def db2() -> ScalingFilter:
    return ScalingFilter.from_name("db2")


@pytest.fixture(scope="session")
def db2_table(db2: ScalingFilter) -> ScalingTable:
    return cascade(db2, 10)
