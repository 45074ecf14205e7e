"""Shapes, boundary meshes and curve distances."""

from __future__ import annotations

from math import pi

import numpy as np
import pytest
from scipy.special import ellipe

from electrosense.geometry import (
    InvalidShapeError,
    ParametricShape,
    closest_points,
    dense_polyline,
    distance_to_curve,
    sample_boundary,
    signed_area,
)


def test_disk_mesh_matches_circle_geometry() -> None:
    mesh = sample_boundary(ParametricShape.disk(1.0), 64)
    radii = np.hypot(mesh.points[:, 0], mesh.points[:, 1])
    assert np.allclose(radii, 1.0, atol=1e-14)
    assert np.allclose(mesh.normals, mesh.points, atol=1e-14)
    assert np.allclose(mesh.curvature, 1.0, atol=1e-12)
    assert mesh.perimeter == pytest.approx(2 * pi, abs=1e-12)


def test_ellipse_perimeter_matches_complete_elliptic_integral() -> None:
    a, b = 2.0, 1.0
    mesh = sample_boundary(ParametricShape.ellipse(a, b), 256)
    assert mesh.perimeter == pytest.approx(4 * a * ellipe(1 - b**2 / a**2), abs=1e-10)


def test_flower_area_from_divergence_theorem(flower_mesh) -> None:
    R, amp = 0.6, 0.3
    assert signed_area(flower_mesh) == pytest.approx(pi * R**2 * (1 + amp**2 / 2), rel=1e-10)


@pytest.mark.parametrize(
    "shape",
    [
        ParametricShape.disk(0.5, center=(0.3, -0.2)),
        ParametricShape.ellipse(1.0, 0.4, rotation=0.7),
        ParametricShape.flower(radius=0.5, petals=3, amplitude=0.2, scale=2.0),
        ParametricShape(kind="custom", radius=0.8, harmonics=((2, 0.1, 0.05), (3, 0.0, 0.08))),
    ],
)
def test_normals_point_outward_and_are_unit(shape: ParametricShape) -> None:
    mesh = sample_boundary(shape, 128)
    assert signed_area(mesh) > 0
    assert np.allclose(np.hypot(mesh.normals[:, 0], mesh.normals[:, 1]), 1.0)
    assert np.allclose(np.einsum("ij,ij->i", mesh.normals, mesh.tangents), 0.0, atol=1e-14)


def test_translation_and_scale_apply_to_points() -> None:
    base = sample_boundary(ParametricShape.disk(1.0), 32)
    moved = sample_boundary(ParametricShape.disk(1.0, center=(1.0, 2.0), scale=3.0), 32)
    assert np.allclose(moved.points, 3.0 * base.points + np.array([1.0, 2.0]))
    assert np.allclose(moved.curvature, 1.0 / 3.0)


def test_flower_with_too_large_amplitude_is_rejected() -> None:
    with pytest.raises(InvalidShapeError):
        ParametricShape.flower(radius=1.0, petals=5, amplitude=1.2)


def test_unknown_kind_is_rejected() -> None:
    with pytest.raises(InvalidShapeError):
        ParametricShape(kind="star")


@pytest.mark.parametrize("count", [8, 33])
def test_node_count_must_be_even_and_large_enough(count: int) -> None:
    with pytest.raises(InvalidShapeError):
        sample_boundary(ParametricShape.disk(), count)


def test_distance_to_unit_circle() -> None:
    curve = dense_polyline(ParametricShape.disk(1.0))
    points = np.array([[0.0, 0.0], [2.0, 0.0], [0.3, 0.4], [0.0, -1.0]])
    assert np.allclose(distance_to_curve(points, curve), [1.0, 1.0, 0.5, 0.0], atol=1e-6)


def test_closest_points_returns_feet_on_curve() -> None:
    shape = ParametricShape.disk(1.0)
    curve = dense_polyline(shape)
    points = np.array([[3.0, 4.0], [-0.1, 0.0]])
    dist, feet = closest_points(points, curve, shape)
    assert np.allclose(feet, [[0.6, 0.8], [-1.0, 0.0]], atol=1e-6)
    assert np.allclose(dist, [4.0, 0.9], atol=1e-6)


def test_chord_feet_stay_within_a_segment_of_the_curve() -> None:
    curve = dense_polyline(ParametricShape.disk(1.0))
    dist, feet = closest_points(np.array([[-0.1, 0.0]]), curve)
    segment = np.linalg.norm(curve[1] - curve[0])
    assert np.linalg.norm(feet[0] - [-1.0, 0.0]) <= segment
    assert dist[0] == pytest.approx(0.9, abs=segment**2)


def test_refined_feet_on_flower_are_normal_projections() -> None:
    shape = ParametricShape.flower(radius=0.6, petals=5, amplitude=0.3)
    t = 2.0 * pi * (np.arange(60) + 0.37) / 60
    z, dz, _ = shape.evaluate(t)
    normals = np.stack([dz[:, 1], -dz[:, 0]], axis=-1) / np.hypot(dz[:, 0], dz[:, 1])[:, None]
    offsets = np.where(np.arange(60) % 2, 0.02, -0.02)
    dist, feet = closest_points(z + offsets[:, None] * normals, dense_polyline(shape, 512), shape)
    assert np.allclose(feet, z, atol=1e-8)
    assert np.allclose(dist, 0.02, atol=1e-8)
