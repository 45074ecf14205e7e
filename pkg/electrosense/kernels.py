"""Laplace Green function Γ(x) = (1/2π) log|x| and its derivatives in the plane."""

from __future__ import annotations

from math import factorial, pi

import numpy as np

TWO_PI = 2.0 * pi


def _offsets(points: np.ndarray, source: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d = np.asarray(points, dtype=float) - np.asarray(source, dtype=float)
    r2 = d[..., 0] ** 2 + d[..., 1] ** 2
    return d, r2


def green(points: np.ndarray, source: np.ndarray) -> np.ndarray:
    """Γ(x − source) for every row of ``points`` (shape ``(..., 2)``)."""
    _, r2 = _offsets(points, source)
    return np.log(r2) / (2.0 * TWO_PI)


def green_gradient(points: np.ndarray, source: np.ndarray) -> np.ndarray:
    d, r2 = _offsets(points, source)
    return d / (TWO_PI * r2)[..., None]


def green_normal_derivative(
    points: np.ndarray, normals: np.ndarray, source: np.ndarray
) -> np.ndarray:
    """∂Γ(x − source)/∂ν_x = ⟨x − source, ν_x⟩ / (2π|x − source|²)."""
    d, r2 = _offsets(points, source)
    return np.sum(d * np.asarray(normals, dtype=float), axis=-1) / (TWO_PI * r2)


def green_derivative(points: np.ndarray, a: int, b: int) -> np.ndarray:
    """∂₁^a ∂₂^b Γ evaluated at ``points``.

    Γ = Re F with F(z) = (1/2π) log z, so for a holomorphic F the mixed partial is
    Re(i^b F^{(a+b)}(z)) and F^{(m)}(z) = (1/2π)(−1)^{m−1}(m−1)! z^{−m}.
    """
    pts = np.asarray(points, dtype=float)
    z = pts[..., 0] + 1j * pts[..., 1]
    m = a + b
    if m == 0:
        return np.log(np.abs(z)) / TWO_PI
    deriv = (-1.0) ** (m - 1) * factorial(m - 1) * z ** (-m) / TWO_PI
    return np.real((1j**b) * deriv)
