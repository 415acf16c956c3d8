"""
Unit-sphere helpers shared by the anisotropy and geometry code
"""
import numpy as np

from .errors import NonUnitVectorError

E1 = np.array([1.0, 0.0, 0.0])
E2 = np.array([0.0, 1.0, 0.0])
E3 = np.array([0.0, 0.0, 1.0])

UNIT_TOL = 1e-10


def unit(v, axis=-1):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v, axis=axis, keepdims=True)


def check_unit(z, tol=UNIT_TOL):
    z = np.asarray(z, dtype=float)
    norms = np.linalg.norm(z, axis=-1)
    if z.shape[-1] != 3 or np.any(np.abs(norms - 1.0) > tol):
        raise NonUnitVectorError(
            f"expected unit 3-vectors, got norms in [{np.min(norms)}, {np.max(norms)}]"
        )
    return z


def fibonacci_sphere(n):
    """
    Deterministic Fibonacci lattice of `n` points on the unit sphere, with the
    six axis directions appended so that extremes attained at the poles and
    equatorial axis points are sampled exactly
    """
    i = np.arange(n, dtype=float) + 0.5
    z = 1.0 - 2.0 * i / n
    r = np.sqrt(np.clip(1.0 - z**2, 0.0, None))
    phi = np.pi * (1.0 + np.sqrt(5.0)) * i
    pts = np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=-1)
    axes = np.concatenate([np.eye(3), -np.eye(3)])
    return np.concatenate([pts, axes])


def tangent_frame(z):
    """
    Orthonormal tangent vectors (t1, t2) at unit vectors `z` (shape (..., 3))
    with t1 x t2 = z
    """
    z = np.asarray(z, dtype=float)
    helper = np.where(
        (np.abs(z[..., 0]) < 0.9)[..., None], E1, E2
    ) * np.ones_like(z)
    t1 = unit(np.cross(helper, z))
    t2 = np.cross(z, t1)
    return t1, t2


def tangent_projector(z):
    z = np.asarray(z, dtype=float)
    return np.eye(3) - z[..., :, None] * z[..., None, :]
