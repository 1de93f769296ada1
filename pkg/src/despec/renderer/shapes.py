"""Analytic shape catalog as signed-distance (or distance-like) functions.

Every shape is centered at the origin and fits inside the unit ball. Functions
take points of shape ``(..., 3)`` and return distances of shape ``(...,)``.
Superellipsoids are only distance-like; the ray marcher refines sign changes
by bisection so mild overestimates are harmless.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

SDF = Callable[[np.ndarray], np.ndarray]


def _length(p):
    return np.sqrt(np.sum(p * p, axis=-1))


def sphere(r: float) -> SDF:
    return lambda p: _length(p) - r


def ellipsoid(radii) -> SDF:
    r = np.asarray(radii, dtype=np.float64)

    def f(p):
        k0 = _length(p / r)
        k1 = _length(p / (r * r))
        return k0 * (k0 - 1.0) / np.maximum(k1, 1e-12)

    return f


def torus(major: float, minor: float) -> SDF:
    def f(p):
        q = np.sqrt(p[..., 0] ** 2 + p[..., 2] ** 2) - major
        return np.sqrt(q * q + p[..., 1] ** 2) - minor

    return f


def rounded_box(half, radius: float) -> SDF:
    b = np.asarray(half, dtype=np.float64)

    def f(p):
        q = np.abs(p) - b + radius
        outside = _length(np.maximum(q, 0.0))
        inside = np.minimum(np.max(q, axis=-1), 0.0)
        return outside + inside - radius

    return f


def capsule(half_height: float, radius: float) -> SDF:
    def f(p):
        y = np.clip(p[..., 1], -half_height, half_height)
        d = p.copy()
        d[..., 1] = p[..., 1] - y
        return _length(d) - radius

    return f


def rounded_cylinder(radius: float, half_height: float, rounding: float) -> SDF:
    def f(p):
        dx = np.sqrt(p[..., 0] ** 2 + p[..., 2] ** 2) - radius + rounding
        dy = np.abs(p[..., 1]) - half_height + rounding
        outside = np.sqrt(np.maximum(dx, 0.0) ** 2 + np.maximum(dy, 0.0) ** 2)
        return np.minimum(np.maximum(dx, dy), 0.0) + outside - rounding

    return f


def rounded_octahedron(s: float, rounding: float) -> SDF:
    # bound form of the octahedron distance, scaled to stay conservative
    def f(p):
        return (np.sum(np.abs(p), axis=-1) - (s - rounding)) * 0.57735027 - rounding

    return f


def hex_prism(radius: float, half_height: float, rounding: float) -> SDF:
    k = np.array([-0.8660254, 0.5, 0.57735])

    def f(p):
        a = np.abs(p)
        x, y, z = a[..., 0], a[..., 2], a[..., 1]
        dot = np.minimum(k[0] * x + k[1] * y, 0.0)
        x = x - 2.0 * dot * k[0]
        y = y - 2.0 * dot * k[1]
        r = radius - rounding
        cx = np.clip(x, -k[2] * r, k[2] * r)
        d0 = np.sqrt((x - cx) ** 2 + (y - r) ** 2) * np.sign(y - r)
        d1 = z - half_height + rounding
        outside = np.sqrt(np.maximum(d0, 0.0) ** 2 + np.maximum(d1, 0.0) ** 2)
        return np.minimum(np.maximum(d0, d1), 0.0) + outside - rounding

    return f


def superellipsoid(radii, e1: float, e2: float) -> SDF:
    """Radial distance to a superquadric surface ``G(p) = 1``.

    ``G`` is homogeneous of degree one, so ``|p| (1 - 1/G(p))`` is the
    distance to the surface along the ray through the origin.
    """
    r = np.asarray(radii, dtype=np.float64)

    def f(p):
        q = np.abs(p / r) + 1e-12
        xy = (q[..., 0] ** (2.0 / e2) + q[..., 2] ** (2.0 / e2)) ** (e2 / e1)
        g = (xy + q[..., 1] ** (2.0 / e1)) ** (e1 / 2.0)
        return _length(p) * (1.0 - 1.0 / np.maximum(g, 1e-12))

    return f


def smooth_union(sdfs, centers, k: float) -> SDF:
    """Polynomial smooth minimum of translated component distances."""
    centers = [np.asarray(c, dtype=np.float64) for c in centers]

    def f(p):
        d = sdfs[0](p - centers[0])
        for s, c in zip(sdfs[1:], centers[1:]):
            d2 = s(p - c)
            h = np.clip(0.5 + 0.5 * (d2 - d) / k, 0.0, 1.0)
            d = d2 * (1.0 - h) + d * h - k * h * (1.0 - h)
        return d

    return f


def _blob_a():
    return smooth_union(
        [sphere(0.5), sphere(0.42), sphere(0.38)],
        [(0.0, 0.25, 0.0), (-0.4, -0.25, 0.1), (0.4, -0.2, -0.15)],
        k=0.25,
    )


def _blob_b():
    return smooth_union(
        [sphere(0.35), sphere(0.35), sphere(0.35), sphere(0.45)],
        [(0.5, 0.0, 0.0), (-0.25, 0.0, 0.43), (-0.25, 0.0, -0.43), (0.0, 0.35, 0.0)],
        k=0.3,
    )


def _blob_c():
    return smooth_union(
        [torus(0.55, 0.16), sphere(0.42)],
        [(0.0, -0.1, 0.0), (0.0, 0.25, 0.0)],
        k=0.2,
    )


TRAIN_SHAPES: dict[str, Callable[[], SDF]] = {
    "sphere": lambda: sphere(0.85),
    "torus": lambda: torus(0.6, 0.28),
    "rounded_box": lambda: rounded_box((0.55, 0.45, 0.5), 0.12),
    "capsule": lambda: capsule(0.45, 0.4),
    "superellipsoid_box": lambda: superellipsoid((0.6, 0.55, 0.6), 0.4, 0.4),
    "superellipsoid_star": lambda: superellipsoid((0.85, 0.85, 0.85), 1.6, 1.6),
    "blob_triple": _blob_a,
    "blob_quad": _blob_b,
}

TEST_SHAPES: dict[str, Callable[[], SDF]] = {
    "ellipsoid": lambda: ellipsoid((0.85, 0.5, 0.6)),
    "rounded_cylinder": lambda: rounded_cylinder(0.5, 0.55, 0.1),
    "rounded_octahedron": lambda: rounded_octahedron(1.0, 0.1),
    "hex_prism": lambda: hex_prism(0.6, 0.45, 0.08),
    "blob_ring": _blob_c,
}

CATALOGS = {"train": TRAIN_SHAPES, "test": TEST_SHAPES}


def get_shape(shape_id: str) -> SDF:
    for catalog in CATALOGS.values():
        if shape_id in catalog:
            return catalog[shape_id]()
    raise KeyError(f"unknown shape {shape_id!r}")
