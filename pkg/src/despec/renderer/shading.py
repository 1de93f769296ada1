"""Reflectance models: Lambertian diffuse and a Beckmann microfacet specular lobe.

All functions broadcast over leading axes; colors live on the last axis.
"""

from __future__ import annotations

import numpy as np

INV_PI = 1.0 / np.pi
F0_DIELECTRIC = 0.04


def shade_lambertian(albedo, cos_theta_i, irradiance):
    """Diffuse radiance ``albedo / pi * cos * irradiance`` per channel."""
    cos = np.clip(np.asarray(cos_theta_i, dtype=np.float64), 0.0, 1.0)
    return np.asarray(albedo) * INV_PI * np.expand_dims(cos, -1) * np.asarray(irradiance)


def beckmann_ndf(cos_theta_h, m):
    """Beckmann normal distribution ``exp(-tan^2/m^2) / (pi m^2 cos^4)``.

    Normalized so that its projection onto the macro-surface integrates to one.
    Back-facing half vectors (``cos <= 0``) get zero density.
    """
    c = np.asarray(cos_theta_h, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    pos = c > 0.0
    cs = np.where(pos, c, 1.0)
    c2 = cs * cs
    tan2 = (1.0 - c2) / c2
    d = np.exp(-tan2 / (m * m)) / (np.pi * m * m * c2 * c2)
    return np.where(pos, d, 0.0)


def fresnel_schlick(cos_theta_d, f0=F0_DIELECTRIC):
    c = np.clip(np.asarray(cos_theta_d, dtype=np.float64), 0.0, 1.0)
    return f0 + (1.0 - f0) * (1.0 - c) ** 5


def smith_g1_beckmann(cos_theta, m):
    """Smith shadowing for one direction (rational fit for the Beckmann case)."""
    c = np.clip(np.asarray(cos_theta, dtype=np.float64), 1e-6, 1.0)
    tan = np.sqrt(np.maximum(1.0 - c * c, 0.0)) / c
    a = 1.0 / (np.asarray(m) * np.maximum(tan, 1e-12))
    g = (3.535 * a + 2.181 * a * a) / (1.0 + 2.276 * a + 2.577 * a * a)
    return np.where(a < 1.6, g, 1.0)


def microfacet_specular(n_dot_l, n_dot_v, n_dot_h, v_dot_h, m, f0=F0_DIELECTRIC):
    """Cook-Torrance style BRDF value ``D F G / (4 cos_i cos_o)`` (scalar per sample)."""
    nl = np.asarray(n_dot_l, dtype=np.float64)
    nv = np.asarray(n_dot_v, dtype=np.float64)
    valid = (nl > 0.0) & (nv > 0.0)
    d = beckmann_ndf(n_dot_h, m)
    f = fresnel_schlick(v_dot_h, f0)
    g = smith_g1_beckmann(nl, m) * smith_g1_beckmann(nv, m)
    denom = 4.0 * np.where(valid, nl * nv, 1.0)
    return np.where(valid, d * f * g / denom, 0.0)


def sample_beckmann_half(normal, u1, u2, m):
    """Map uniform numbers to Beckmann-distributed half vectors around ``normal``.

    Returns ``(h, pdf_h)`` where ``pdf_h = D(h) cos(theta_h)`` is the solid-angle
    density of the half vector.
    """
    tan2 = -(m * m) * np.log1p(-np.clip(u1, 0.0, 1.0 - 1e-12))
    cos_t = 1.0 / np.sqrt(1.0 + tan2)
    sin_t = np.sqrt(np.maximum(1.0 - cos_t * cos_t, 0.0))
    phi = 2.0 * np.pi * u2
    local = np.stack([sin_t * np.cos(phi), sin_t * np.sin(phi), cos_t], axis=-1)
    h = to_world(local, normal)
    return h, beckmann_ndf(cos_t, m) * cos_t


def orthonormal_basis(n):
    """Tangent frame (t, b) for unit normals ``n`` (branchless construction)."""
    sign = np.where(n[..., 2] >= 0.0, 1.0, -1.0)
    a = -1.0 / (sign + n[..., 2])
    b = n[..., 0] * n[..., 1] * a
    t = np.stack([1.0 + sign * n[..., 0] ** 2 * a, sign * b, -sign * n[..., 0]], axis=-1)
    bt = np.stack([b, sign + n[..., 1] ** 2 * a, -n[..., 1]], axis=-1)
    return t, bt


def to_world(local, n):
    t, b = orthonormal_basis(n)
    return local[..., 0:1] * t + local[..., 1:2] * b + local[..., 2:3] * n
