"""Direct-illumination ray caster producing exact diffuse/specular separations.

Primary rays are sphere-traced against the object's distance function; every
light contribution is split at shading time into a Lambertian part (diffuse
image) and a microfacet part (specular image), so ``D`` and ``S`` are exact by
construction and ``I`` is their saturating sum.
"""

from __future__ import annotations

import numpy as np

from despec.core import compose_dichromatic
from despec.renderer.scene import AlbedoMap, EnvironmentMap, SceneDescription, environment_map, quaternion_matrix
from despec.renderer.shading import (
    fresnel_schlick,
    microfacet_specular,
    orthonormal_basis,
    sample_beckmann_half,
    shade_lambertian,
    smith_g1_beckmann,
    to_world,
)
from despec.renderer.shapes import get_shape

CAMERA_DISTANCE = 3.2
TAN_HALF_FOV = 0.32
BOUND_RADIUS = 1.05
EXPOSURE_TARGET = 0.85
EXPOSURE_PERCENTILE = 99.0
LUMA = np.array([0.2126, 0.7152, 0.0722])

MAX_STEPS = 160
HIT_EPS = 2e-4
STEP_SCALE = 0.9
BISECT_STEPS = 24
SHADOW_STEPS = 48


def camera_rays(resolution: int):
    """Pinhole camera on +z looking at the origin, y up, row 0 at the top."""
    s = (np.arange(resolution) + 0.5) / resolution * 2.0 - 1.0
    xs, ys = np.meshgrid(s * TAN_HALF_FOV, -s * TAN_HALF_FOV)
    d = np.stack([xs, ys, -np.ones_like(xs)], axis=-1).reshape(-1, 3)
    d /= np.linalg.norm(d, axis=-1, keepdims=True)
    o = np.broadcast_to(np.array([0.0, 0.0, CAMERA_DISTANCE]), d.shape)
    return np.ascontiguousarray(o), d


def project(points: np.ndarray, resolution: int) -> np.ndarray:
    """World points to continuous ``(row, col)`` pixel coordinates."""
    p = np.atleast_2d(points)
    depth = CAMERA_DISTANCE - p[:, 2]
    x = p[:, 0] / depth / TAN_HALF_FOV
    y = p[:, 1] / depth / TAN_HALF_FOV
    col = (x + 1.0) / 2.0 * resolution - 0.5
    row = (1.0 - y) / 2.0 * resolution - 0.5
    return np.stack([row, col], axis=-1)


def _bound_interval(o, d):
    b = np.sum(o * d, axis=-1)
    c = np.sum(o * o, axis=-1) - BOUND_RADIUS**2
    disc = b * b - c
    hit = disc > 0
    sq = np.sqrt(np.where(hit, disc, 0.0))
    return hit, np.maximum(-b - sq, 0.0), -b + sq


def sphere_trace(sdf, o, d):
    """First intersection of rays (object space) with ``sdf < 0``.

    Returns ``(hit_mask, t)``. Overshoots into the interior are refined by
    bisection against the last outside sample.
    """
    n = o.shape[0]
    hit_bound, t0, t1 = _bound_interval(o, d)
    t = t0.copy()
    t_prev = t0.copy()
    active = np.flatnonzero(hit_bound)
    hit = np.zeros(n, dtype=bool)
    inside = np.zeros(n, dtype=bool)
    for _ in range(MAX_STEPS):
        if active.size == 0:
            break
        dist = sdf(o[active] + t[active, None] * d[active])
        done = dist < HIT_EPS
        hit[active[done]] = True
        inside[active[done & (dist < -HIT_EPS)]] = True
        keep = active[~done]
        step = np.maximum(dist[~done] * STEP_SCALE, 1e-3)
        t_prev[keep] = t[keep]
        t[keep] += step
        active = keep[t[keep] <= t1[keep]]
    idx = np.flatnonzero(inside)
    if idx.size:
        lo, hi = t_prev[idx], t[idx]
        for _ in range(BISECT_STEPS):
            mid = 0.5 * (lo + hi)
            neg = sdf(o[idx] + mid[:, None] * d[idx]) < 0
            hi = np.where(neg, mid, hi)
            lo = np.where(neg, lo, mid)
        t[idx] = hi
    return hit, t


def sdf_normal(sdf, p, h=1e-4):
    offsets = np.eye(3) * h
    g = np.stack([sdf(p + offsets[i]) - sdf(p - offsets[i]) for i in range(3)], axis=-1)
    return g / np.maximum(np.linalg.norm(g, axis=-1, keepdims=True), 1e-12)


def soft_shadow(sdf, o, d, t_max, k):
    """Penumbra-aware visibility in ``[0, 1]`` along object-space rays."""
    res = np.ones(o.shape[0])
    t = np.full(o.shape[0], 0.02)
    active = np.arange(o.shape[0])
    k = np.broadcast_to(np.asarray(k, dtype=np.float64), res.shape)
    for _ in range(SHADOW_STEPS):
        if active.size == 0:
            break
        h = sdf(o[active] + t[active, None] * d[active])
        res[active] = np.minimum(res[active], k[active] * h / t[active])
        t[active] += np.clip(h, 0.01, 0.25)
        alive = (h > 1e-4) & (t[active] < t_max[active])
        active = active[alive]
    res = np.clip(res, 0.0, 1.0)
    return res * res * (3.0 - 2.0 * res)


def _value_noise(p, seed):
    rng = np.random.default_rng(seed)
    perm = rng.permutation(256)
    vals = rng.random(256)
    i = np.floor(p).astype(np.int64)
    f = p - i
    u = f * f * (3.0 - 2.0 * f)

    def lattice(dx, dy, dz):
        return vals[perm[(perm[(perm[(i[:, 0] + dx) & 255] + i[:, 1] + dy) & 255] + i[:, 2] + dz) & 255]]

    x00 = lattice(0, 0, 0) * (1 - u[:, 0]) + lattice(1, 0, 0) * u[:, 0]
    x10 = lattice(0, 1, 0) * (1 - u[:, 0]) + lattice(1, 1, 0) * u[:, 0]
    x01 = lattice(0, 0, 1) * (1 - u[:, 0]) + lattice(1, 0, 1) * u[:, 0]
    x11 = lattice(0, 1, 1) * (1 - u[:, 0]) + lattice(1, 1, 1) * u[:, 0]
    y0 = x00 * (1 - u[:, 1]) + x10 * u[:, 1]
    y1 = x01 * (1 - u[:, 1]) + x11 * u[:, 1]
    return y0 * (1 - u[:, 2]) + y1 * u[:, 2]


def eval_albedo(albedo: AlbedoMap, p_obj: np.ndarray) -> np.ndarray:
    colors = np.asarray(albedo.colors, dtype=np.float64)
    if albedo.kind in ("white", "solid"):
        return np.broadcast_to(colors[0], p_obj.shape).copy()
    q = p_obj * albedo.frequency
    if albedo.kind == "checker":
        t = (np.floor(q).astype(np.int64).sum(axis=-1) & 1).astype(np.float64)
    elif albedo.kind == "noise":
        t = 0.65 * _value_noise(q, albedo.noise_seed) + 0.35 * _value_noise(2.0 * q + 17.0, albedo.noise_seed)
        t = np.clip((t - 0.25) / 0.5, 0.0, 1.0)
    else:
        raise ValueError(f"unknown albedo kind {albedo.kind!r}")
    return colors[0] * (1.0 - t[:, None]) + colors[1] * t[:, None]


def _rotate_y(v, angle):
    c, s = np.cos(angle), np.sin(angle)
    out = v.copy()
    out[..., 0] = c * v[..., 0] + s * v[..., 2]
    out[..., 2] = -s * v[..., 0] + c * v[..., 2]
    return out


def sky_radiance(env: EnvironmentMap, dirs: np.ndarray) -> np.ndarray:
    """Gradient part of the environment (blobs are integrated separately)."""
    y = dirs[..., 1:2]
    up = np.clip(y, 0.0, 1.0)
    sky = np.asarray(env.horizon) * (1.0 - up) + np.asarray(env.zenith) * up
    blend = np.clip((y + 0.05) / 0.1, 0.0, 1.0)
    blend = blend * blend * (3.0 - 2.0 * blend)
    return sky * blend + np.asarray(env.ground) * (1.0 - blend)


def _sample_vmf(mu, kappa, n, rng):
    u = rng.random(n)
    w = 1.0 + np.log(u + (1.0 - u) * np.exp(-2.0 * kappa)) / kappa
    phi = 2.0 * np.pi * rng.random(n)
    r = np.sqrt(np.maximum(1.0 - w * w, 0.0))
    local = np.stack([r * np.cos(phi), r * np.sin(phi), w], axis=-1)
    return to_world(local, np.broadcast_to(mu, local.shape))


def _light_points(light, n, rng):
    pos = np.asarray(light.position, dtype=np.float64)
    normal = -pos / np.linalg.norm(pos)
    t, b = orthonormal_basis(normal)
    k = int(round(np.sqrt(n)))
    if k * k == n:
        gy, gx = np.meshgrid(np.arange(k), np.arange(k), indexing="ij")
        uv = (np.stack([gx.ravel(), gy.ravel()], axis=-1) + rng.random((n, 2))) / k
    else:
        uv = rng.random((n, 2))
    uv = (uv - 0.5) * light.size
    return pos + uv[:, :1] * t + uv[:, 1:] * b, normal


class _Surface:
    def __init__(self, sdf, rot, x, n, v, albedo, m, f0):
        self.sdf, self.rot = sdf, rot
        self.x, self.n, self.v = x, n, v
        self.albedo, self.m, self.f0 = albedo, m, f0
        self.nv = np.clip(np.sum(n * v, axis=-1), 1e-4, 1.0)

    def to_object(self, p):
        return p @ self.rot

    def shade_directions(self, wi, radiance):
        """Diffuse and specular radiance for incident directions ``wi``.

        ``wi`` is ``(P, K, 3)``; ``radiance`` ``(P, K, 3)`` is incident radiance
        already multiplied by its quadrature weight and visibility.
        """
        n = self.n[:, None, :]
        v = self.v[:, None, :]
        nl = np.sum(n * wi, axis=-1)
        h = wi + v
        h /= np.maximum(np.linalg.norm(h, axis=-1, keepdims=True), 1e-12)
        nh = np.sum(n * h, axis=-1)
        vh = np.sum(v * h, axis=-1)
        cos_i = np.clip(nl, 0.0, 1.0)
        diffuse = shade_lambertian(self.albedo[:, None, :], cos_i, radiance).sum(axis=1)
        brdf = microfacet_specular(nl, self.nv[:, None], nh, vh, self.m, self.f0)
        specular = ((brdf * cos_i)[..., None] * radiance).sum(axis=1)
        return diffuse, specular


def _area_lights(surf: _Surface, scene: SceneDescription, samples: int, rng):
    diffuse = np.zeros_like(surf.x)
    specular = np.zeros_like(surf.x)
    origin_obj = surf.to_object(surf.x + surf.n * 2e-3)
    for light in scene.lights:
        pts, ln = _light_points(light, samples, rng)
        area = light.size**2
        to_l = pts[None, :, :] - surf.x[:, None, :]
        dist2 = np.sum(to_l * to_l, axis=-1)
        wi = to_l / np.sqrt(dist2)[..., None]
        cos_l = np.clip(-np.sum(wi * ln, axis=-1), 0.0, 1.0)
        weight = light.intensity * cos_l * area / (samples * dist2)

        center = np.asarray(light.position) - surf.x
        center_dist = np.linalg.norm(center, axis=-1)
        d_obj = surf.to_object(center / center_dist[:, None])
        vis = soft_shadow(surf.sdf, origin_obj, d_obj, center_dist, k=2.0 * center_dist / light.size)

        radiance = (weight * vis[:, None])[..., None] * np.asarray(light.color)
        d, s = surf.shade_directions(wi, radiance)
        diffuse += d
        specular += s
    return diffuse, specular


def _environment(surf: _Surface, scene: SceneDescription, samples: int, rng):
    env = environment_map(scene.env_map_id)
    yaw = scene.env_yaw
    p = surf.x.shape[0]
    diffuse = np.zeros_like(surf.x)
    specular = np.zeros_like(surf.x)
    origin_obj = surf.to_object(surf.x + surf.n * 2e-3)
    far = np.full(p, 3.0)

    # bright blobs: sampled from their own spherical-Gaussian densities
    for blob in env.blobs:
        mu = _rotate_y(np.asarray(blob.direction, dtype=np.float64), yaw)
        kappa = blob.sharpness
        dirs = _sample_vmf(mu, kappa, samples, rng)
        w = blob.intensity * 2.0 * np.pi * (1.0 - np.exp(-2.0 * kappa)) / kappa / samples
        vis = soft_shadow(surf.sdf, origin_obj, np.broadcast_to(surf.to_object(mu[None]), origin_obj.shape), far, k=2.0 * np.sqrt(kappa))
        wi = np.broadcast_to(dirs, (p, samples, 3))
        radiance = np.broadcast_to((w * vis)[:, None, None] * np.asarray(blob.color), (p, samples, 3))
        d, s = surf.shade_directions(wi, radiance)
        diffuse += d
        specular += s

    # smooth sky: BRDF-sampled per pixel with rotated stratified patterns
    k = samples
    i = np.arange(k)
    base = np.stack([(i + 0.5) / k, (i * 0.6180339887498949) % 1.0], axis=-1)  # Fibonacci lattice
    offs = rng.random((p, 1, 2))
    u = (base[None, :, :] + offs) % 1.0
    n = np.broadcast_to(surf.n[:, None, :], (p, k, 3))

    r = np.sqrt(u[..., 0])
    phi = 2.0 * np.pi * u[..., 1]
    local = np.stack([r * np.cos(phi), r * np.sin(phi), np.sqrt(np.maximum(1.0 - u[..., 0], 0.0))], axis=-1)
    wi = to_world(local, n)
    sky = sky_radiance(env, _rotate_y(wi, -yaw))
    diffuse += surf.albedo * sky.mean(axis=1)

    h, _ = sample_beckmann_half(n, u[..., 0], (u[..., 1] + 0.5) % 1.0, surf.m)
    v = np.broadcast_to(surf.v[:, None, :], (p, k, 3))
    vh = np.sum(v * h, axis=-1)
    wi = 2.0 * vh[..., None] * h - v
    nl = np.sum(n * wi, axis=-1)
    nh = np.sum(n * h, axis=-1)
    ok = (nl > 0) & (vh > 0)
    # f * cos / pdf collapses to F G (v.h) / ((n.v)(n.h)) for half-vector sampling
    g = smith_g1_beckmann(nl, surf.m) * smith_g1_beckmann(surf.nv[:, None], surf.m)
    est = np.where(ok, fresnel_schlick(vh, surf.f0) * g * vh / (surf.nv[:, None] * np.maximum(nh, 1e-6)), 0.0)
    specular += (est[..., None] * sky_radiance(env, _rotate_y(wi, -yaw))).mean(axis=1)
    return diffuse, specular


def hit_mask(scene: SceneDescription, resolution: int) -> np.ndarray:
    """Object silhouette as an ``(H, W)`` boolean mask."""
    sdf = get_shape(scene.shape_id)
    rot = quaternion_matrix(scene.rotation)
    o, d = camera_rays(resolution)
    hit, _ = sphere_trace(sdf, o @ rot, d @ rot)
    return hit.reshape(resolution, resolution)


def render_pair(scene: SceneDescription, resolution: int, samples_per_light: int = 16):
    """Render ``(diffuse, specular, input)`` images for ``scene``.

    Exposure is scaled per scene so the 99th-percentile diffuse luminance over
    the object lands at 0.85; both components share the same scale.
    """
    if resolution < 16 or resolution % 16:
        raise ValueError(f"resolution must be a positive multiple of 16, got {resolution}")
    sdf = get_shape(scene.shape_id)
    rot = quaternion_matrix(scene.rotation)
    rng = np.random.default_rng(np.random.SeedSequence([int(scene.seed) & (2**63 - 1), 0x5A]))

    o, d = camera_rays(resolution)
    o_obj, d_obj = o @ rot, d @ rot
    hit, t = sphere_trace(sdf, o_obj, d_obj)
    idx = np.flatnonzero(hit)
    npix = resolution * resolution
    diffuse = np.zeros((npix, 3))
    specular = np.zeros((npix, 3))

    if idx.size:
        p_obj = o_obj[idx] + t[idx, None] * d_obj[idx]
        n_obj = sdf_normal(sdf, p_obj)
        x = p_obj @ rot.T
        n = n_obj @ rot.T
        v = -d[idx]
        albedo = eval_albedo(scene.albedo, p_obj)
        surf = _Surface(sdf, rot, x, n, v, albedo, scene.roughness, scene.specular_f0)
        if scene.env_map_id is not None:
            dd, ss = _environment(surf, scene, samples_per_light, rng)
        else:
            dd, ss = _area_lights(surf, scene, samples_per_light, rng)
        lum = dd @ LUMA
        ref = np.percentile(lum, EXPOSURE_PERCENTILE)
        scale = EXPOSURE_TARGET / ref if ref > 1e-12 else 1.0
        diffuse[idx] = dd * scale
        specular[idx] = ss * scale

    shape = (resolution, resolution, 3)
    diffuse = np.clip(diffuse, 0.0, 1.0).reshape(shape).astype(np.float32)
    specular = np.clip(specular, 0.0, 1.0).reshape(shape).astype(np.float32)
    return diffuse, specular, compose_dichromatic(diffuse, specular)
