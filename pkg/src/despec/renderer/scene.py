"""Scene parametrization and the per-regime random scene sampler."""

from __future__ import annotations

import colorsys
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from despec.core import REGIMES
from despec.renderer.shapes import CATALOGS

ROUGHNESS_RANGE = (0.2, 0.5)
SPECULAR_F0_RANGE = (0.1, 0.3)
N_AREA_LIGHTS = 4
N_ENV_MAPS = 6

# near-white light tints: two slightly blue, two slightly yellow
COOL_WHITE = (0.90, 0.95, 1.00)
WARM_WHITE = (1.00, 0.95, 0.84)
TINT_JITTER = 0.02


@dataclass
class AreaLight:
    """Square emitter facing the origin."""

    position: tuple[float, float, float]
    size: float
    intensity: float
    color: tuple[float, float, float]


@dataclass
class AlbedoMap:
    """Solid (object-space) procedural texture."""

    kind: str  # white | solid | checker | noise
    colors: list[tuple[float, float, float]]
    frequency: float = 1.0
    noise_seed: int = 0


@dataclass
class SceneDescription:
    shape_id: str
    rotation: tuple[float, float, float, float]  # unit quaternion (w, x, y, z)
    albedo: AlbedoMap
    roughness: float
    lights: list[AreaLight]
    regime: str
    seed: int
    env_map_id: Optional[int] = None
    env_yaw: float = 0.0
    specular_f0: float = 0.04

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class EnvBlob:
    direction: tuple[float, float, float]
    sharpness: float
    intensity: float
    color: tuple[float, float, float]


@dataclass
class EnvironmentMap:
    """Sky gradient plus bright spherical-Gaussian blobs, y up."""

    zenith: tuple[float, float, float]
    horizon: tuple[float, float, float]
    ground: tuple[float, float, float]
    blobs: list[EnvBlob] = field(default_factory=list)


def _unit(v):
    v = np.asarray(v, dtype=np.float64)
    return v / np.linalg.norm(v)


def environment_map(env_id: int) -> EnvironmentMap:
    """One of the fixed procedural environments, a pure function of ``env_id``."""
    if not 0 <= env_id < N_ENV_MAPS:
        raise ValueError(f"env_map_id must be in [0, {N_ENV_MAPS}), got {env_id}")
    rng = np.random.default_rng(np.random.SeedSequence([0xE4F, env_id]))
    sky = rng.uniform(0.15, 0.5)
    zenith = tuple(sky * np.array([0.55, 0.7, 1.0]) * rng.uniform(0.8, 1.2, 3))
    horizon = tuple(sky * np.array([1.0, 0.95, 0.9]) * rng.uniform(0.9, 1.1, 3))
    ground = tuple(0.3 * np.array(horizon) * rng.uniform(0.6, 1.0, 3))
    blobs = []
    for _ in range(int(rng.integers(2, 7))):
        phi = rng.uniform(0, 2 * np.pi)
        y = rng.uniform(-0.1, 0.95)
        r = np.sqrt(1 - y * y)
        tint = WARM_WHITE if rng.random() < 0.5 else COOL_WHITE
        blobs.append(
            EnvBlob(
                direction=(float(r * np.cos(phi)), float(y), float(r * np.sin(phi))),
                sharpness=float(rng.uniform(6.0, 60.0)),
                intensity=float(rng.uniform(4.0, 20.0)),
                color=tuple(float(c) for c in np.clip(np.array(tint) + rng.uniform(-0.03, 0.03, 3), 0, 1)),
            )
        )
    return EnvironmentMap(zenith=zenith, horizon=horizon, ground=ground, blobs=blobs)


def random_rotation(rng: np.random.Generator) -> tuple[float, float, float, float]:
    """Uniformly distributed unit quaternion (Shoemake's subgroup method)."""
    u1, u2, u3 = rng.random(3)
    a, b = np.sqrt(1 - u1), np.sqrt(u1)
    q = (b * np.cos(2 * np.pi * u3), a * np.sin(2 * np.pi * u2), a * np.cos(2 * np.pi * u2), b * np.sin(2 * np.pi * u3))
    return tuple(float(x) for x in q)


def quaternion_matrix(q) -> np.ndarray:
    w, x, y, z = _unit(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def _texture_color(rng) -> tuple[float, float, float]:
    h = rng.random()
    s = rng.uniform(0.2, 0.9)
    v = rng.uniform(0.3, 1.0)
    return tuple(float(c) for c in colorsys.hsv_to_rgb(h, s, v))


def _sample_albedo(rng, regime: str) -> AlbedoMap:
    if regime == "white":
        return AlbedoMap(kind="white", colors=[(1.0, 1.0, 1.0)])
    kind = ("solid", "checker", "noise")[int(rng.integers(3))]
    if kind == "solid":
        return AlbedoMap(kind=kind, colors=[_texture_color(rng)])
    return AlbedoMap(
        kind=kind,
        colors=[_texture_color(rng), _texture_color(rng)],
        frequency=float(rng.uniform(2.0, 6.0)),
        noise_seed=int(rng.integers(2**31)),
    )


def _light_color(rng, regime: str, index: int) -> tuple[float, float, float]:
    if regime == "colored_lights":
        rgb = colorsys.hsv_to_rgb(rng.random(), rng.uniform(0.4, 1.0), 1.0)
    else:
        base = COOL_WHITE if index < 2 else WARM_WHITE
        rgb = np.clip(np.array(base) + rng.uniform(-TINT_JITTER, TINT_JITTER, 3), 0.0, 1.0)
    return tuple(float(c) for c in rgb)


def _sample_lights(rng, regime: str) -> list[AreaLight]:
    lights = []
    for i in range(N_AREA_LIGHTS):
        # directions on the camera-facing side so every light reaches visible surface
        while True:
            d = rng.normal(size=3)
            d /= np.linalg.norm(d)
            if d[2] > 0.15:
                break
        dist = rng.uniform(2.5, 4.0)
        lights.append(
            AreaLight(
                position=tuple(float(c) for c in d * dist),
                size=float(rng.uniform(0.3, 1.0)),
                intensity=float(rng.uniform(5.0, 30.0)),
                color=_light_color(rng, regime, i),
            )
        )
    return lights


def sample_scene(regime: str, rng_seed: int, shape_set: str = "train") -> SceneDescription:
    """Draw a random scene for ``regime``; a pure function of its arguments."""
    if regime not in REGIMES:
        raise ValueError(f"unknown regime {regime!r}")
    catalog = sorted(CATALOGS[shape_set])
    rng = np.random.default_rng(np.random.SeedSequence(int(rng_seed)))
    shape_id = catalog[int(rng.integers(len(catalog)))]
    rotation = random_rotation(rng)
    roughness = float(rng.uniform(*ROUGHNESS_RANGE))
    albedo = _sample_albedo(rng, regime)
    f0 = float(rng.uniform(*SPECULAR_F0_RANGE))
    if regime == "env_map":
        return SceneDescription(
            shape_id=shape_id,
            rotation=rotation,
            albedo=albedo,
            roughness=roughness,
            lights=[],
            regime=regime,
            seed=int(rng_seed),
            env_map_id=int(rng.integers(N_ENV_MAPS)),
            env_yaw=float(rng.uniform(0, 2 * np.pi)),
            specular_f0=f0,
        )
    return SceneDescription(
        shape_id=shape_id,
        rotation=rotation,
        albedo=albedo,
        roughness=roughness,
        lights=_sample_lights(rng, regime),
        regime=regime,
        seed=int(rng_seed),
        specular_f0=f0,
    )
