from despec.renderer.dataset import generate_dataset, pair_seed
from despec.renderer.raycast import hit_mask, render_pair
from despec.renderer.scene import AlbedoMap, AreaLight, SceneDescription, sample_scene
from despec.renderer.shading import beckmann_ndf, shade_lambertian
from despec.renderer.shapes import TEST_SHAPES, TRAIN_SHAPES

__all__ = [
    "AlbedoMap",
    "AreaLight",
    "SceneDescription",
    "TEST_SHAPES",
    "TRAIN_SHAPES",
    "beckmann_ndf",
    "generate_dataset",
    "hit_mask",
    "pair_seed",
    "render_pair",
    "sample_scene",
    "shade_lambertian",
]
