"""Specularity removal generator (U-Net style) and the 3-class discriminator."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import torch
import torch.nn as nn
import torch.nn.functional as F

# class indices of the discriminator output
CLASS_INPUT, CLASS_DIFFUSE, CLASS_GENERATED = 0, 1, 2
DOWNSAMPLE = 16


class ShapeError(ValueError):
    pass


@dataclass
class GeneratorSpec:
    in_channels: int = 3
    widths: list[int] = field(default_factory=lambda: [64, 128, 256, 512])
    kernel: int = 3
    stem_kernel: int = 7
    # batch norm after every hidden conv; without it the plain ReLU stack
    # collapses to a saturated sigmoid under ADAM at lr 2e-4
    batch_norm: bool = True

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class DiscriminatorSpec:
    in_channels: int = 3
    base_width: int = 64
    input_size: int = 256
    n_layers: int = 8
    kernel: int = 3
    binary: bool = False
    leaky_slope: float = 0.2

    def to_json(self) -> dict:
        return asdict(self)

    @property
    def widths(self) -> list[int]:
        # width doubles every other layer: w, w, 2w, 2w, ...
        return [self.base_width * 2 ** (i // 2) for i in range(self.n_layers)]

    @property
    def final_size(self) -> int:
        return self.input_size // 2 ** (self.n_layers // 2)


def _conv(cin, cout, k, stride=1, bias=True):
    return nn.Conv2d(cin, cout, k, stride=stride, padding=k // 2, bias=bias)


def _hidden(cin, cout, k, stride=1, norm=True):
    if not norm:
        return _conv(cin, cout, k, stride)
    return nn.Sequential(_conv(cin, cout, k, stride, bias=False), nn.BatchNorm2d(cout))


class Generator(nn.Module):
    """Encoder of stride-2 stages, bottleneck, and a mirrored decoder.

    Each decoder stage upsamples (nearest), convolves, concatenates the encoder
    feature map of the same resolution, and fuses with a second convolution.
    """

    def __init__(self, spec: GeneratorSpec):
        super().__init__()
        if len(spec.widths) != 4 or any(w < 1 for w in spec.widths):
            raise ValueError(f"generator needs 4 positive stage widths, got {spec.widths}")
        self.spec = spec
        k = spec.kernel
        w = spec.widths
        bn = spec.batch_norm
        self.stem = _hidden(spec.in_channels, w[0], spec.stem_kernel, norm=bn)
        self.down = nn.ModuleList()
        cin = w[0]
        for cout in w:
            self.down.append(nn.ModuleList([_hidden(cin, cout, k, 2, bn), _hidden(cout, cout, k, norm=bn)]))
            cin = cout
        self.bottleneck = _hidden(cin, cin, k, norm=bn)
        skips = [w[0]] + w[:-1]
        self.up = nn.ModuleList()
        for cout in reversed(skips):
            self.up.append(nn.ModuleList([_hidden(cin, cout, k, norm=bn), _hidden(2 * cout, cout, k, norm=bn)]))
            cin = cout
        self.head = _conv(cin, spec.in_channels, k)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() != 4 or x.shape[-1] % DOWNSAMPLE or x.shape[-2] % DOWNSAMPLE:
            raise ShapeError(f"generator input must be (B, C, H, W) with H, W divisible by {DOWNSAMPLE}, got {tuple(x.shape)}")
        h = F.relu(self.stem(x))
        skips = [h]
        for strided, conv in self.down:
            h = F.relu(conv(F.relu(strided(h))))
            skips.append(h)
        skips.pop()
        h = F.relu(self.bottleneck(h))
        for conv, fuse in self.up:
            h = F.relu(conv(F.interpolate(h, scale_factor=2, mode="nearest")))
            h = F.relu(fuse(torch.cat([h, skips.pop()], dim=1)))
        return torch.sigmoid(self.head(h))


class Discriminator(nn.Module):
    """Strided conv stack ending in a dense layer; softmax over 3 classes.

    The binary variant emits one sigmoid probability instead.
    """

    def __init__(self, spec: DiscriminatorSpec):
        super().__init__()
        if spec.input_size % 2 ** (spec.n_layers // 2) or spec.final_size < 1:
            raise ValueError(f"input_size {spec.input_size} incompatible with {spec.n_layers} layers")
        self.spec = spec
        layers: list[nn.Module] = []
        cin = spec.in_channels
        for i, cout in enumerate(spec.widths):
            last = i == spec.n_layers - 1
            # batch norm follows every conv but the last; a bias there is redundant
            layers.append(_conv(cin, cout, spec.kernel, stride=2 if i % 2 else 1, bias=last))
            if not last:
                layers += [nn.LeakyReLU(spec.leaky_slope), nn.BatchNorm2d(cout)]
            cin = cout
        self.features = nn.Sequential(*layers)
        self.dense = nn.Linear(cin * spec.final_size**2, 1 if spec.binary else 3)

    def logits(self, x: torch.Tensor) -> torch.Tensor:
        s = self.spec.input_size
        if x.dim() != 4 or tuple(x.shape[-2:]) != (s, s):
            raise ShapeError(f"discriminator expects (B, C, {s}, {s}) inputs, got {tuple(x.shape)}")
        return self.dense(torch.flatten(self.features(x), 1))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        z = self.logits(x)
        if self.spec.binary:
            return torch.sigmoid(z).squeeze(1)
        return torch.softmax(z, dim=1)


def _seeded(build, init_seed: int):
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(int(init_seed))
        return build()


def build_generator(spec: GeneratorSpec, init_seed: int) -> Generator:
    return _seeded(lambda: Generator(spec), init_seed)


def build_discriminator(spec: DiscriminatorSpec, init_seed: int) -> Discriminator:
    return _seeded(lambda: Discriminator(spec), init_seed)


def parameter_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())
