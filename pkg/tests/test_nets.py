import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from despec.nets import (
    DiscriminatorSpec,
    GeneratorSpec,
    ShapeError,
    build_discriminator,
    build_generator,
    parameter_count,
)

SMALL = GeneratorSpec(widths=[4, 8, 8, 16])


def _conv_params(cin, cout, k, bn=False):
    # batch-normed convs drop the bias and gain a scale and a shift per channel
    return cin * cout * k * k + (2 * cout if bn else cout)


def _expected_generator_params(spec: GeneratorSpec) -> int:
    w, k, c, bn = spec.widths, spec.kernel, spec.in_channels, spec.batch_norm
    n = _conv_params(c, w[0], spec.stem_kernel, bn)
    cin = w[0]
    for cout in w:
        n += _conv_params(cin, cout, k, bn) + _conv_params(cout, cout, k, bn)
        cin = cout
    n += _conv_params(cin, cin, k, bn)
    for cout in (w[2], w[1], w[0], w[0]):
        n += _conv_params(cin, cout, k, bn) + _conv_params(2 * cout, cout, k, bn)
        cin = cout
    return n + _conv_params(cin, c, k)


@pytest.mark.parametrize("bn", [True, False])
@pytest.mark.parametrize("widths", [[4, 8, 8, 16], [32, 64, 128, 256], [64, 128, 256, 512]])
def test_generator_parameter_count(widths, bn):
    spec = GeneratorSpec(widths=widths, batch_norm=bn)
    assert parameter_count(build_generator(spec, 0)) == _expected_generator_params(spec)


def test_default_generator_parameter_count():
    # 64..512 widths with batch norm, tallied by hand layer by layer
    assert parameter_count(build_generator(GeneratorSpec(), 0)) == 10_303_235


def test_generator_seeded_init():
    a, b, c = build_generator(SMALL, 1), build_generator(SMALL, 1), build_generator(SMALL, 2)
    for pa, pb in zip(a.parameters(), b.parameters()):
        assert torch.equal(pa, pb)
    assert any(not torch.equal(pa, pc) for pa, pc in zip(a.parameters(), c.parameters()))


def test_generator_init_leaves_global_rng_alone():
    torch.manual_seed(5)
    before = torch.rand(1)
    torch.manual_seed(5)
    build_generator(SMALL, 3)
    assert torch.equal(torch.rand(1), before)


def test_generator_bad_widths():
    with pytest.raises(ValueError):
        build_generator(GeneratorSpec(widths=[]), 0)
    with pytest.raises(ValueError):
        build_generator(GeneratorSpec(widths=[4, 0, 4, 4]), 0)


@pytest.mark.parametrize("size", [64, 256])
def test_generator_sizes_and_range(size):
    g = build_generator(SMALL, 0)
    x = torch.rand(1, 3, size, size)
    with torch.no_grad():
        y = g(x)
    assert y.shape == x.shape
    assert torch.all((y > 0) & (y < 1))


def test_generator_rejects_indivisible_size():
    with pytest.raises(ShapeError):
        build_generator(SMALL, 0)(torch.rand(1, 3, 100, 100))
    with pytest.raises(ShapeError):
        build_generator(SMALL, 0)(torch.rand(3, 64, 64))


def test_generator_non_square():
    with torch.no_grad():
        assert build_generator(SMALL, 0)(torch.rand(2, 3, 32, 48)).shape == (2, 3, 32, 48)


@settings(max_examples=5, deadline=None)
@given(st.permutations(list(range(4))))
def test_generator_batch_permutation_equivariant(perm):
    g = build_generator(SMALL, 0).double()
    x = torch.rand(4, 3, 32, 32, generator=torch.Generator().manual_seed(0), dtype=torch.float64)
    with torch.no_grad():
        assert torch.allclose(g(x)[perm], g(x[perm]), atol=1e-12)


DSPEC = DiscriminatorSpec(base_width=4, input_size=64)


def test_discriminator_widths():
    assert DiscriminatorSpec(base_width=64).widths == [64, 64, 128, 128, 256, 256, 512, 512]
    assert DiscriminatorSpec(input_size=256).final_size == 16


def test_discriminator_softmax_rows():
    d = build_discriminator(DSPEC, 0)
    p = d(torch.rand(5, 3, 64, 64))
    assert p.shape == (5, 3)
    assert torch.allclose(p.sum(1), torch.ones(5), atol=1e-6)
    assert torch.all(p >= 0)


@pytest.mark.parametrize("seed", range(10))
def test_discriminator_zero_image_near_uniform(seed):
    d = build_discriminator(DiscriminatorSpec(base_width=8, input_size=64), seed)
    assert d.training
    with torch.no_grad():
        p = d(torch.zeros(1, 3, 64, 64))
    assert torch.all((p >= 0.2) & (p <= 0.5))


def test_discriminator_shape_errors():
    d = build_discriminator(DSPEC, 0)
    with pytest.raises(ShapeError):
        d(torch.rand(1, 3, 32, 32))
    with pytest.raises(ValueError):
        build_discriminator(DiscriminatorSpec(input_size=40), 0)


def test_binary_discriminator():
    d = build_discriminator(DiscriminatorSpec(base_width=4, input_size=64, binary=True), 0)
    p = d(torch.rand(3, 3, 64, 64))
    assert p.shape == (3,)
    assert torch.all((p > 0) & (p < 1))
