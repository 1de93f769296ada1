import math

import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st

from despec.losses import (
    EPS,
    binary_gan_losses,
    content_loss,
    discriminator_loss,
    discriminator_terms,
    ssds_loss,
    total_generator_loss,
)

t = lambda *rows: torch.tensor(rows, dtype=torch.float64)

probs3 = st.lists(st.floats(0.01, 1.0), min_size=3, max_size=3).map(lambda v: [x / sum(v) for x in v])


def test_content_examples():
    a = torch.zeros(1, 3, 4, 4, dtype=torch.float64)
    assert content_loss(a, a).item() == 0.0
    assert content_loss(a + 0.1, a).item() == pytest.approx(0.01, abs=1e-12)
    x = torch.tensor([[0.1, 0.4], [0.2, 0.0]], dtype=torch.float64)
    y = torch.tensor([[0.3, 0.4], [0.2, 0.2]], dtype=torch.float64)
    assert content_loss(x, y).item() == pytest.approx(0.02, abs=1e-12)
    with pytest.raises(ValueError):
        content_loss(a, torch.zeros(1, 3, 4, 5))


@given(st.lists(st.floats(0, 1), min_size=4, max_size=4), st.lists(st.floats(0, 1), min_size=4, max_size=4))
def test_content_symmetric_nonnegative(a, b):
    a, b = torch.tensor(a, dtype=torch.float64), torch.tensor(b, dtype=torch.float64)
    assert content_loss(a, b).item() == content_loss(b, a).item() >= 0


@pytest.mark.parametrize(
    "p, expected",
    [((1 / 3, 1 / 3, 1 / 3), 1.0986), ((0.1, 0.8, 0.1), 0.2231), ((0.25, 0.25, 0.5), 2.0794)],
)
def test_ssds_examples(p, expected):
    assert ssds_loss(t(p)).item() == pytest.approx(expected, abs=1e-4)


def test_ssds_closed_form():
    p = (0.2, 0.3, 0.5)
    assert ssds_loss(t(p)).item() == pytest.approx(math.log(0.5) - math.log(0.2) - math.log(0.3), abs=1e-12)
    assert ssds_loss(t(p), input_term=False).item() == pytest.approx(math.log(0.5) - math.log(0.3), abs=1e-12)


def test_ssds_monotone_in_generated_class():
    vals = []
    for p3 in (0.1, 0.3, 0.5, 0.9):
        q = (1 - p3) / 2
        vals.append(ssds_loss(t((q, q, p3))).item())
    assert all(a < b for a, b in zip(vals, vals[1:]))


def test_ssds_clamps_zero_probabilities():
    v = ssds_loss(t((0.0, 0.0, 1.0)))
    assert torch.isfinite(v)
    assert v.item() == pytest.approx(-2 * math.log(EPS), rel=1e-9)


@given(probs3)
def test_ssds_batch_mean(p):
    one = ssds_loss(t(p)).item()
    assert ssds_loss(t(p, p, p)).item() == pytest.approx(one, abs=1e-12)


def test_discriminator_loss_uniform():
    u = t((1 / 3,) * 3)
    expected = -(3 * math.log(1 / 3) + 6 * math.log(2 / 3))
    assert discriminator_loss(u, u, u).item() == pytest.approx(expected, abs=1e-12)
    assert discriminator_loss(u, u, u).item() == pytest.approx(5.7286, abs=1e-4)


def test_discriminator_loss_one_hot():
    e = lambda i: t(tuple(1.0 if k == i else 0.0 for k in range(3)))
    assert discriminator_loss(e(0), e(1), e(2)).item() == pytest.approx(0.0, abs=1e-5)
    wrong = discriminator_loss(e(1), e(2), e(0))
    # each sample: its own class log(EPS), the predicted class log(EPS) again
    # through log(1 - 1) clamped, the third class log(1)
    assert torch.isfinite(wrong)
    assert wrong.item() == pytest.approx(-6 * math.log(EPS), rel=1e-9)


def test_discriminator_terms_count_and_errors():
    u = t((1 / 3,) * 3)
    terms = discriminator_terms(u, u, u)
    assert len(terms) == 9 and set(terms) == {(i, j) for i in range(3) for j in range(3)}
    with pytest.raises(ValueError):
        discriminator_terms(u, u, t((1 / 3,) * 3, (1 / 3,) * 3))


@given(probs3, probs3, probs3)
def test_discriminator_loss_nonnegative(a, b, c):
    assert discriminator_loss(t(a), t(b), t(c)).item() >= 0


def test_binary_gan_examples():
    h = t(0.5)
    g, d = binary_gan_losses(h, h)
    assert d.item() == pytest.approx(1.3863, abs=1e-4)
    assert g.item() == pytest.approx(0.6931, abs=1e-4)


def test_total_loss():
    assert total_generator_loss(0.01, 1.0986, 1e-3) == pytest.approx(0.0110986, abs=1e-12)
    with pytest.raises(ValueError):
        total_generator_loss(0.01, 1.0, -1e-3)


@given(st.floats(0, 1), st.floats(-10, 10), st.floats(0, 1), st.floats(0.1, 10))
def test_total_loss_scaling(content, ssds, lam, c):
    a = total_generator_loss(content, ssds, lam) - content
    b = total_generator_loss(content, ssds, lam * c) - content
    assert b == pytest.approx(c * a, abs=1e-9)
