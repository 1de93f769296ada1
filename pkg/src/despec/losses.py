"""Training objectives: pixel MSE, the multi-class adversarial terms, and the
binary GAN baseline. Probabilities are clamped at ``EPS`` before every log.

Probability batches are ``(B, 3)`` tensors ordered (input, diffuse, generated).
"""

from __future__ import annotations

import torch

EPS = 1e-7
N_CLASSES = 3


def _log(p: torch.Tensor) -> torch.Tensor:
    return torch.log(torch.clamp(p, min=EPS))


def _log1m(p: torch.Tensor) -> torch.Tensor:
    return torch.log(torch.clamp(1.0 - p, min=EPS))


def content_loss(generated: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Squared error averaged over pixels, channels and batch."""
    if generated.shape != target.shape:
        raise ValueError(f"shape mismatch: {tuple(generated.shape)} vs {tuple(target.shape)}")
    return torch.mean((target - generated) ** 2)


def ssds_loss(probs: torch.Tensor, input_term: bool = True) -> torch.Tensor:
    """Generator-side adversarial loss on discriminator outputs for generated images.

    ``log p_gen - log p_input - log p_diffuse``, averaged over the batch.
    ``input_term=False`` drops the ``-log p_input`` term.
    """
    loss = _log(probs[:, 2]) - _log(probs[:, 1])
    if input_term:
        loss = loss - _log(probs[:, 0])
    return loss.mean()


def discriminator_terms(probs_input, probs_diffuse, probs_generated) -> dict[tuple[int, int], torch.Tensor]:
    """The nine batch-mean log terms keyed by (output class i, sample class j).

    Diagonal entries are ``E log D_i(x_i)``; off-diagonal ``E log(1 - D_i(x_j))``.
    """
    batches = (probs_input, probs_diffuse, probs_generated)
    sizes = {b.shape[0] for b in batches}
    if len(sizes) != 1:
        raise ValueError(f"batch sizes differ: {[b.shape[0] for b in batches]}")
    terms = {}
    for j, probs in enumerate(batches):
        for i in range(N_CLASSES):
            terms[i, j] = (_log(probs[:, i]) if i == j else _log1m(probs[:, i])).mean()
    return terms


def discriminator_loss(probs_input, probs_diffuse, probs_generated) -> torch.Tensor:
    """Negated min-max objective, so the discriminator minimizes it."""
    return -sum(discriminator_terms(probs_input, probs_diffuse, probs_generated).values())


def total_generator_loss(content, ssds, lam: float):
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    return content + lam * ssds


def binary_generator_loss(d_fake: torch.Tensor) -> torch.Tensor:
    return -_log(d_fake).mean()


def binary_gan_losses(d_real: torch.Tensor, d_fake: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Non-saturating GAN losses ``(g_loss, d_loss)`` from sigmoid outputs."""
    d_loss = -_log(d_real).mean() - _log1m(d_fake).mean()
    return binary_generator_loss(d_fake), d_loss
