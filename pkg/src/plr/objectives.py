"""Adversarial loss pairs and the classifier's cross-entropy.

The discriminator emits raw scores; each objective applies its own squashing,
so the three kinds (cross_entropy, least_squares, hinge) share one D. The
cross-entropy generator loss is the non-saturating form, which is what
DCGAN-family trainers actually optimize. All reductions are batch means.

Pure functions over torch tensors (numpy input is converted), so they are
usable both inside training graphs and in tests against finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

__all__ = ["LossPair", "GAN_OBJECTIVES", "gan_loss", "classification_loss"]

GAN_OBJECTIVES = ("cross_entropy", "least_squares", "hinge")

PROB_FLOOR = 1e-12  # -log clamp so a zero at the true label stays finite


@dataclass(frozen=True)
class LossPair:
    """d_loss is minimized over discriminator weights, g_loss over generator's."""

    d_loss: torch.Tensor
    g_loss: torch.Tensor


def _as_tensor(x) -> torch.Tensor:
    t = torch.as_tensor(x)
    return t.double() if not t.is_floating_point() else t


def gan_loss(kind: str, real_scores, fake_scores) -> LossPair:
    """Both adversarial losses from raw discriminator scores.

    softplus(-s) = -log sigmoid(s), so the cross-entropy branch squashes
    inside the loss without ever materializing probabilities near 0.
    """
    real = _as_tensor(real_scores)
    fake = _as_tensor(fake_scores)
    if real.numel() == 0 or fake.numel() == 0:
        raise ValueError("score batches must be nonempty")

    if kind == "cross_entropy":
        d = F.softplus(-real).mean() + F.softplus(fake).mean()
        g = F.softplus(-fake).mean()
    elif kind == "least_squares":
        d = 0.5 * ((real - 1.0) ** 2).mean() + 0.5 * (fake**2).mean()
        g = 0.5 * ((fake - 1.0) ** 2).mean()
    elif kind == "hinge":
        d = F.relu(1.0 - real).mean() + F.relu(1.0 + fake).mean()
        g = -fake.mean()
    else:
        raise ValueError(f"unknown GAN objective {kind!r}; known: {', '.join(GAN_OBJECTIVES)}")
    return LossPair(d_loss=d, g_loss=g)


def classification_loss(scores, labels) -> torch.Tensor:
    """Mean -log p[true label] over the batch; rows are probabilities."""
    probs = _as_tensor(scores)
    labels = torch.as_tensor(labels, dtype=torch.int64)
    if probs.ndim != 2 or labels.shape != (probs.shape[0],):
        raise ValueError("need B x c probability rows and B integer labels")
    if labels.numel() and (labels.min() < 0 or labels.max() >= probs.shape[1]):
        raise ValueError(f"labels out of range [0, {probs.shape[1]})")
    picked = probs.gather(1, labels[:, None]).squeeze(1)
    return -torch.log(picked.clamp_min(PROB_FLOOR)).mean()
