"""Shared fixtures: small data slices and pretrained micro models.

Session-scoped so the expensive pieces (dataset load, micro training) run
once. Widths and budgets are deliberately tiny; these fixtures exercise
machinery, not benchmark numbers.
"""

import numpy as np
import pytest
import torch

from plr.data import load_dataset, subsample
from plr.models import build_discriminator, build_generator
from plr.training import pretrain_cgan, pretrain_source
from plr.data import assign_pseudo_labels

TINY = dict(width=8)


@pytest.fixture(scope="session")
def digits_train():
    return subsample(load_dataset("digits", "train", 1), 600, seed=0)


@pytest.fixture(scope="session")
def digits_test():
    return subsample(load_dataset("digits", "test", 1), 300, seed=0)


@pytest.fixture(scope="session")
def tiny_classifier(digits_train):
    return pretrain_source(digits_train, epochs=3, lr=3e-4, batch_size=64, width=8, seed=0)


@pytest.fixture(scope="session")
def tiny_pseudo(tiny_classifier, digits_train):
    return assign_pseudo_labels(tiny_classifier, digits_train)


@pytest.fixture(scope="session")
def tiny_gan(tiny_pseudo):
    gen = build_generator(10, 1, width=16, seed=0)
    disc = build_discriminator(10, 1, width=8, seed=0)
    # a higher-than-default rate so a few hundred steps leave visible structure
    pretrain_cgan(gen, disc, tiny_pseudo, iterations=150, lr=2e-4, batch_size=64, seed=0)
    return gen, disc


def constant_classifier(ckpt, k: int):
    """Force a classifier checkpoint to always answer class k."""
    head = ckpt.net.head[-1]
    with torch.no_grad():
        head.weight.zero_()
        head.bias.zero_()
        head.bias[k] = 10.0
    return ckpt


def rng_matrix(rng, c=10, scale=1000):
    return rng.integers(0, scale, (c, c)).astype(np.int64)
