"""Measurement suite: classifier accuracy, GAN-test, and GAN-train.

GAN-test scores a generator by asking a near-perfect oracle classifier
(trained on real clean data) whether generated images match their condition
codes. GAN-train goes the other way: a fresh classifier is trained purely on
generated images and evaluated on real test data. Both reduce to a confusion
matrix, so each report carries accuracy and asymmetry that are recomputable
from the matrix.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import torch

from .data import LabeledDataset
from .models import (
    ModelCheckpoint,
    build_classifier,
    generate,
    one_hot,
    predict_probs,
)
from .noise import ConfusionMatrix, asymmetry, build_confusion_matrix
from .objectives import classification_loss

__all__ = ["EvalReport", "evaluate_classifier", "gan_test", "gan_train"]

METRIC_KINDS = ("classifier", "gan_test", "gan_train")


@dataclass(frozen=True)
class EvalReport:
    """Accuracy plus confusion structure for one measurement."""

    accuracy: float
    matrix: ConfusionMatrix
    delta_A: float
    n_samples: int
    metric_kind: str
    split: str = ""

    def __post_init__(self):
        if self.metric_kind not in METRIC_KINDS:
            raise ValueError(f"metric_kind must be one of {METRIC_KINDS}")
        if abs(self.accuracy - self.matrix.accuracy()) > 1e-10:
            raise ValueError("accuracy inconsistent with the confusion matrix")
        if abs(self.delta_A - asymmetry(self.matrix)) > 1e-10:
            raise ValueError("delta_A inconsistent with the confusion matrix")
        if self.n_samples != self.matrix.total:
            raise ValueError("n_samples inconsistent with the confusion matrix")

    @classmethod
    def from_matrix(cls, matrix: ConfusionMatrix, metric_kind: str, split: str = "") -> "EvalReport":
        return cls(
            accuracy=matrix.accuracy(),
            matrix=matrix,
            delta_A=asymmetry(matrix),
            n_samples=matrix.total,
            metric_kind=metric_kind,
            split=split,
        )

    def to_text(self) -> str:
        # reals at 4 decimals for reading; the matrix is exact, so parsing
        # recomputes accuracy and delta_A losslessly
        lines = [
            f"metric_kind={self.metric_kind}",
            f"split={self.split}",
            f"n_samples={self.n_samples}",
            f"accuracy={self.accuracy:.4f}",
            f"delta_A={self.delta_A:.4f}",
        ]
        return "\n".join(lines) + "\n" + self.matrix.to_text()

    @classmethod
    def from_text(cls, text: str) -> "EvalReport":
        fields = {}
        lines = text.splitlines()
        i = 0
        while i < len(lines) and "=" in lines[i] and not lines[i].startswith("c="):
            key, _, value = lines[i].partition("=")
            fields[key] = value
            i += 1
        matrix = ConfusionMatrix.from_text("\n".join(lines[i:]))
        return cls.from_matrix(matrix, fields["metric_kind"], fields.get("split", ""))

    def save(self, path: str):
        with open(path, "w") as f:
            f.write(self.to_text())

    @classmethod
    def load(cls, path: str) -> "EvalReport":
        with open(path) as f:
            return cls.from_text(f.read())


def evaluate_classifier(classifier: ModelCheckpoint, data: LabeledDataset) -> EvalReport:
    """Accuracy and confusion matrix of a classifier on a labeled split."""
    preds = np.argmax(predict_probs(classifier, data.images), axis=1)
    matrix = build_confusion_matrix(data.labels, preds, data.num_classes)
    return EvalReport.from_matrix(matrix, "classifier", split=data.split)


def gan_test(
    oracle: ModelCheckpoint,
    generator: ModelCheckpoint,
    n_samples: int,
    seed: int,
) -> EvalReport:
    """Oracle accuracy on generated images, with the condition code as truth."""
    c = generator.arch["num_classes"]
    if oracle.arch["num_classes"] != c:
        raise ValueError("oracle and generator class counts must match")
    rng = np.random.default_rng(seed)
    codes = rng.integers(0, c, n_samples)
    z = rng.standard_normal((n_samples, generator.arch["latent_dim"])).astype(np.float32)
    preds = np.argmax(predict_probs(oracle, generate(generator, z, codes)), axis=1)
    matrix = build_confusion_matrix(codes, preds, c)
    return EvalReport.from_matrix(matrix, "gan_test", split="generated")


def gan_train(
    generator: ModelCheckpoint,
    real_test: LabeledDataset,
    train_budget: int,
    seed: int,
    lr: float = 3e-4,
    batch_size: int = 64,
    width: int = 64,
) -> EvalReport:
    """Train a fresh classifier on generated batches only, score it on real
    test data. Divergence stops training early and reports the last finite
    state instead of aborting."""
    c = generator.arch["num_classes"]
    if real_test.num_classes != c:
        raise ValueError("generator and test-set class counts must match")
    ckpt = build_classifier(c, generator.arch["channels"], width=width, seed=seed)
    opt = torch.optim.Adam(ckpt.net.parameters(), lr=lr, betas=(0.5, 0.999))
    rng = np.random.default_rng(seed)
    dim = generator.arch["latent_dim"]

    ckpt.net.train()
    for step in range(train_budget):
        codes = rng.integers(0, c, batch_size)
        z = rng.standard_normal((batch_size, dim)).astype(np.float32)
        generator.net.eval()
        with torch.no_grad():
            fake = generator.net(torch.from_numpy(z), one_hot(codes, c))
        loss = classification_loss(ckpt.net(fake), codes)
        if not torch.isfinite(loss):
            warnings.warn(
                f"classifier loss became non-finite at step {step}; "
                "reporting the last finite state",
                RuntimeWarning,
                stacklevel=2,
            )
            break
        opt.zero_grad()
        loss.backward()
        opt.step()
        ckpt.step += 1

    report = evaluate_classifier(ckpt, real_test)
    return EvalReport.from_matrix(report.matrix, "gan_train", split=real_test.split)
