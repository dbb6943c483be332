"""Label-noise analytics: confusion matrices, asymmetry, uniform-noise algebra.

All functions here are pure numpy and safe to call concurrently. A confusion
matrix always has rows indexed by the true class and columns by the predicted
class.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ConfusionMatrix",
    "NoiseSpec",
    "build_confusion_matrix",
    "asymmetry",
    "uniform_noise_equivalent",
    "accuracy_from_noise",
    "inject_uniform_noise",
]


@dataclass(frozen=True)
class ConfusionMatrix:
    """c x c matrix of counts; rows = true class, columns = predicted class."""

    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise ValueError(f"counts must be square, got shape {counts.shape}")
        if np.any(counts < 0):
            raise ValueError("counts must be nonnegative")
        if not np.any(counts > 0):
            raise ValueError("confusion matrix is all-zero")
        object.__setattr__(self, "counts", counts.astype(np.int64))

    @property
    def c(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def accuracy(self) -> float:
        return float(np.trace(self.counts) / self.counts.sum())

    def to_text(self) -> str:
        """Plain-text form: first line "c=<int>", then c rows of ints."""
        lines = [f"c={self.c}"]
        for row in self.counts:
            lines.append(" ".join(str(int(v)) for v in row))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ConfusionMatrix":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or not lines[0].startswith("c="):
            raise ValueError("expected header line 'c=<int>'")
        c = int(lines[0][2:])
        if len(lines) != c + 1:
            raise ValueError(f"expected {c} matrix rows, got {len(lines) - 1}")
        counts = np.array([[int(v) for v in ln.split()] for ln in lines[1:]])
        return cls(counts)


@dataclass(frozen=True)
class NoiseSpec:
    """Uniform-noise injection: randomize `fraction` of labels over `classes`."""

    fraction: float
    classes: int
    seed: int

    def __post_init__(self):
        if not 0.0 <= self.fraction <= 1.0:
            raise ValueError(f"fraction must be in [0, 1], got {self.fraction}")
        if self.classes < 2:
            raise ValueError(f"classes must be >= 2, got {self.classes}")


def build_confusion_matrix(true_labels, predicted_labels, c: int) -> ConfusionMatrix:
    """Count (true, predicted) pairs into a c x c matrix."""
    t = np.asarray(true_labels, dtype=np.int64)
    p = np.asarray(predicted_labels, dtype=np.int64)
    if t.shape != p.shape or t.ndim != 1 or len(t) == 0:
        raise ValueError(
            f"label sequences must be equal-length nonempty 1-d, got {t.shape} vs {p.shape}"
        )
    if t.min() < 0 or t.max() >= c or p.min() < 0 or p.max() >= c:
        raise ValueError(f"labels out of range [0, {c})")
    counts = np.zeros((c, c), dtype=np.int64)
    np.add.at(counts, (t, p), 1)
    return ConfusionMatrix(counts)


def asymmetry(m: ConfusionMatrix) -> float:
    """||M - M^T||_F / (2 ||M||_F), in [0, 1]; 0 exactly for symmetric M.

    Computed on raw counts in double precision. The measure is invariant to
    positive scaling, so counts vs. rates makes no difference for balanced
    data; we deliberately do not normalize.
    """
    counts = m.counts.astype(np.float64)
    norm = np.linalg.norm(counts)
    if norm == 0.0:
        raise ValueError("asymmetry undefined for the all-zero matrix")
    return float(np.linalg.norm(counts - counts.T) / (2.0 * norm))


def uniform_noise_equivalent(a: float, c: int) -> float:
    """Fraction n of uniformly randomized labels that yields accuracy a.

    n = (1 - a) * c / (c - 1). Requires chance-or-better accuracy a >= 1/c.
    """
    if c < 2:
        raise ValueError(f"c must be >= 2, got {c}")
    # tolerate one-ulp boundary error so the algebraic inverse round-trips
    if not 1.0 / c - 1e-12 <= a <= 1.0 + 1e-12:
        raise ValueError(f"accuracy must be in [1/c, 1] = [{1.0 / c:.4f}, 1], got {a}")
    return min(1.0, max(0.0, (1.0 - a) * c / (c - 1)))


def accuracy_from_noise(n: float, c: int) -> float:
    """Accuracy after uniformly randomizing a fraction n of labels.

    a = 1 - n * (c - 1) / c. Exact algebraic inverse of
    uniform_noise_equivalent.
    """
    if c < 2:
        raise ValueError(f"c must be >= 2, got {c}")
    if not 0.0 <= n <= 1.0:
        raise ValueError(f"noise fraction must be in [0, 1], got {n}")
    return 1.0 - n * (c - 1) / c


def inject_uniform_noise(labels, spec: NoiseSpec) -> np.ndarray:
    """Randomize round(fraction * len) label positions, chosen without
    replacement, each resampled uniformly over all `classes` classes (the
    correct class included, so on average 1/c of randomized labels stay
    correct). Deterministic given spec.seed.
    """
    out = np.array(labels, dtype=np.int64)
    if out.ndim != 1:
        raise ValueError("labels must be a 1-d sequence")
    if len(out) and (out.min() < 0 or out.max() >= spec.classes):
        raise ValueError(f"labels out of range [0, {spec.classes})")
    k = int(round(spec.fraction * len(out)))
    if k == 0:
        return out
    rng = np.random.default_rng(spec.seed)
    positions = rng.choice(len(out), size=k, replace=False)
    out[positions] = rng.integers(0, spec.classes, size=k)
    return out
