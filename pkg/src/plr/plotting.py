"""Static figures: accuracy-vs-step curves and generated-sample grids."""

from __future__ import annotations

import numpy as np

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .models import ModelCheckpoint, generate
from .training import MetricsLog

__all__ = ["plot_accuracy", "sample_grid"]


def plot_accuracy(csv_paths: list[str], out_path: str, title: str = "") -> str:
    """Accuracy evolution over refinement steps; with several logs (one per
    seed) the curve is the mean with a +-1 std band."""
    if not csv_paths:
        raise ValueError("need at least one metrics CSV")
    logs = [MetricsLog.load(p) for p in csv_paths]
    steps = logs[0].steps
    for log in logs[1:]:
        if not np.array_equal(log.steps, steps):
            raise ValueError("metrics logs must share the same evaluation steps")
    acc = np.stack([log.test_acc for log in logs])
    mean, std = acc.mean(axis=0), acc.std(axis=0)

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(steps, mean, color="tab:blue", lw=1.8)
    if len(logs) > 1:
        ax.fill_between(steps, mean - std, mean + std, color="tab:blue", alpha=0.25)
    ax.set_xlabel("refinement step")
    ax.set_ylabel("target test accuracy")
    ax.set_ylim(0.0, 1.0)
    ax.grid(alpha=0.3)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def sample_grid(
    generator: ModelCheckpoint, out_path: str, seed: int = 0, per_class: int = 20, pad: int = 2
) -> str:
    """One row per class code, per_class samples each, saved as a PNG."""
    c = generator.arch["num_classes"]
    dim = generator.arch["latent_dim"]
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(c), per_class)
    z = rng.standard_normal((len(labels), dim)).astype(np.float32)
    images = generate(generator, z, labels)  # (c*per_class, 32, 32, ch)

    h, w, ch = images.shape[1:]
    grid = np.full(
        (c * (h + pad) + pad, per_class * (w + pad) + pad, ch), 1.0, dtype=np.float32
    )
    for i, img in enumerate(images):
        r, col = divmod(i, per_class)
        top, left = pad + r * (h + pad), pad + col * (w + pad)
        grid[top : top + h, left : left + w] = img

    from PIL import Image

    pixels = ((grid + 1.0) * 127.5).clip(0, 255).astype(np.uint8)
    Image.fromarray(pixels.squeeze(2) if ch == 1 else pixels).save(out_path)
    return out_path
