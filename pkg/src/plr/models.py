"""Network definitions, seeded builders, and single-file checkpoints.

Three nets cover the whole system: a softmax digit classifier, a conditional
generator (one-hot code concatenated to the latent vector), and a conditional
discriminator (one-hot code broadcast as constant feature planes). Widths are
configurable so tests can run narrow nets on CPU; defaults match the full-size
configuration used on the real benchmarks.

Checkpoints are one torch.save file holding a manifest (role, step, config
hash, architecture summary) plus the state dict, so a file can be rebuilt
without any out-of-band knowledge.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

__all__ = [
    "DigitClassifier",
    "ConditionalGenerator",
    "ConditionalDiscriminator",
    "LatentSpec",
    "ModelCheckpoint",
    "OracleThresholdError",
    "build_classifier",
    "build_generator",
    "build_discriminator",
    "build_oracle",
    "load_checkpoint",
    "one_hot",
    "predict_probs",
    "generate",
    "to_torch_images",
    "to_numpy_images",
]

LATENT_DIM = 100

ROLES = ("classifier", "generator", "discriminator", "oracle")


class OracleThresholdError(RuntimeError):
    """Oracle training ended below the required test accuracy."""


@dataclass(frozen=True)
class LatentSpec:
    """Latent prior of the generator: standard normal of fixed dimension."""

    dim: int = LATENT_DIM

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("latent dimension must be >= 1")

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.standard_normal((n, self.dim)).astype(np.float32)


def to_torch_images(images: np.ndarray) -> torch.Tensor:
    """NHWC float numpy -> NCHW float tensor."""
    return torch.from_numpy(np.ascontiguousarray(images.transpose(0, 3, 1, 2)))


def to_numpy_images(images: torch.Tensor) -> np.ndarray:
    """NCHW tensor -> NHWC float32 numpy."""
    return images.detach().cpu().numpy().transpose(0, 2, 3, 1).astype(np.float32)


def one_hot(labels, num_classes: int) -> torch.Tensor:
    labels = torch.as_tensor(np.asarray(labels), dtype=torch.int64)
    if labels.numel() and (labels.min() < 0 or labels.max() >= num_classes):
        raise ValueError(f"label index out of range [0, {num_classes})")
    return torch.nn.functional.one_hot(labels, num_classes).float()


class DigitClassifier(nn.Module):
    """conv5-pool-conv5-pool-fc-fc with softmax output probabilities."""

    def __init__(self, num_classes: int, channels: int, width: int = 64):
        super().__init__()
        self.features = nn.Sequential(
            nn.Conv2d(channels, width, 5, padding=2),
            nn.ReLU(),
            nn.MaxPool2d(2),
            nn.Conv2d(width, 2 * width, 5, padding=2),
            nn.ReLU(),
            nn.MaxPool2d(2),
        )
        self.head = nn.Sequential(
            nn.Flatten(),
            nn.Linear(2 * width * 8 * 8, 16 * width),
            nn.ReLU(),
            nn.Linear(16 * width, num_classes),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return torch.softmax(self.head(self.features(x)), dim=1)


class ConditionalGenerator(nn.Module):
    """fc to 4x4 feature map, three transposed-conv stages up to 32x32 tanh."""

    def __init__(
        self, num_classes: int, channels: int, width: int = 256, latent_dim: int = LATENT_DIM
    ):
        super().__init__()
        self.num_classes = num_classes
        self.latent_dim = latent_dim
        self.fc = nn.Sequential(
            nn.Linear(latent_dim + num_classes, 4 * 4 * width),
            nn.BatchNorm1d(4 * 4 * width),
            nn.ReLU(),
        )
        self.width = width
        self.deconv = nn.Sequential(
            nn.ConvTranspose2d(width, width // 2, 4, stride=2, padding=1),
            nn.BatchNorm2d(width // 2),
            nn.ReLU(),
            nn.ConvTranspose2d(width // 2, width // 4, 4, stride=2, padding=1),
            nn.BatchNorm2d(width // 4),
            nn.ReLU(),
            nn.ConvTranspose2d(width // 4, channels, 4, stride=2, padding=1),
            nn.Tanh(),
        )

    def forward(self, z: torch.Tensor, code: torch.Tensor) -> torch.Tensor:
        if code.shape != (z.shape[0], self.num_classes):
            raise ValueError("condition code must be one-hot rows matching the batch")
        h = self.fc(torch.cat([z, code], dim=1))
        return self.deconv(h.view(-1, self.width, 4, 4))


class ConditionalDiscriminator(nn.Module):
    """Three strided convs to a single raw score; condition code enters as
    constant feature planes concatenated to the image."""

    def __init__(self, num_classes: int, channels: int, width: int = 64):
        super().__init__()
        self.num_classes = num_classes
        self.conv = nn.Sequential(
            nn.Conv2d(channels + num_classes, width, 4, stride=2, padding=1),
            nn.LeakyReLU(0.2),
            nn.Conv2d(width, 2 * width, 4, stride=2, padding=1),
            nn.BatchNorm2d(2 * width),
            nn.LeakyReLU(0.2),
            nn.Conv2d(2 * width, 4 * width, 4, stride=2, padding=1),
            nn.BatchNorm2d(4 * width),
            nn.LeakyReLU(0.2),
        )
        self.fc = nn.Linear(4 * width * 4 * 4, 1)

    def forward(self, x: torch.Tensor, code: torch.Tensor) -> torch.Tensor:
        if code.shape != (x.shape[0], self.num_classes):
            raise ValueError("condition code must be one-hot rows matching the batch")
        planes = code[:, :, None, None].expand(-1, -1, x.shape[2], x.shape[3])
        h = self.conv(torch.cat([x, planes], dim=1))
        return self.fc(h.flatten(1))


def _dcgan_init(module: nn.Module):
    if isinstance(module, (nn.Conv2d, nn.ConvTranspose2d, nn.Linear)):
        nn.init.normal_(module.weight, 0.0, 0.02)
        if module.bias is not None:
            nn.init.zeros_(module.bias)
    elif isinstance(module, (nn.BatchNorm1d, nn.BatchNorm2d)):
        nn.init.normal_(module.weight, 1.0, 0.02)
        nn.init.zeros_(module.bias)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

@dataclass
class ModelCheckpoint:
    """A net plus the manifest needed to rebuild and identify it."""

    role: str
    net: nn.Module
    arch: dict
    step: int = 0
    config_hash: str = ""

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}, got {self.role!r}")

    @property
    def ident(self) -> str:
        base = f"{self.role}_{self.step}"
        return f"{base}@{self.config_hash}" if self.config_hash else base

    @property
    def filename(self) -> str:
        return f"{self.role}_{self.step}.ckpt"

    def save(self, path: str) -> str:
        """Write the checkpoint; if path is a directory, use the standard name."""
        if os.path.isdir(path):
            path = os.path.join(path, self.filename)
        torch.save(
            {
                "manifest": {
                    "role": self.role,
                    "step": self.step,
                    "config_hash": self.config_hash,
                    "arch": dict(self.arch),
                },
                "state": self.net.state_dict(),
            },
            path,
        )
        return path


_NET_KINDS = {
    "classifier": DigitClassifier,
    "generator": ConditionalGenerator,
    "discriminator": ConditionalDiscriminator,
}


def _make_net(arch: dict) -> nn.Module:
    kwargs = {k: v for k, v in arch.items() if k != "kind"}
    return _NET_KINDS[arch["kind"]](**kwargs)


def load_checkpoint(path: str) -> ModelCheckpoint:
    payload = torch.load(path, map_location="cpu", weights_only=True)
    manifest = payload["manifest"]
    net = _make_net(manifest["arch"])
    net.load_state_dict(payload["state"])
    net.eval()
    return ModelCheckpoint(
        role=manifest["role"],
        net=net,
        arch=manifest["arch"],
        step=manifest["step"],
        config_hash=manifest["config_hash"],
    )


# ---------------------------------------------------------------------------
# builders (seeded; torch.manual_seed is touched only here)
# ---------------------------------------------------------------------------

def _check_build_args(num_classes: int, channels: int):
    if num_classes < 2:
        raise ValueError("need at least 2 classes")
    if channels not in (1, 3):
        raise ValueError(f"channels must be 1 or 3, got {channels}")


def build_classifier(
    num_classes: int, channels: int, width: int = 64, seed: int = 0, role: str = "classifier"
) -> ModelCheckpoint:
    _check_build_args(num_classes, channels)
    torch.manual_seed(seed)
    net = DigitClassifier(num_classes, channels, width)
    arch = {"kind": "classifier", "num_classes": num_classes, "channels": channels, "width": width}
    return ModelCheckpoint(role=role, net=net, arch=arch)


def build_generator(
    num_classes: int,
    channels: int,
    width: int = 256,
    latent: LatentSpec | int = LatentSpec(),
    seed: int = 0,
) -> ModelCheckpoint:
    _check_build_args(num_classes, channels)
    if isinstance(latent, int):
        latent = LatentSpec(latent)
    if width % 4:
        raise ValueError("generator width must be divisible by 4")
    torch.manual_seed(seed)
    net = ConditionalGenerator(num_classes, channels, width, latent.dim)
    net.apply(_dcgan_init)
    arch = {
        "kind": "generator",
        "num_classes": num_classes,
        "channels": channels,
        "width": width,
        "latent_dim": latent.dim,
    }
    return ModelCheckpoint(role="generator", net=net, arch=arch)


def build_discriminator(
    num_classes: int, channels: int, width: int = 64, seed: int = 0
) -> ModelCheckpoint:
    _check_build_args(num_classes, channels)
    torch.manual_seed(seed)
    net = ConditionalDiscriminator(num_classes, channels, width)
    net.apply(_dcgan_init)
    arch = {
        "kind": "discriminator",
        "num_classes": num_classes,
        "channels": channels,
        "width": width,
    }
    return ModelCheckpoint(role="discriminator", net=net, arch=arch)


# ---------------------------------------------------------------------------
# inference helpers
# ---------------------------------------------------------------------------

def predict_probs(ckpt: ModelCheckpoint, images: np.ndarray, batch_size: int = 512) -> np.ndarray:
    """Class probabilities for NHWC images, eval mode, no gradients."""
    if ckpt.role not in ("classifier", "oracle"):
        raise ValueError(f"need a classifier checkpoint, got role {ckpt.role!r}")
    if images.shape[3] != ckpt.arch["channels"]:
        raise ValueError(
            f"classifier expects {ckpt.arch['channels']}-channel images, got {images.shape[3]}"
        )
    ckpt.net.eval()
    out = []
    with torch.no_grad():
        for i in range(0, len(images), batch_size):
            x = to_torch_images(images[i : i + batch_size])
            out.append(ckpt.net(x).numpy())
    return np.concatenate(out, axis=0).astype(np.float64)


def generate(
    ckpt: ModelCheckpoint, z: np.ndarray, labels: np.ndarray, batch_size: int = 512
) -> np.ndarray:
    """Images in [-1, 1] NHWC for latent rows z and integer condition labels."""
    if ckpt.role != "generator":
        raise ValueError(f"need a generator checkpoint, got role {ckpt.role!r}")
    z = np.asarray(z, dtype=np.float32)
    labels = np.asarray(labels, dtype=np.int64)
    if z.ndim != 2 or z.shape[1] != ckpt.arch["latent_dim"]:
        raise ValueError(f"z must be N x {ckpt.arch['latent_dim']}")
    if labels.shape != (len(z),):
        raise ValueError("labels must be one integer per latent row")
    code = one_hot(labels, ckpt.arch["num_classes"])  # validates label range
    ckpt.net.eval()
    out = []
    with torch.no_grad():
        for i in range(0, len(z), batch_size):
            imgs = ckpt.net(torch.from_numpy(z[i : i + batch_size]), code[i : i + batch_size])
            out.append(to_numpy_images(imgs))
    return np.concatenate(out, axis=0)


# ---------------------------------------------------------------------------
# oracle
# ---------------------------------------------------------------------------

def build_oracle(
    train_data,
    test_data,
    threshold: float = 0.99,
    max_epochs: int = 40,
    lr: float = 3e-4,
    batch_size: int = 64,
    width: int = 64,
    seed: int = 0,
) -> ModelCheckpoint:
    """Train a held-out-domain classifier until test accuracy reaches the
    threshold; raises OracleThresholdError (with the best accuracy reached)
    if max_epochs is not enough."""
    from .training import run_classifier_epoch

    ckpt = build_classifier(
        train_data.num_classes, train_data.channels, width=width, seed=seed, role="oracle"
    )
    opt = torch.optim.Adam(ckpt.net.parameters(), lr=lr, betas=(0.5, 0.999))
    rng = np.random.default_rng(seed)
    best = 0.0
    for epoch in range(max_epochs):
        run_classifier_epoch(ckpt.net, opt, train_data.images, train_data.labels, batch_size, rng)
        ckpt.step += 1
        preds = np.argmax(predict_probs(ckpt, test_data.images), axis=1)
        acc = float(np.mean(preds == test_data.labels))
        best = max(best, acc)
        if acc >= threshold:
            return ckpt
    raise OracleThresholdError(
        f"oracle reached {best:.4f} test accuracy after {max_epochs} epochs, "
        f"needed {threshold:.4f}"
    )
