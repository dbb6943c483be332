"""Experiment configuration: flat key=value files, canonical hashing.

A config is one text file, one `key=value` per line, `#` comments allowed.
The canonical serialization (sorted keys) feeds a sha256 whose first 12 hex
characters become the config hash embedded in every artifact. `out_dir` and
`data_root` are environment bindings, not experiment identity, so they are
excluded from the hash: moving a run or its data never orphans artifacts.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass

from .objectives import GAN_OBJECTIVES

__all__ = ["ExperimentConfig", "LABEL_SOURCES"]

LABEL_SOURCES = ("pseudo", "clean", "uniform")

# paths bound to the machine, not to the experiment
_ENV_KEYS = frozenset({"out_dir", "data_root"})


@dataclass
class ExperimentConfig:
    source: str = "usps"
    target: str = "mnist"
    classes: int = 10
    channels: int = 0  # 0 resolves to the target's native channel count
    gan_objective: str = "cross_entropy"
    latent_dim: int = 100

    eta: float = 1e-5
    delta: float = 5e-5
    pretrain_lr_source: float = 3e-4
    pretrain_lr_gan: float = 1e-5
    batch_size: int = 64

    source_epochs: int = 10
    cgan_iters: int = 20000
    plr_iters: int = 10000
    eval_every: int = 200

    width_classifier: int = 64
    width_generator: int = 256
    width_discriminator: int = 64

    # label stream for cGAN pretraining: classifier pseudo-labels, ground
    # truth, or ground truth with injected uniform noise
    labels: str = "pseudo"
    noise_fraction: float = 0.0

    oracle_threshold: float = 0.99
    oracle_epochs: int = 40
    gan_test_samples: int = 0  # 0: size of the target train split
    gan_train_budget: int = 0  # 0: match the source pretraining step count
    max_train_samples: int = 0  # 0: use full train splits

    seed: int = 0
    data_root: str = ""
    out_dir: str = "runs/default"

    def __post_init__(self):
        for key in ("eta", "delta", "pretrain_lr_source", "pretrain_lr_gan"):
            if getattr(self, key) <= 0:
                raise ValueError(f"{key} must be > 0")
        for key in ("source_epochs", "cgan_iters", "plr_iters", "eval_every", "batch_size"):
            if getattr(self, key) < 1:
                raise ValueError(f"{key} must be >= 1")
        if self.classes < 2:
            raise ValueError("classes must be >= 2")
        if self.channels not in (0, 1, 3):
            raise ValueError("channels must be 1 or 3 (0 to use the target's native count)")
        if self.gan_objective not in GAN_OBJECTIVES:
            raise ValueError(f"gan_objective must be one of {GAN_OBJECTIVES}")
        if self.labels not in LABEL_SOURCES:
            raise ValueError(f"labels must be one of {LABEL_SOURCES}")
        if not 0.0 <= self.noise_fraction <= 1.0:
            raise ValueError("noise_fraction must lie in [0, 1]")
        if self.latent_dim < 1:
            raise ValueError("latent_dim must be >= 1")

    # -- serialization ------------------------------------------------------

    def to_text(self, include_env: bool = True) -> str:
        lines = []
        for f in sorted(dataclasses.fields(self), key=lambda f: f.name):
            if not include_env and f.name in _ENV_KEYS:
                continue
            value = getattr(self, f.name)
            text = repr(value) if isinstance(value, float) else str(value)
            lines.append(f"{f.name}={text}")
        return "\n".join(lines) + "\n"

    def save(self, path: str):
        with open(path, "w") as f:
            f.write(self.to_text())

    @classmethod
    def from_text(cls, text: str, overrides: dict | None = None) -> "ExperimentConfig":
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        values: dict = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if not sep:
                raise ValueError(f"line {lineno}: expected key=value, got {raw!r}")
            if key not in types:
                raise ValueError(f"line {lineno}: unknown config key {key!r}")
            if key in values:
                raise ValueError(f"line {lineno}: duplicate config key {key!r}")
            values[key] = value
        if overrides:
            values.update({k: str(v) for k, v in overrides.items()})
        kwargs = {}
        for key, value in values.items():
            kind = types[key]
            if kind in (int, "int"):
                kwargs[key] = int(value)
            elif kind in (float, "float"):
                kwargs[key] = float(value)
            else:
                kwargs[key] = value
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: str, overrides: dict | None = None) -> "ExperimentConfig":
        with open(path) as f:
            return cls.from_text(f.read(), overrides)

    @property
    def hash(self) -> str:
        canonical = self.to_text(include_env=False)
        return hashlib.sha256(canonical.encode()).hexdigest()[:12]

    def replace(self, **kwargs) -> "ExperimentConfig":
        return dataclasses.replace(self, **kwargs)
