"""Dataset ingestion, preprocessing to 32x32 [-1, 1], and pseudo-labeling.

Datasets are plain numpy containers (NHWC). The registry knows the digit
benchmarks (mnist, svhn, usps, mnistm), the bundled scikit-learn handwritten
digits ("digits"), and two procedurally rendered font domains ("synsans",
"synserif") that need no files on disk and exhibit a genuine domain gap --
handy for offline end-to-end runs and tests.

File-based datasets live under a single `data_root` directory (argument,
else the PLR_DATA_ROOT environment variable, else ./data). Missing files
raise with the expected path and a pointer to scripts/fetch_data.py.
"""

from __future__ import annotations

import gzip
import os
from dataclasses import dataclass

import numpy as np
import torch

__all__ = [
    "LabeledDataset",
    "PseudoLabeledDataset",
    "DATASET_IDS",
    "NATIVE_CHANNELS",
    "load_dataset",
    "preprocess_images",
    "assign_pseudo_labels",
    "save_pseudo_labels",
    "load_pseudo_labels",
    "subsample",
]

IMAGE_SIZE = 32


def _check_images(images: np.ndarray):
    if images.ndim != 4:
        raise ValueError(f"images must be N x H x W x ch, got shape {images.shape}")
    n, h, w, ch = images.shape
    if h != IMAGE_SIZE or w != IMAGE_SIZE:
        raise ValueError(f"images must be {IMAGE_SIZE}x{IMAGE_SIZE}, got {h}x{w}")
    if ch not in (1, 3):
        raise ValueError(f"channel count must be 1 or 3, got {ch}")
    lo, hi = float(images.min()), float(images.max())
    if lo < -1.0 - 1e-6 or hi > 1.0 + 1e-6:
        raise ValueError(f"pixel values must lie in [-1, 1], got [{lo:.3f}, {hi:.3f}]")


@dataclass
class LabeledDataset:
    """Images in [-1, 1] with ground-truth labels."""

    images: np.ndarray  # (N, 32, 32, ch) float32
    labels: np.ndarray  # (N,) int64
    name: str
    split: str  # "train" | "test"
    num_classes: int = 10

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        _check_images(self.images)
        if self.labels.shape != (len(self.images),):
            raise ValueError("labels must be one integer per image")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError(f"labels out of range [0, {self.num_classes})")

    def __len__(self) -> int:
        return len(self.images)

    @property
    def channels(self) -> int:
        return self.images.shape[3]


@dataclass
class PseudoLabeledDataset:
    """Target images with inferred labels; true labels kept for evaluation only.

    Training code must never read `true_labels`; they exist so that the
    quality of the pseudo-labels can be measured afterwards.
    """

    images: np.ndarray
    pseudo_labels: np.ndarray
    true_labels: np.ndarray
    provenance: str
    name: str
    split: str
    num_classes: int = 10

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float32)
        self.pseudo_labels = np.asarray(self.pseudo_labels, dtype=np.int64)
        self.true_labels = np.asarray(self.true_labels, dtype=np.int64)
        _check_images(self.images)
        n = len(self.images)
        if self.pseudo_labels.shape != (n,) or self.true_labels.shape != (n,):
            raise ValueError("pseudo_labels and true_labels must be one integer per image")
        for arr in (self.pseudo_labels, self.true_labels):
            if len(arr) and (arr.min() < 0 or arr.max() >= self.num_classes):
                raise ValueError(f"labels out of range [0, {self.num_classes})")

    def __len__(self) -> int:
        return len(self.images)

    @property
    def channels(self) -> int:
        return self.images.shape[3]


# ---------------------------------------------------------------------------
# preprocessing
# ---------------------------------------------------------------------------

def preprocess_images(images: np.ndarray, channels: int) -> np.ndarray:
    """Resize to 32x32 (bilinear), scale to [-1, 1], harmonize channels.

    uint8 input is assumed to be raw 0..255 pixels and gets rescaled; float
    input must already be in [-1, 1] (the function is then idempotent).
    Grayscale is replicated to 3 channels when channels=3; color is reduced
    to luminance when channels=1.
    """
    images = np.asarray(images)
    if images.ndim == 3:
        images = images[..., None]
    if images.ndim != 4:
        raise ValueError(f"expected N x H x W [x ch] images, got shape {images.shape}")

    if images.dtype == np.uint8:
        x = images.astype(np.float32) / 127.5 - 1.0
    else:
        x = images.astype(np.float32)
        lo, hi = float(x.min()) if x.size else 0.0, float(x.max()) if x.size else 0.0
        if lo < -1.0 - 1e-6 or hi > 1.0 + 1e-6:
            raise ValueError(
                "float images must already be scaled to [-1, 1]; "
                f"got range [{lo:.3f}, {hi:.3f}] (pass uint8 for raw pixels)"
            )

    n, h, w, ch = x.shape
    if (h, w) != (IMAGE_SIZE, IMAGE_SIZE):
        t = torch.from_numpy(np.ascontiguousarray(x.transpose(0, 3, 1, 2)))
        t = torch.nn.functional.interpolate(
            t, size=(IMAGE_SIZE, IMAGE_SIZE), mode="bilinear", align_corners=False
        )
        x = t.numpy().transpose(0, 2, 3, 1)

    if ch == 1 and channels == 3:
        x = np.repeat(x, 3, axis=3)
    elif ch == 3 and channels == 1:
        x = (x @ np.array([0.299, 0.587, 0.114], dtype=np.float32))[..., None]
    elif ch != channels:
        raise ValueError(f"cannot convert {ch}-channel images to {channels} channels")

    return np.clip(x, -1.0, 1.0).astype(np.float32)


# ---------------------------------------------------------------------------
# file-based loaders
# ---------------------------------------------------------------------------

FETCH_HINT = "run scripts/fetch_data.py on a machine with network access"


def _require_file(path: str) -> str:
    if not os.path.exists(path):
        raise FileNotFoundError(f"dataset file not found: {path} ({FETCH_HINT})")
    return path


def _read_idx(path: str) -> np.ndarray:
    with gzip.open(path, "rb") as f:
        raw = f.read()
    magic = int.from_bytes(raw[2:3], "big")  # dtype byte; 0x08 = uint8
    ndim = raw[3]
    if magic != 0x08:
        raise ValueError(f"unsupported IDX dtype in {path}")
    dims = [int.from_bytes(raw[4 + 4 * i : 8 + 4 * i], "big") for i in range(ndim)]
    return np.frombuffer(raw, dtype=np.uint8, offset=4 + 4 * ndim).reshape(dims)


def _load_mnist(split: str, root: str):
    prefix = "train" if split == "train" else "t10k"
    images = _read_idx(_require_file(os.path.join(root, "mnist", f"{prefix}-images-idx3-ubyte.gz")))
    labels = _read_idx(_require_file(os.path.join(root, "mnist", f"{prefix}-labels-idx1-ubyte.gz")))
    return images, labels.astype(np.int64)


def _load_svhn(split: str, root: str):
    from scipy.io import loadmat

    mat = loadmat(_require_file(os.path.join(root, "svhn", f"{split}_32x32.mat")))
    images = np.transpose(mat["X"], (3, 0, 1, 2)).astype(np.uint8)
    labels = mat["y"].reshape(-1).astype(np.int64) % 10  # SVHN stores digit 0 as class 10
    return images, labels


def _load_usps(split: str, root: str):
    import h5py

    with h5py.File(_require_file(os.path.join(root, "usps", "usps.h5")), "r") as f:
        grp = f["train" if split == "train" else "test"]
        data = np.asarray(grp["data"], dtype=np.float32).reshape(-1, 16, 16)
        labels = np.asarray(grp["target"], dtype=np.int64)
    images = np.clip(data * 255.0, 0, 255).astype(np.uint8)
    return images, labels


def _load_mnistm(split: str, root: str):
    # Prebuilt archive only; building MNIST-M from BSDS patches is out of scope.
    path = _require_file(os.path.join(root, "mnistm", "mnistm.npz"))
    with np.load(path) as arc:
        return arc[f"{split}_images"].astype(np.uint8), arc[f"{split}_labels"].astype(np.int64)


def _load_sklearn_digits(split: str, root: str):
    from sklearn.datasets import load_digits

    bunch = load_digits()
    images = np.clip(bunch.images * (255.0 / 16.0), 0, 255).astype(np.uint8)
    labels = bunch.target.astype(np.int64)
    order = np.random.default_rng(0).permutation(len(labels))
    cut = int(0.8 * len(labels))
    idx = order[:cut] if split == "train" else order[cut:]
    return images[idx], labels[idx]


# ---------------------------------------------------------------------------
# procedural font domains
# ---------------------------------------------------------------------------

SYN_TRAIN_SIZE = 6000
SYN_TEST_SIZE = 1500

_SANS_FONTS = ("DejaVuSans.ttf", "DejaVuSans-Bold.ttf")
_SERIF_FONTS = ("DejaVuSerif.ttf", "DejaVuSerif-Bold.ttf", "DejaVuSerif-Italic.ttf")

_font_cache: dict = {}


def _get_font(name: str, size: int):
    from PIL import ImageFont
    import matplotlib

    key = (name, size)
    if key not in _font_cache:
        path = os.path.join(
            os.path.dirname(matplotlib.__file__), "mpl-data", "fonts", "ttf", name
        )
        _font_cache[key] = ImageFont.truetype(path, size)
    return _font_cache[key]


def _render_digit(digit, font_name, size, angle, dx, dy, fg, bg, noise_sigma, blur, rng):
    from PIL import Image, ImageDraw, ImageFilter

    img = Image.new("L", (48, 48), 0)
    draw = ImageDraw.Draw(img)
    font = _get_font(font_name, size)
    left, top, right, bottom = draw.textbbox((0, 0), str(digit), font=font)
    draw.text(
        (24 - (right - left) / 2 - left, 24 - (bottom - top) / 2 - top),
        str(digit),
        font=font,
        fill=255,
    )
    img = img.rotate(angle, resample=Image.BILINEAR)
    if blur > 0:
        img = img.filter(ImageFilter.GaussianBlur(blur))
    img = img.crop((8 - dx, 8 - dy, 40 - dx, 40 - dy))
    mask = np.asarray(img, dtype=np.float32) / 255.0
    out = bg + (fg - bg) * mask
    out = out + rng.normal(0.0, noise_sigma, out.shape).astype(np.float32)
    return np.clip(out, 0, 255).astype(np.uint8)


def _render_domain(kind: str, n: int, seed: int):
    rng = np.random.default_rng(seed)
    images = np.empty((n, IMAGE_SIZE, IMAGE_SIZE), np.uint8)
    labels = rng.integers(0, 10, n)
    for i, y in enumerate(labels):
        if kind == "sans":
            images[i] = _render_digit(
                y,
                _SANS_FONTS[rng.integers(len(_SANS_FONTS))],
                int(rng.integers(20, 27)),
                float(rng.uniform(-8, 8)),
                int(rng.integers(-2, 3)),
                int(rng.integers(-2, 3)),
                float(rng.uniform(200, 255)),
                float(rng.uniform(0, 30)),
                8.0,
                0.0,
                rng,
            )
        else:
            images[i] = _render_digit(
                y,
                _SERIF_FONTS[rng.integers(len(_SERIF_FONTS))],
                int(rng.integers(17, 29)),
                float(rng.uniform(-25, 25)),
                int(rng.integers(-3, 4)),
                int(rng.integers(-3, 4)),
                float(rng.uniform(140, 255)),
                float(rng.uniform(0, 70)),
                18.0,
                float(rng.uniform(0, 1.0)),
                rng,
            )
    return images, labels


def _load_syn(kind: str, split: str):
    n = SYN_TRAIN_SIZE if split == "train" else SYN_TEST_SIZE
    # disjoint deterministic seeds per (domain, split)
    seed = {"sans": 11, "serif": 23}[kind] * 1000 + (0 if split == "train" else 1)
    return _render_domain(kind, n, seed)


# ---------------------------------------------------------------------------
# registry
# ---------------------------------------------------------------------------

_LOADERS = {
    "mnist": _load_mnist,
    "svhn": _load_svhn,
    "usps": _load_usps,
    "mnistm": _load_mnistm,
    "digits": _load_sklearn_digits,
    "synsans": lambda split, root: _load_syn("sans", split),
    "synserif": lambda split, root: _load_syn("serif", split),
}

DATASET_IDS = tuple(sorted(_LOADERS))

NATIVE_CHANNELS = {
    "mnist": 1,
    "svhn": 3,
    "usps": 1,
    "mnistm": 3,
    "digits": 1,
    "synsans": 1,
    "synserif": 1,
}

_raw_cache: dict = {}


def resolve_data_root(data_root: str | None = None) -> str:
    # the environment variable deliberately wins over configured paths
    return os.environ.get("PLR_DATA_ROOT") or data_root or "data"


def load_dataset(
    name: str, split: str, channels: int, data_root: str | None = None
) -> LabeledDataset:
    """Load a registered dataset, preprocessed to 32x32 [-1, 1] NHWC."""
    if name not in _LOADERS:
        raise ValueError(f"unknown dataset {name!r}; known: {', '.join(DATASET_IDS)}")
    if split not in ("train", "test"):
        raise ValueError(f"split must be 'train' or 'test', got {split!r}")
    if channels not in (1, 3):
        raise ValueError(f"channels must be 1 or 3, got {channels}")

    root = resolve_data_root(data_root)
    key = (name, split, root)
    if key not in _raw_cache:
        _raw_cache[key] = _LOADERS[name](split, root)
    raw_images, labels = _raw_cache[key]
    images = preprocess_images(raw_images, channels)
    return LabeledDataset(images=images, labels=labels.copy(), name=name, split=split)


def subsample(data: LabeledDataset, n: int, seed: int = 0) -> LabeledDataset:
    """Random subset of n samples (no-op when n >= len or n <= 0)."""
    if n <= 0 or n >= len(data):
        return data
    idx = np.random.default_rng(seed).choice(len(data), size=n, replace=False)
    return LabeledDataset(
        images=data.images[idx],
        labels=data.labels[idx],
        name=data.name,
        split=data.split,
        num_classes=data.num_classes,
    )


# ---------------------------------------------------------------------------
# pseudo-labeling
# ---------------------------------------------------------------------------

def assign_pseudo_labels(classifier, data: LabeledDataset) -> PseudoLabeledDataset:
    """Label `data` with the classifier's argmax predictions.

    Pure function of (checkpoint, images); argmax ties break to the lowest
    class index. The ground-truth labels ride along in `true_labels` for
    evaluation only.
    """
    from .models import predict_probs

    probs = predict_probs(classifier, data.images)
    if probs.shape[1] != data.num_classes:
        raise ValueError(
            f"classifier emits {probs.shape[1]} classes, dataset has {data.num_classes}"
        )
    pseudo = np.argmax(probs, axis=1).astype(np.int64)
    return PseudoLabeledDataset(
        images=data.images,
        pseudo_labels=pseudo,
        true_labels=data.labels,
        provenance=classifier.ident,
        name=data.name,
        split=data.split,
        num_classes=data.num_classes,
    )


def save_pseudo_labels(dataset: PseudoLabeledDataset, path: str):
    """Sidecar text file: header 'provenance=<id>', one label per line."""
    with open(path, "w") as f:
        f.write(f"provenance={dataset.provenance}\n")
        for y in dataset.pseudo_labels:
            f.write(f"{int(y)}\n")


def load_pseudo_labels(path: str) -> tuple[str, np.ndarray]:
    with open(path) as f:
        header = f.readline().strip()
        if not header.startswith("provenance="):
            raise ValueError(f"{path}: expected 'provenance=<id>' header")
        labels = np.array([int(line) for line in f if line.strip()], dtype=np.int64)
    return header[len("provenance="):], labels
