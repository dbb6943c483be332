"""Training procedures: source pretraining, cGAN pretraining, and the
alternating refinement loop.

The refinement loop interleaves, per iteration, one classifier step on
generated samples with uniformly drawn condition codes, then one
discriminator step and one generator step on a real target batch whose
labels are inferred by the live classifier at that iteration. Optimizers
are adaptive-moment (Adam, betas 0.5/0.999) for every stage.

All randomness flows through numpy Generator streams derived from the seed;
torch's global RNG is touched only inside the model builders, so reruns with
one config reproduce metrics bit-identically on a fixed platform.
"""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass, field

import numpy as np
import torch

from .data import LabeledDataset, PseudoLabeledDataset
from .models import (
    ModelCheckpoint,
    build_classifier,
    generate,
    one_hot,
    predict_probs,
    to_torch_images,
)
from .noise import asymmetry, build_confusion_matrix
from .objectives import classification_loss, gan_loss

__all__ = [
    "TrainState",
    "MetricsLog",
    "TrainingDiverged",
    "pretrain_source",
    "pretrain_cgan",
    "plr_train",
    "run_classifier_epoch",
]

ADAM_BETAS = (0.5, 0.999)

# sub-stream tags so stages with the same seed draw independent randomness
_STREAM_SOURCE = 1
_STREAM_CGAN = 2
_STREAM_PLR = 3
_STREAM_PLR_EVAL = 4


class TrainingDiverged(RuntimeError):
    """A loss went non-finite; models still hold the last finite state."""

    def __init__(self, message: str, metrics: "MetricsLog | None" = None):
        super().__init__(message)
        self.metrics = metrics


@dataclass
class TrainState:
    """The three nets plus step sizes for the refinement loop."""

    classifier: ModelCheckpoint
    generator: ModelCheckpoint
    discriminator: ModelCheckpoint
    step: int = 0
    eta: float = 1e-5  # classifier step size
    delta: float = 5e-5  # generator/discriminator step size
    rng_seed: int = 0

    def __post_init__(self):
        if self.eta <= 0 or self.delta <= 0:
            raise ValueError("step sizes eta and delta must be > 0")


@dataclass
class MetricsLog:
    """Evaluation rows appended during refinement; serializes to CSV."""

    HEADER = "step,test_acc,delta_A,loss_C,loss_D,loss_G"

    rows: list = field(default_factory=list)

    def append(self, step, test_acc, delta_A, loss_C, loss_D, loss_G):
        self.rows.append(
            (int(step), float(test_acc), float(delta_A), float(loss_C), float(loss_D), float(loss_G))
        )

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def steps(self) -> np.ndarray:
        return np.array([r[0] for r in self.rows], dtype=np.int64)

    @property
    def test_acc(self) -> np.ndarray:
        return np.array([r[1] for r in self.rows], dtype=np.float64)

    def to_csv(self) -> str:
        lines = [self.HEADER]
        for step, *vals in self.rows:
            lines.append(f"{step}," + ",".join(f"{v:.6f}" for v in vals))
        return "\n".join(lines) + "\n"

    def save(self, path: str):
        with open(path, "w") as f:
            f.write(self.to_csv())

    @classmethod
    def load(cls, path: str) -> "MetricsLog":
        log = cls()
        with open(path) as f:
            header = f.readline().strip()
            if header != cls.HEADER:
                raise ValueError(f"{path}: unexpected metrics header {header!r}")
            for line in f:
                if line.strip():
                    step, *vals = line.split(",")
                    log.append(int(step), *(float(v) for v in vals))
        return log


def _check_finite(loss: torch.Tensor, what: str, metrics: MetricsLog | None = None):
    if not torch.isfinite(loss):
        raise TrainingDiverged(f"{what} became non-finite ({float(loss.detach())})", metrics)


# ---------------------------------------------------------------------------
# supervised stages
# ---------------------------------------------------------------------------

def run_classifier_epoch(net, opt, images, labels, batch_size, rng) -> float:
    """One shuffled pass; returns the mean batch loss. Divergence aborts
    before the optimizer step, so parameters keep their last finite values."""
    net.train()
    order = rng.permutation(len(images))
    losses = []
    for i in range(0, len(order), batch_size):
        idx = order[i : i + batch_size]
        probs = net(to_torch_images(images[idx]))
        loss = classification_loss(probs, labels[idx])
        _check_finite(loss, "classifier loss")
        opt.zero_grad()
        loss.backward()
        opt.step()
        losses.append(float(loss.detach()))
    return float(np.mean(losses)) if losses else 0.0


def pretrain_source(
    data: LabeledDataset,
    epochs: int,
    lr: float = 3e-4,
    batch_size: int = 64,
    width: int = 64,
    seed: int = 0,
) -> ModelCheckpoint:
    """Supervised training on the labeled source split."""
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    ckpt = build_classifier(data.num_classes, data.channels, width=width, seed=seed)
    opt = torch.optim.Adam(ckpt.net.parameters(), lr=lr, betas=ADAM_BETAS)
    rng = np.random.default_rng([seed, _STREAM_SOURCE])
    for _ in range(epochs):
        run_classifier_epoch(ckpt.net, opt, data.images, data.labels, batch_size, rng)
        ckpt.step += int(np.ceil(len(data) / batch_size))
    ckpt.net.eval()
    return ckpt


# ---------------------------------------------------------------------------
# adversarial stages
# ---------------------------------------------------------------------------

def _gan_iteration(gen, disc, opt_g, opt_d, x, code, z, objective, hook=None):
    """One D step then one G step on a conditioned batch; returns losses.

    The generator forward runs once; the D step sees it detached, the G step
    reuses the same samples against the just-updated discriminator.
    """
    gen.train()
    disc.train()
    fake = gen(torch.from_numpy(z), code)

    d_real = disc(x, code)
    d_fake = disc(fake.detach(), code)
    d_loss = gan_loss(objective, d_real, d_fake).d_loss
    _check_finite(d_loss, "discriminator loss")
    opt_d.zero_grad()
    d_loss.backward()
    opt_d.step()
    if hook:
        hook("D")

    g_loss = gan_loss(objective, d_real.detach(), disc(fake, code)).g_loss
    _check_finite(g_loss, "generator loss")
    opt_g.zero_grad()
    g_loss.backward()
    opt_g.step()
    if hook:
        hook("G")
    return float(d_loss.detach()), float(g_loss.detach())


def pretrain_cgan(
    generator: ModelCheckpoint,
    discriminator: ModelCheckpoint,
    data: PseudoLabeledDataset,
    iterations: int,
    lr: float = 1e-5,
    objective: str = "cross_entropy",
    batch_size: int = 64,
    seed: int = 0,
    probe_classifier: ModelCheckpoint | None = None,
) -> tuple[ModelCheckpoint, ModelCheckpoint]:
    """Alternating single-step adversarial training on (image, pseudo-label)
    pairs; the pseudo-labels stay frozen for the whole run.

    If a probe classifier is supplied, a post-training sample batch is
    checked for mode collapse (generated classes concentrated on fewer than
    3 of the label codes) and a warning is issued, never an abort.
    """
    c = data.num_classes
    if generator.arch["num_classes"] != c or discriminator.arch["num_classes"] != c:
        raise ValueError("generator/discriminator class count must match the dataset")
    if generator.arch["channels"] != data.channels:
        raise ValueError("generator channel count must match the dataset")
    opt_g = torch.optim.Adam(generator.net.parameters(), lr=lr, betas=ADAM_BETAS)
    opt_d = torch.optim.Adam(discriminator.net.parameters(), lr=lr, betas=ADAM_BETAS)
    rng = np.random.default_rng([seed, _STREAM_CGAN])
    dim = generator.arch["latent_dim"]
    n = len(data)

    for _ in range(iterations):
        idx = rng.integers(0, n, batch_size)
        x = to_torch_images(data.images[idx])
        code = one_hot(data.pseudo_labels[idx], c)
        z = rng.standard_normal((batch_size, dim)).astype(np.float32)
        _gan_iteration(generator.net, discriminator.net, opt_g, opt_d, x, code, z, objective)
        generator.step += 1
        discriminator.step += 1

    generator.net.eval()
    discriminator.net.eval()

    if probe_classifier is not None:
        probe_rng = np.random.default_rng([seed, _STREAM_CGAN, 99])
        codes = probe_rng.integers(0, c, 1000)
        z = probe_rng.standard_normal((1000, dim)).astype(np.float32)
        preds = np.argmax(predict_probs(probe_classifier, generate(generator, z, codes)), axis=1)
        per_class = [np.mean(preds[codes == k] == k) if np.any(codes == k) else 0.0 for k in range(c)]
        if np.sum(np.asarray(per_class) > 1.0 / c) < 3:
            warnings.warn(
                "possible mode collapse: generated samples match fewer than 3 label codes",
                RuntimeWarning,
                stacklevel=2,
            )
    return generator, discriminator


# ---------------------------------------------------------------------------
# the refinement loop
# ---------------------------------------------------------------------------

def plr_train(
    state: TrainState,
    target: PseudoLabeledDataset,
    iterations: int,
    eval_every: int,
    eval_data: LabeledDataset,
    objective: str = "cross_entropy",
    batch_size: int = 64,
    checkpoint_dir: str | None = None,
    update_hook=None,
) -> tuple[TrainState, MetricsLog]:
    """Alternating refinement over the unlabeled target set.

    Per iteration: (1) one classifier gradient step on generator samples
    conditioned on uniformly drawn codes; (2) the current classifier labels a
    real target batch, then one discriminator step and one generator step run
    on it. The stored pseudo-labels of `target` are ignored here: labels are
    re-inferred from the live classifier every iteration.

    Source data never enters this loop. Each eval_every iterations (and at
    step 0) a row (step, test accuracy, confusion asymmetry, last losses) is
    appended to the MetricsLog; checkpoints are written to checkpoint_dir if
    given. Non-finite losses raise TrainingDiverged carrying the partial log,
    with all nets still at their last finite parameters.
    """
    if eval_every <= 0:
        raise ValueError("eval_every must be >= 1")
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    c = target.num_classes
    C, G, D = state.classifier, state.generator, state.discriminator
    for ckpt in (C, G, D):
        if ckpt.arch["num_classes"] != c:
            raise ValueError("model class counts must match the target dataset")
    if C.arch["channels"] != target.channels or G.arch["channels"] != target.channels:
        raise ValueError("model channel counts must match the target dataset")

    opt_c = torch.optim.Adam(C.net.parameters(), lr=state.eta, betas=ADAM_BETAS)
    opt_g = torch.optim.Adam(G.net.parameters(), lr=state.delta, betas=ADAM_BETAS)
    opt_d = torch.optim.Adam(D.net.parameters(), lr=state.delta, betas=ADAM_BETAS)
    train_rng = np.random.default_rng([state.rng_seed, _STREAM_PLR])
    eval_rng = np.random.default_rng([state.rng_seed, _STREAM_PLR_EVAL])
    dim = G.arch["latent_dim"]
    n = len(target)
    log = MetricsLog()

    def infer_live_labels(x: torch.Tensor) -> np.ndarray:
        C.net.eval()
        with torch.no_grad():
            return C.net(x).argmax(dim=1).numpy()

    def evaluate(loss_c, loss_d, loss_g):
        preds = np.argmax(predict_probs(C, eval_data.images), axis=1)
        matrix = build_confusion_matrix(eval_data.labels, preds, c)
        log.append(state.step, matrix.accuracy(), asymmetry(matrix), loss_c, loss_d, loss_g)
        for ckpt in (C, G, D):
            ckpt.step = state.step
            if checkpoint_dir:
                ckpt.save(os.path.join(checkpoint_dir, ckpt.filename))

    def probe_losses():
        # step-0 log row: same quantities the loop optimizes, no updates
        with torch.no_grad():
            z = eval_rng.standard_normal((batch_size, dim)).astype(np.float32)
            y = eval_rng.integers(0, c, batch_size)
            G.net.eval()
            fake = G.net(torch.from_numpy(z), one_hot(y, c))
            C.net.eval()
            loss_c = float(classification_loss(C.net(fake), y))

            idx = eval_rng.integers(0, n, batch_size)
            x = to_torch_images(target.images[idx])
            code = one_hot(infer_live_labels(x), c)
            z2 = eval_rng.standard_normal((batch_size, dim)).astype(np.float32)
            D.net.eval()
            fake2 = G.net(torch.from_numpy(z2), code)
            pair = gan_loss(objective, D.net(x, code), D.net(fake2, code))
        return loss_c, float(pair.d_loss), float(pair.g_loss)

    evaluate(*probe_losses())

    try:
        for _ in range(iterations):
            # step 1: classifier learns from the generator
            z = train_rng.standard_normal((batch_size, dim)).astype(np.float32)
            y = train_rng.integers(0, c, batch_size)
            G.net.eval()
            with torch.no_grad():
                fake = G.net(torch.from_numpy(z), one_hot(y, c))
            C.net.train()
            loss_c = classification_loss(C.net(fake), y)
            _check_finite(loss_c, "classifier loss", log)
            opt_c.zero_grad()
            loss_c.backward()
            opt_c.step()
            if update_hook:
                update_hook("C")

            # step 2: adversarial step on real data labeled by the live classifier
            idx = train_rng.integers(0, n, batch_size)
            x = to_torch_images(target.images[idx])
            code = one_hot(infer_live_labels(x), c)
            z2 = train_rng.standard_normal((batch_size, dim)).astype(np.float32)
            loss_d, loss_g = _gan_iteration(
                G.net, D.net, opt_g, opt_d, x, code, z2, objective, hook=update_hook
            )

            state.step += 1
            if state.step % eval_every == 0:
                evaluate(float(loss_c.detach()), loss_d, loss_g)
    except TrainingDiverged as exc:
        raise TrainingDiverged(str(exc), log) from None

    for ckpt in (C, G, D):
        ckpt.net.eval()
    return state, log
