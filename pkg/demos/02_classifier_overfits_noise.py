"""A classifier trained on structured noise memorizes the structure.

Takes the serif-domain pseudo-labels from a sans-trained classifier, trains
a fresh classifier on them, and measures what it learned against the true
labels. Repeats with uniform noise at the same accuracy. The shift-trained
model reproduces the asymmetric error pattern of its labels; the
uniform-trained model ends up with nearly symmetric errors, and can even
exceed the accuracy of its own training labels because unstructured noise
partially averages out.
"""

import numpy as np

from plr.data import LabeledDataset, assign_pseudo_labels, load_dataset
from plr.models import predict_probs
from plr.noise import (
    NoiseSpec,
    asymmetry,
    build_confusion_matrix,
    inject_uniform_noise,
    uniform_noise_equivalent,
)
from plr.training import pretrain_source

EPOCHS = 6
WIDTH = 16

src_train = load_dataset("synsans", "train", channels=1)
tgt_train = load_dataset("synserif", "train", channels=1)

source_clf = pretrain_source(src_train, epochs=EPOCHS, width=WIDTH)
pseudo = assign_pseudo_labels(source_clf, tgt_train)
m_input = build_confusion_matrix(tgt_train.labels, pseudo.pseudo_labels, 10)
print(f"input shift noise: a={m_input.accuracy():.4f} delta_A={asymmetry(m_input):.4f}")


def train_and_probe(labels: np.ndarray, tag: str, seed: int):
    """Train on (images, labels), report train-split stats against truth."""
    view = LabeledDataset(
        images=tgt_train.images, labels=labels,
        name=tgt_train.name, split=tgt_train.split,
    )
    clf = pretrain_source(view, epochs=EPOCHS, width=WIDTH, seed=seed)
    preds = np.argmax(predict_probs(clf, tgt_train.images), axis=1)
    m = build_confusion_matrix(tgt_train.labels, preds, 10)
    print(f"{tag}: a={m.accuracy():.4f} delta_A={asymmetry(m):.4f}")
    return m


# ---------------------------------------------------------------------------
# train on the shift-noisy labels: the structure survives training
# ---------------------------------------------------------------------------
m_shift = train_and_probe(pseudo.pseudo_labels, "trained on shift noise  ", seed=1)

# ---------------------------------------------------------------------------
# train on uniform noise at the same accuracy: the structure does not appear
# ---------------------------------------------------------------------------
n_eq = uniform_noise_equivalent(m_input.accuracy(), 10)
uniform_labels = inject_uniform_noise(tgt_train.labels, NoiseSpec(n_eq, 10, seed=2))
m_unif = train_and_probe(uniform_labels, "trained on uniform noise", seed=3)

print(
    f"\ndelta_A input {asymmetry(m_input):.3f} -> "
    f"shift-trained {asymmetry(m_shift):.3f}, uniform-trained {asymmetry(m_unif):.3f}"
)
print("the classifier inherits exactly the kind of noise it was fed")
