"""What pseudo-labels look like when the classifier crossed a domain gap.

Trains a digit classifier on a procedurally rendered sans-serif domain,
pseudo-labels a serif domain with heavier rotation and noise, and compares
the resulting confusion structure against uniform noise at the same accuracy
level. No downloads needed; a few minutes on CPU.
"""

from plr.data import assign_pseudo_labels, load_dataset
from plr.evaluation import evaluate_classifier
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

# ---------------------------------------------------------------------------
# source training: sans-serif digits, nearly separable
# ---------------------------------------------------------------------------
src_train = load_dataset("synsans", "train", channels=1)
src_test = load_dataset("synsans", "test", channels=1)
tgt_train = load_dataset("synserif", "train", channels=1)

clf = pretrain_source(src_train, epochs=EPOCHS, width=WIDTH)
print(f"source test accuracy: {evaluate_classifier(clf, src_test).accuracy:.4f}")

# ---------------------------------------------------------------------------
# cross the gap: pseudo-label the serif domain
# ---------------------------------------------------------------------------
pseudo = assign_pseudo_labels(clf, tgt_train)
m_shift = build_confusion_matrix(tgt_train.labels, pseudo.pseudo_labels, 10)
a = m_shift.accuracy()
da_shift = asymmetry(m_shift)

print(f"\npseudo-label accuracy on the serif domain: {a:.4f}")
print(f"asymmetry delta_A of the shift noise:      {da_shift:.4f}")
print("\nshift-noise confusion matrix (rows = true, cols = predicted):")
print(m_shift.to_text())

# ---------------------------------------------------------------------------
# the control: uniform noise tuned to the same accuracy
# ---------------------------------------------------------------------------
n_eq = uniform_noise_equivalent(a, 10)
noisy = inject_uniform_noise(tgt_train.labels, NoiseSpec(n_eq, 10, seed=0))
m_unif = build_confusion_matrix(tgt_train.labels, noisy, 10)

print(f"equivalent uniform fraction n = {n_eq:.4f}")
print(f"uniform-noise accuracy:  {m_unif.accuracy():.4f} (matches by construction)")
print(f"uniform-noise delta_A:   {asymmetry(m_unif):.4f}")
print("\nuniform-noise confusion matrix:")
print(m_unif.to_text())

# Same label accuracy, completely different structure: the shift matrix
# concentrates errors in a few asymmetric class pairs, the uniform one
# spreads them evenly. delta_A is the one-number summary of that difference.
ratio = da_shift / max(asymmetry(m_unif), 1e-9)
print(f"shift noise is {ratio:.0f}x more asymmetric than uniform at equal accuracy")
