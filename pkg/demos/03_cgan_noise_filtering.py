"""Condition a small GAN on noisy labels and measure what it generates.

Pretrains a conditional generator/discriminator pair on the serif domain
using pseudo-labels from a sans-trained classifier, then asks an oracle
classifier (trained on clean serif data, used for measurement only) how
often generated images match their condition codes. At this desk scale the
generator is coarse, so expect conditioning well above chance but below the
input label accuracy; at full budget (20k iterations, width 256) the
generated labels come out cleaner than the inputs. A sample grid is written
so you can eyeball what the oracle is scoring.
"""

import os

from plr.data import assign_pseudo_labels, load_dataset
from plr.evaluation import gan_test
from plr.models import build_discriminator, build_generator, build_oracle
from plr.noise import asymmetry, build_confusion_matrix
from plr.plotting import sample_grid
from plr.training import pretrain_cgan, pretrain_source

ITERS = 2000
GAN_LR = 2e-4  # desk-scale rate; the full-budget default 1e-5 needs ~20k iters
OUT = "runs/demo_cgan"

src_train = load_dataset("synsans", "train", channels=1)
tgt_train = load_dataset("synserif", "train", channels=1)
tgt_test = load_dataset("synserif", "test", channels=1)

# ---------------------------------------------------------------------------
# pseudo-label the target and record the input noise level
# ---------------------------------------------------------------------------
clf = pretrain_source(src_train, epochs=6, width=16)
pseudo = assign_pseudo_labels(clf, tgt_train)
m_in = build_confusion_matrix(tgt_train.labels, pseudo.pseudo_labels, 10)
print(f"input labels: a={m_in.accuracy():.4f} delta_A={asymmetry(m_in):.4f}")

# ---------------------------------------------------------------------------
# adversarial pretraining on (image, pseudo-label) pairs
# ---------------------------------------------------------------------------
gen = build_generator(10, 1, width=64, seed=0)
disc = build_discriminator(10, 1, width=16, seed=0)
gen, disc = pretrain_cgan(
    gen, disc, pseudo, iterations=ITERS, lr=GAN_LR, probe_classifier=clf
)

# ---------------------------------------------------------------------------
# oracle measurement: GAN-test
# ---------------------------------------------------------------------------
oracle = build_oracle(tgt_train, tgt_test, threshold=0.90, max_epochs=25, width=16)
report = gan_test(oracle, gen, n_samples=2000, seed=0)
print(f"gan-test:    a={report.accuracy:.4f} delta_A={report.delta_A:.4f}")
print(f"(chance would be 0.10; input labels were {m_in.accuracy():.4f})")

os.makedirs(OUT, exist_ok=True)
grid_path = os.path.join(OUT, "samples.png")
sample_grid(gen, grid_path, seed=0)
print(f"sample grid (one row per condition code): {grid_path}")
