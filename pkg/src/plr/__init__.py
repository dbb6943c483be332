"""Pseudo-label refinement for unsupervised domain adaptation on digits.

A source-trained classifier pseudo-labels the unlabeled target domain; that
structured "shift noise" is measured (accuracy and confusion asymmetry), a
conditional GAN is pretrained on the noisy pairs, and an alternating loop
then refines classifier and GAN against each other using only target data.
"""

from .config import ExperimentConfig
from .data import (
    DATASET_IDS,
    LabeledDataset,
    PseudoLabeledDataset,
    assign_pseudo_labels,
    load_dataset,
    preprocess_images,
)
from .evaluation import EvalReport, evaluate_classifier, gan_test, gan_train
from .models import (
    LatentSpec,
    ModelCheckpoint,
    build_classifier,
    build_discriminator,
    build_generator,
    build_oracle,
    load_checkpoint,
)
from .noise import (
    ConfusionMatrix,
    NoiseSpec,
    accuracy_from_noise,
    asymmetry,
    build_confusion_matrix,
    inject_uniform_noise,
    uniform_noise_equivalent,
)
from .objectives import GAN_OBJECTIVES, LossPair, classification_loss, gan_loss
from .pipeline import STAGES, StageError, full_pipeline, run_stage
from .training import (
    MetricsLog,
    TrainState,
    TrainingDiverged,
    plr_train,
    pretrain_cgan,
    pretrain_source,
)

__version__ = "0.1.0"
