"""Stage orchestration: artifacts, prerequisites, and the full pipeline.

Each stage reads its prerequisites from earlier stages' directories under
`out_dir`, writes its own artifacts tagged with the config hash, and appends
one line to `manifest.jsonl`. A missing prerequisite raises StageError naming
the artifact and the stage that produces it. `evaluate` additionally refuses
checkpoints whose config hash differs from the current config.
"""

from __future__ import annotations

import glob
import json
import math
import os
import time

import numpy as np

from .config import ExperimentConfig
from .data import (
    NATIVE_CHANNELS,
    LabeledDataset,
    PseudoLabeledDataset,
    assign_pseudo_labels,
    load_dataset,
    load_pseudo_labels,
    save_pseudo_labels,
    subsample,
)
from .evaluation import EvalReport, evaluate_classifier, gan_test, gan_train
from .models import (
    LatentSpec,
    ModelCheckpoint,
    build_discriminator,
    build_generator,
    build_oracle,
    load_checkpoint,
)
from .noise import NoiseSpec, asymmetry, build_confusion_matrix, inject_uniform_noise, uniform_noise_equivalent
from .plotting import plot_accuracy, sample_grid
from .training import TrainState, plr_train, pretrain_cgan, pretrain_source

__all__ = ["STAGES", "StageError", "run_stage", "full_pipeline", "stage_dir"]

STAGES = (
    "pretrain-source",
    "infer-pseudolabels",
    "analyze-noise",
    "inject-noise",
    "pretrain-cgan",
    "plr-train",
    "evaluate",
    "gan-test",
    "gan-train",
    "plot",
    "samples",
)

PIPELINE_ORDER = (
    "pretrain-source",
    "infer-pseudolabels",
    "analyze-noise",
    "pretrain-cgan",
    "plr-train",
    "evaluate",
)


class StageError(RuntimeError):
    """A stage cannot run; the message names what is missing or mismatched."""


def stage_dir(cfg: ExperimentConfig, stage: str, create: bool = False) -> str:
    path = os.path.join(cfg.out_dir, stage.replace("-", "_"))
    if create:
        os.makedirs(path, exist_ok=True)
    return path


def _resolved_channels(cfg: ExperimentConfig) -> int:
    return cfg.channels or NATIVE_CHANNELS[cfg.target]


def _load_split(cfg: ExperimentConfig, name: str, split: str) -> LabeledDataset:
    data = load_dataset(name, split, _resolved_channels(cfg), cfg.data_root or None)
    if split == "train" and cfg.max_train_samples:
        data = subsample(data, cfg.max_train_samples, seed=cfg.seed)
    return data


def find_checkpoint(dirpath: str, role: str, producing_stage: str) -> ModelCheckpoint:
    """Load the highest-step checkpoint of a role, or explain what to run."""
    paths = glob.glob(os.path.join(dirpath, f"{role}_*.ckpt"))
    if not paths:
        raise StageError(
            f"missing artifact: no {role} checkpoint under {dirpath}; "
            f"run the {producing_stage!r} stage first"
        )

    def step_of(p: str) -> int:
        stem = os.path.splitext(os.path.basename(p))[0]
        return int(stem.rsplit("_", 1)[1])

    return load_checkpoint(max(paths, key=step_of))


def _require_same_hash(ckpt: ModelCheckpoint, cfg: ExperimentConfig, what: str):
    if ckpt.config_hash and ckpt.config_hash != cfg.hash:
        raise StageError(
            f"{what} was produced under config {ckpt.config_hash}, "
            f"current config hashes to {cfg.hash}; refusing to mix runs"
        )


def _sidecar_for_labels(cfg: ExperimentConfig) -> tuple[str, str]:
    """Path and producing stage of the configured pseudo-label sidecar."""
    if cfg.labels == "uniform":
        return os.path.join(stage_dir(cfg, "inject-noise"), "pseudo_labels.txt"), "inject-noise"
    return os.path.join(stage_dir(cfg, "infer-pseudolabels"), "pseudo_labels.txt"), "infer-pseudolabels"


def _labeled_target_train(cfg: ExperimentConfig) -> PseudoLabeledDataset:
    """Target train split carrying the configured label stream."""
    train = _load_split(cfg, cfg.target, "train")
    if cfg.labels == "clean":
        return PseudoLabeledDataset(
            images=train.images,
            pseudo_labels=train.labels,
            true_labels=train.labels,
            provenance=f"clean@{cfg.hash}",
            name=train.name,
            split=train.split,
            num_classes=train.num_classes,
        )
    path, producer = _sidecar_for_labels(cfg)
    if not os.path.exists(path):
        raise StageError(
            f"missing artifact: {path}; run the {producer!r} stage first"
        )
    provenance, labels = load_pseudo_labels(path)
    if len(labels) != len(train):
        raise StageError(
            f"{path} holds {len(labels)} labels but the target train split has "
            f"{len(train)} samples; rerun {producer!r} under this config"
        )
    return PseudoLabeledDataset(
        images=train.images,
        pseudo_labels=labels,
        true_labels=train.labels,
        provenance=provenance,
        name=train.name,
        split=train.split,
        num_classes=train.num_classes,
    )


def _write_manifest(cfg: ExperimentConfig, stage: str, wall_time: float, artifacts: list[str]):
    os.makedirs(cfg.out_dir, exist_ok=True)
    entry = {
        "stage": stage,
        "config_hash": cfg.hash,
        "seed": cfg.seed,
        "wall_time_s": round(wall_time, 3),
        "artifacts": artifacts,
    }
    with open(os.path.join(cfg.out_dir, "manifest.jsonl"), "a") as f:
        f.write(json.dumps(entry) + "\n")


# ---------------------------------------------------------------------------
# stage bodies; each returns (metrics dict, artifact paths)
# ---------------------------------------------------------------------------

def _stage_pretrain_source(cfg: ExperimentConfig):
    train = _load_split(cfg, cfg.source, "train")
    test = _load_split(cfg, cfg.source, "test")
    ckpt = pretrain_source(
        train,
        epochs=cfg.source_epochs,
        lr=cfg.pretrain_lr_source,
        batch_size=cfg.batch_size,
        width=cfg.width_classifier,
        seed=cfg.seed,
    )
    ckpt.config_hash = cfg.hash
    path = ckpt.save(stage_dir(cfg, "pretrain-source", create=True))
    acc = evaluate_classifier(ckpt, test).accuracy
    print(f"[pretrain-source] {cfg.source} test accuracy {acc:.4f}")
    return {"source_test_acc": acc}, [path]


def _stage_infer_pseudolabels(cfg: ExperimentConfig):
    classifier = find_checkpoint(stage_dir(cfg, "pretrain-source"), "classifier", "pretrain-source")
    train = _load_split(cfg, cfg.target, "train")
    pld = assign_pseudo_labels(classifier, train)
    path = os.path.join(stage_dir(cfg, "infer-pseudolabels", create=True), "pseudo_labels.txt")
    save_pseudo_labels(pld, path)
    agreement = float(np.mean(pld.pseudo_labels == pld.true_labels))
    print(f"[infer-pseudolabels] {cfg.target} train agreement {agreement:.4f}")
    return {"agreement": agreement}, [path]


def _stage_inject_noise(cfg: ExperimentConfig):
    train = _load_split(cfg, cfg.target, "train")
    noisy = inject_uniform_noise(train.labels, NoiseSpec(cfg.noise_fraction, cfg.classes, cfg.seed))
    pld = PseudoLabeledDataset(
        images=train.images,
        pseudo_labels=noisy,
        true_labels=train.labels,
        provenance=f"uniform_n={cfg.noise_fraction}@{cfg.hash}",
        name=train.name,
        split=train.split,
        num_classes=train.num_classes,
    )
    path = os.path.join(stage_dir(cfg, "inject-noise", create=True), "pseudo_labels.txt")
    save_pseudo_labels(pld, path)
    agreement = float(np.mean(noisy == train.labels))
    print(f"[inject-noise] n={cfg.noise_fraction} -> label agreement {agreement:.4f}")
    return {"agreement": agreement}, [path]


def _stage_analyze_noise(cfg: ExperimentConfig):
    pld = _labeled_target_train(cfg)
    matrix = build_confusion_matrix(pld.true_labels, pld.pseudo_labels, pld.num_classes)
    a = matrix.accuracy()
    delta = asymmetry(matrix)
    n_eq = uniform_noise_equivalent(a, pld.num_classes) if a >= 1.0 / pld.num_classes else float("nan")
    path = os.path.join(stage_dir(cfg, "analyze-noise", create=True), "noise_report.txt")
    with open(path, "w") as f:
        f.write(f"provenance={pld.provenance}\n")
        f.write(f"a={a:.4f}\ndelta_A={delta:.4f}\nn_equivalent={n_eq:.4f}\n")
        f.write(matrix.to_text())
    print(f"[analyze-noise] a={a:.4f} delta_A={delta:.4f} n_equivalent={n_eq:.4f}")
    return {"a": a, "delta_A": delta, "n_equivalent": n_eq}, [path]


def _maybe_source_classifier(cfg: ExperimentConfig) -> ModelCheckpoint | None:
    try:
        return find_checkpoint(stage_dir(cfg, "pretrain-source"), "classifier", "pretrain-source")
    except StageError:
        return None


def _stage_pretrain_cgan(cfg: ExperimentConfig):
    data = _labeled_target_train(cfg)
    channels = _resolved_channels(cfg)
    generator = build_generator(
        cfg.classes, channels, width=cfg.width_generator, latent=LatentSpec(cfg.latent_dim), seed=cfg.seed
    )
    discriminator = build_discriminator(
        cfg.classes, channels, width=cfg.width_discriminator, seed=cfg.seed
    )
    pretrain_cgan(
        generator,
        discriminator,
        data,
        iterations=cfg.cgan_iters,
        lr=cfg.pretrain_lr_gan,
        objective=cfg.gan_objective,
        batch_size=cfg.batch_size,
        seed=cfg.seed,
        probe_classifier=_maybe_source_classifier(cfg),
    )
    out = stage_dir(cfg, "pretrain-cgan", create=True)
    generator.config_hash = cfg.hash
    discriminator.config_hash = cfg.hash
    paths = [generator.save(out), discriminator.save(out)]
    print(f"[pretrain-cgan] {cfg.cgan_iters} iterations on {cfg.target} ({cfg.labels} labels)")
    return {}, paths


def _stage_plr_train(cfg: ExperimentConfig):
    classifier = find_checkpoint(stage_dir(cfg, "pretrain-source"), "classifier", "pretrain-source")
    generator = find_checkpoint(stage_dir(cfg, "pretrain-cgan"), "generator", "pretrain-cgan")
    discriminator = find_checkpoint(stage_dir(cfg, "pretrain-cgan"), "discriminator", "pretrain-cgan")
    target = assign_pseudo_labels(classifier, _load_split(cfg, cfg.target, "train"))
    eval_data = _load_split(cfg, cfg.target, "test")
    state = TrainState(
        classifier=classifier,
        generator=generator,
        discriminator=discriminator,
        eta=cfg.eta,
        delta=cfg.delta,
        rng_seed=cfg.seed,
    )
    out = stage_dir(cfg, "plr-train", create=True)
    state, log = plr_train(
        state,
        target,
        iterations=cfg.plr_iters,
        eval_every=cfg.eval_every,
        eval_data=eval_data,
        objective=cfg.gan_objective,
        batch_size=cfg.batch_size,
        checkpoint_dir=out,
    )
    csv_path = os.path.join(out, "metrics.csv")
    log.save(csv_path)
    final_acc = log.rows[-1][1]
    final_delta = log.rows[-1][2]
    print(f"[plr-train] {cfg.plr_iters} iterations, final test accuracy {final_acc:.4f}")
    return {"final_test_acc": final_acc, "final_delta_A": final_delta}, [csv_path]


def _stage_evaluate(cfg: ExperimentConfig):
    baseline = find_checkpoint(stage_dir(cfg, "pretrain-source"), "classifier", "pretrain-source")
    _require_same_hash(baseline, cfg, "the pretrain-source classifier")
    test = _load_split(cfg, cfg.target, "test")
    out = stage_dir(cfg, "evaluate", create=True)

    baseline_report = evaluate_classifier(baseline, test)
    paths = [os.path.join(out, "baseline_report.txt")]
    baseline_report.save(paths[0])
    metrics = {"baseline_accuracy": baseline_report.accuracy}

    summary = [
        f"config_hash={cfg.hash}",
        f"source={cfg.source}",
        f"target={cfg.target}",
        f"gan_objective={cfg.gan_objective}",
        "split=test",
        f"baseline_accuracy={baseline_report.accuracy:.4f}",
    ]
    plr_dir = stage_dir(cfg, "plr-train")
    if glob.glob(os.path.join(plr_dir, "classifier_*.ckpt")):
        refined = find_checkpoint(plr_dir, "classifier", "plr-train")
        _require_same_hash(refined, cfg, "the plr-train classifier")
        plr_report = evaluate_classifier(refined, test)
        path = os.path.join(out, "plr_report.txt")
        plr_report.save(path)
        paths.append(path)
        metrics["plr_accuracy"] = plr_report.accuracy
        metrics["plr_delta_A"] = plr_report.delta_A
        summary += [
            f"plr_accuracy={plr_report.accuracy:.4f}",
            f"plr_delta_A={plr_report.delta_A:.4f}",
        ]

    summary_path = os.path.join(cfg.out_dir, "summary.txt")
    with open(summary_path, "w") as f:
        f.write("\n".join(summary) + "\n")
    paths.append(summary_path)
    report_line = "  ".join(s for s in summary[5:])
    print(f"[evaluate] {cfg.source}->{cfg.target}  {report_line}")
    return metrics, paths


def _oracle_checkpoint(cfg: ExperimentConfig) -> ModelCheckpoint:
    out = stage_dir(cfg, "gan-test", create=True)
    existing = glob.glob(os.path.join(out, "oracle_*.ckpt"))
    if existing:
        return find_checkpoint(out, "oracle", "gan-test")
    train = _load_split(cfg, cfg.target, "train")
    test = _load_split(cfg, cfg.target, "test")
    oracle = build_oracle(
        train,
        test,
        threshold=cfg.oracle_threshold,
        max_epochs=cfg.oracle_epochs,
        lr=cfg.pretrain_lr_source,
        batch_size=cfg.batch_size,
        width=cfg.width_classifier,
        seed=cfg.seed,
    )
    oracle.config_hash = cfg.hash
    oracle.save(out)
    return oracle


def _stage_gan_test(cfg: ExperimentConfig):
    generator = find_checkpoint(stage_dir(cfg, "pretrain-cgan"), "generator", "pretrain-cgan")
    oracle = _oracle_checkpoint(cfg)
    n = cfg.gan_test_samples or len(_load_split(cfg, cfg.target, "train"))
    report = gan_test(oracle, generator, n_samples=n, seed=cfg.seed)
    out = stage_dir(cfg, "gan-test", create=True)
    path = os.path.join(out, "report.txt")
    report.save(path)
    print(f"[gan-test] accuracy={report.accuracy:.4f} delta_A={report.delta_A:.4f}")
    return {"gan_test_acc": report.accuracy, "gan_test_delta_A": report.delta_A}, [path]


def _stage_gan_train(cfg: ExperimentConfig):
    generator = find_checkpoint(stage_dir(cfg, "pretrain-cgan"), "generator", "pretrain-cgan")
    test = _load_split(cfg, cfg.target, "test")
    budget = cfg.gan_train_budget
    if not budget:
        source_train = _load_split(cfg, cfg.source, "train")
        budget = cfg.source_epochs * math.ceil(len(source_train) / cfg.batch_size)
    report = gan_train(
        generator,
        test,
        train_budget=budget,
        seed=cfg.seed,
        lr=cfg.pretrain_lr_source,
        batch_size=cfg.batch_size,
        width=cfg.width_classifier,
    )
    out = stage_dir(cfg, "gan-train", create=True)
    path = os.path.join(out, "report.txt")
    report.save(path)
    print(f"[gan-train] accuracy={report.accuracy:.4f} delta_A={report.delta_A:.4f}")
    return {"gan_train_acc": report.accuracy, "gan_train_delta_A": report.delta_A}, [path]


def _stage_plot(cfg: ExperimentConfig):
    csv_path = os.path.join(stage_dir(cfg, "plr-train"), "metrics.csv")
    if not os.path.exists(csv_path):
        raise StageError(f"missing artifact: {csv_path}; run the 'plr-train' stage first")
    out = stage_dir(cfg, "plot", create=True)
    path = plot_accuracy(
        [csv_path],
        os.path.join(out, "accuracy.png"),
        title=f"{cfg.source} to {cfg.target} ({cfg.gan_objective})",
    )
    return {}, [path]


def _stage_samples(cfg: ExperimentConfig):
    plr_dir = stage_dir(cfg, "plr-train")
    if glob.glob(os.path.join(plr_dir, "generator_*.ckpt")):
        generator = find_checkpoint(plr_dir, "generator", "plr-train")
    else:
        generator = find_checkpoint(stage_dir(cfg, "pretrain-cgan"), "generator", "pretrain-cgan")
    out = stage_dir(cfg, "samples", create=True)
    path = sample_grid(generator, os.path.join(out, "samples.png"), seed=cfg.seed)
    return {}, [path]


_STAGE_BODIES = {
    "pretrain-source": _stage_pretrain_source,
    "infer-pseudolabels": _stage_infer_pseudolabels,
    "analyze-noise": _stage_analyze_noise,
    "inject-noise": _stage_inject_noise,
    "pretrain-cgan": _stage_pretrain_cgan,
    "plr-train": _stage_plr_train,
    "evaluate": _stage_evaluate,
    "gan-test": _stage_gan_test,
    "gan-train": _stage_gan_train,
    "plot": _stage_plot,
    "samples": _stage_samples,
}


def run_stage(stage: str, cfg: ExperimentConfig) -> dict:
    """Run one stage; returns its scalar metrics. Raises StageError when a
    prerequisite artifact is missing or belongs to a different config."""
    if stage not in _STAGE_BODIES:
        raise StageError(f"unknown stage {stage!r}; known: {', '.join(STAGES)}")
    os.makedirs(cfg.out_dir, exist_ok=True)
    cfg.save(os.path.join(cfg.out_dir, "config.txt"))
    start = time.perf_counter()
    metrics, artifacts = _STAGE_BODIES[stage](cfg)
    _write_manifest(cfg, stage, time.perf_counter() - start, artifacts)
    return metrics


def full_pipeline(cfg: ExperimentConfig) -> dict:
    """Source pretraining through evaluation, in order; returns the combined
    metrics. A failing stage halts the pipeline, keeping earlier artifacts."""
    combined: dict = {}
    for stage in PIPELINE_ORDER:
        combined.update(run_stage(stage, cfg))
    print(
        f"[full] {cfg.source}->{cfg.target} ({cfg.gan_objective}): "
        f"baseline {combined['baseline_accuracy']:.4f}, "
        f"refined {combined.get('plr_accuracy', float('nan')):.4f}"
    )
    return combined
