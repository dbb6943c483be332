"""Config files, hashing, stage orchestration, artifacts, and the CLI."""

import json
import os

import numpy as np
import pytest

from plr.cli import main
from plr.config import ExperimentConfig
from plr.pipeline import StageError, full_pipeline, run_stage, stage_dir
from plr.training import MetricsLog


def micro_config(out_dir: str, **overrides) -> ExperimentConfig:
    base = dict(
        source="digits",
        target="digits",
        source_epochs=2,
        cgan_iters=25,
        plr_iters=20,
        eval_every=10,
        width_classifier=8,
        width_generator=16,
        width_discriminator=8,
        max_train_samples=400,
        oracle_threshold=0.5,
        oracle_epochs=4,
        gan_test_samples=1000,
        gan_train_budget=40,
        out_dir=out_dir,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


class TestConfig:
    def test_file_round_trip(self, tmp_path):
        cfg = micro_config(str(tmp_path / "run"), seed=3, gan_objective="hinge")
        path = str(tmp_path / "exp.cfg")
        cfg.save(path)
        again = ExperimentConfig.from_file(path)
        assert again == cfg
        assert again.hash == cfg.hash

    def test_comments_and_blanks_ignored(self):
        cfg = ExperimentConfig.from_text("# a comment\n\nseed=9\n")
        assert cfg.seed == 9

    def test_unknown_key_rejected(self):
        with pytest.raises(ValueError, match="unknown config key"):
            ExperimentConfig.from_text("learning_rate=1\n")

    def test_duplicate_key_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            ExperimentConfig.from_text("seed=1\nseed=2\n")

    def test_hash_excludes_environment_bindings(self):
        a = ExperimentConfig(out_dir="/a", data_root="/x")
        b = ExperimentConfig(out_dir="/b", data_root="/y")
        assert a.hash == b.hash
        c = ExperimentConfig(seed=1)
        assert c.hash != a.hash

    def test_validation(self):
        with pytest.raises(ValueError):
            ExperimentConfig(eta=0.0)
        with pytest.raises(ValueError):
            ExperimentConfig(eval_every=0)
        with pytest.raises(ValueError):
            ExperimentConfig(gan_objective="wgan")
        with pytest.raises(ValueError):
            ExperimentConfig(channels=2)
        with pytest.raises(ValueError):
            ExperimentConfig(labels="oracle")
        with pytest.raises(ValueError):
            ExperimentConfig(noise_fraction=1.5)


@pytest.fixture(scope="module")
def pipeline_run(tmp_path_factory):
    out = str(tmp_path_factory.mktemp("pipe"))
    cfg = micro_config(out)
    metrics = full_pipeline(cfg)
    return cfg, metrics


class TestPipeline:
    def test_unknown_stage_rejected(self, tmp_path):
        with pytest.raises(StageError, match="unknown stage"):
            run_stage("train-harder", micro_config(str(tmp_path)))

    def test_missing_prerequisite_names_stage(self, tmp_path):
        cfg = micro_config(str(tmp_path / "fresh"))
        with pytest.raises(StageError, match="pretrain-source"):
            run_stage("infer-pseudolabels", cfg)
        with pytest.raises(StageError, match="pretrain-cgan"):
            run_stage("gan-test", cfg)

    def test_full_pipeline_metrics_and_artifacts(self, pipeline_run):
        cfg, metrics = pipeline_run
        for key in ("source_test_acc", "a", "delta_A", "final_test_acc", "baseline_accuracy", "plr_accuracy"):
            assert key in metrics
        assert os.path.exists(os.path.join(cfg.out_dir, "summary.txt"))
        assert os.path.exists(os.path.join(cfg.out_dir, "config.txt"))
        log = MetricsLog.load(os.path.join(stage_dir(cfg, "plr-train"), "metrics.csv"))
        assert len(log) == cfg.plr_iters // cfg.eval_every + 1

    def test_summary_reports_baseline_from_source_checkpoint(self, pipeline_run):
        cfg, metrics = pipeline_run
        with open(os.path.join(cfg.out_dir, "summary.txt")) as f:
            summary = dict(line.strip().split("=", 1) for line in f if "=" in line)
        assert float(summary["baseline_accuracy"]) == pytest.approx(
            metrics["baseline_accuracy"], abs=1e-4
        )
        assert summary["config_hash"] == cfg.hash

    def test_manifest_traces_stages(self, pipeline_run):
        cfg, _ = pipeline_run
        with open(os.path.join(cfg.out_dir, "manifest.jsonl")) as f:
            entries = [json.loads(line) for line in f]
        stages = [e["stage"] for e in entries]
        assert stages[:6] == [
            "pretrain-source",
            "infer-pseudolabels",
            "analyze-noise",
            "pretrain-cgan",
            "plr-train",
            "evaluate",
        ]
        for e in entries:
            assert e["config_hash"] == cfg.hash
            assert all(os.path.exists(p) for p in e["artifacts"])

    def test_remaining_stages_produce_artifacts(self, pipeline_run):
        cfg, _ = pipeline_run
        gan_test_metrics = run_stage("gan-test", cfg)
        assert 0.0 <= gan_test_metrics["gan_test_acc"] <= 1.0
        gan_train_metrics = run_stage("gan-train", cfg)
        assert 0.0 <= gan_train_metrics["gan_train_acc"] <= 1.0
        run_stage("plot", cfg)
        run_stage("samples", cfg)
        assert os.path.getsize(os.path.join(stage_dir(cfg, "plot"), "accuracy.png")) > 0
        assert os.path.getsize(os.path.join(stage_dir(cfg, "samples"), "samples.png")) > 0

    def test_uniform_noise_route(self, pipeline_run):
        cfg, _ = pipeline_run
        noisy = cfg.replace(labels="uniform", noise_fraction=0.3)
        run_stage("inject-noise", noisy)
        metrics = run_stage("analyze-noise", noisy)
        assert abs(metrics["a"] - 0.73) < 0.07
        assert metrics["delta_A"] < 0.12
        assert abs(metrics["n_equivalent"] - 0.3) < 0.08

    def test_evaluate_refuses_cross_hash(self, pipeline_run):
        cfg, _ = pipeline_run
        other = cfg.replace(seed=cfg.seed + 50)
        assert other.hash != cfg.hash
        with pytest.raises(StageError, match="refusing to mix"):
            run_stage("evaluate", other)

    def test_sidecar_length_mismatch_detected(self, pipeline_run):
        cfg, _ = pipeline_run
        resized = cfg.replace(max_train_samples=200)
        with pytest.raises(StageError, match="rerun"):
            run_stage("pretrain-cgan", resized)


class TestCli:
    def test_full_run_and_rerun_deterministic(self, tmp_path, capsys):
        cfg_path = str(tmp_path / "exp.cfg")
        micro_config(str(tmp_path / "ignored")).save(cfg_path)
        assert main(["full", "--config", cfg_path, "--out", str(tmp_path / "a")]) == 0
        assert main(["full", "--config", cfg_path, "--out", str(tmp_path / "b")]) == 0
        first = (tmp_path / "a" / "plr_train" / "metrics.csv").read_bytes()
        second = (tmp_path / "b" / "plr_train" / "metrics.csv").read_bytes()
        assert first == second

    def test_missing_prerequisite_exits_nonzero(self, tmp_path, capsys):
        cfg_path = str(tmp_path / "exp.cfg")
        micro_config(str(tmp_path / "empty")).save(cfg_path)
        assert main(["plr-train", "--config", cfg_path]) == 1
        assert "pretrain-source" in capsys.readouterr().err

    def test_multi_seed_aggregation(self, tmp_path, capsys):
        cfg_path = str(tmp_path / "exp.cfg")
        micro_config(str(tmp_path / "seeds")).save(cfg_path)
        assert main(["pretrain-source", "--config", cfg_path, "--seeds", "2"]) == 0
        out = capsys.readouterr().out
        assert "source_test_acc" in out and "+-" in out
        agg = tmp_path / "seeds" / "aggregate_pretrain_source.txt"
        assert agg.exists()
        for k in range(2):
            assert (tmp_path / "seeds" / f"seed{k}" / "pretrain_source").is_dir()

    def test_bad_config_path_exits_nonzero(self, tmp_path, capsys):
        assert main(["full", "--config", str(tmp_path / "missing.cfg")]) == 1
        assert "error:" in capsys.readouterr().err
