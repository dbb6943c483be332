"""Model zoo: construction contracts, determinism, checkpoint round-trips,
and the oracle builder."""

import numpy as np
import pytest
import torch

from plr.data import subsample
from plr.models import (
    LatentSpec,
    ModelCheckpoint,
    OracleThresholdError,
    build_classifier,
    build_discriminator,
    build_generator,
    build_oracle,
    generate,
    load_checkpoint,
    one_hot,
    predict_probs,
)


def _state_dicts_equal(a, b) -> bool:
    a, b = a.state_dict(), b.state_dict()
    return a.keys() == b.keys() and all(torch.equal(a[k], b[k]) for k in a)


class TestClassifier:
    def test_rows_sum_to_one(self):
        ckpt = build_classifier(10, 1, width=8, seed=0)
        x = torch.randn(16, 1, 32, 32)
        probs = ckpt.net(x)
        assert probs.shape == (16, 10)
        assert torch.all(probs >= 0)
        assert torch.allclose(probs.sum(dim=1), torch.ones(16), atol=1e-5)

    def test_seeded_build_reproducible(self):
        a = build_classifier(10, 1, width=8, seed=42)
        b = build_classifier(10, 1, width=8, seed=42)
        assert _state_dicts_equal(a.net, b.net)
        c = build_classifier(10, 1, width=8, seed=43)
        assert not _state_dicts_equal(a.net, c.net)

    def test_untrained_is_chance_level(self, digits_test):
        ckpt = build_classifier(10, 1, width=8, seed=1)
        preds = np.argmax(predict_probs(ckpt, digits_test.images), axis=1)
        acc = np.mean(preds == digits_test.labels)
        assert abs(acc - 0.1) < 0.12

    def test_preconditions(self):
        with pytest.raises(ValueError):
            build_classifier(1, 1)
        with pytest.raises(ValueError):
            build_classifier(10, 2)


class TestGenerator:
    def test_output_contract(self):
        ckpt = build_generator(10, 1, width=16, seed=0)
        rng = np.random.default_rng(0)
        z = rng.standard_normal((9, 100)).astype(np.float32)
        labels = rng.integers(0, 10, 9)
        images = generate(ckpt, z, labels)
        assert images.shape == (9, 32, 32, 1)
        assert images.min() >= -1.0 and images.max() <= 1.0

    def test_deterministic_forward(self):
        ckpt = build_generator(10, 3, width=16, seed=0)
        z = np.random.default_rng(1).standard_normal((4, 100)).astype(np.float32)
        labels = np.array([0, 3, 7, 9])
        assert np.array_equal(generate(ckpt, z, labels), generate(ckpt, z, labels))

    def test_label_out_of_range_rejected(self):
        ckpt = build_generator(10, 1, width=16, seed=0)
        z = np.zeros((2, 100), dtype=np.float32)
        with pytest.raises(ValueError, match="label"):
            generate(ckpt, z, np.array([0, 10]))

    def test_latent_spec(self):
        with pytest.raises(ValueError):
            LatentSpec(0)
        spec = LatentSpec(16)
        sample = spec.sample(np.random.default_rng(0), 5)
        assert sample.shape == (5, 16) and sample.dtype == np.float32
        ckpt = build_generator(10, 1, width=16, latent=spec, seed=0)
        assert ckpt.arch["latent_dim"] == 16


class TestDiscriminator:
    def test_output_shape_and_determinism(self):
        ckpt = build_discriminator(10, 1, width=8, seed=0)
        x = torch.randn(6, 1, 32, 32)
        code = one_hot(np.array([0, 1, 2, 3, 4, 5]), 10)
        ckpt.net.eval()
        a = ckpt.net(x, code)
        assert a.shape == (6, 1)
        assert torch.equal(a, ckpt.net(x, code))

    def test_permutation_equivariance(self):
        ckpt = build_discriminator(10, 1, width=8, seed=0)
        ckpt.net.eval()
        x = torch.randn(8, 1, 32, 32)
        code = one_hot(np.arange(8) % 10, 10)
        perm = torch.randperm(8)
        with torch.no_grad():
            straight = ckpt.net(x, code)
            shuffled = ckpt.net(x[perm], code[perm])
        assert torch.allclose(straight[perm], shuffled, atol=1e-6)


class TestCheckpoints:
    def test_round_trip_bit_exact(self, tmp_path, tiny_classifier, digits_test):
        path = tiny_classifier.save(str(tmp_path))
        assert path.endswith(f"classifier_{tiny_classifier.step}.ckpt")
        loaded = load_checkpoint(path)
        assert _state_dicts_equal(loaded.net, tiny_classifier.net)
        assert loaded.role == tiny_classifier.role
        assert loaded.step == tiny_classifier.step
        before = predict_probs(tiny_classifier, digits_test.images)
        after = predict_probs(loaded, digits_test.images)
        assert np.array_equal(before, after)

    def test_generator_round_trip(self, tmp_path):
        ckpt = build_generator(10, 1, width=16, seed=3)
        ckpt.config_hash = "abc123def456"
        path = ckpt.save(str(tmp_path / "gen.ckpt"))
        loaded = load_checkpoint(path)
        assert loaded.config_hash == "abc123def456"
        z = np.random.default_rng(0).standard_normal((3, 100)).astype(np.float32)
        labels = np.array([1, 2, 3])
        assert np.array_equal(generate(ckpt, z, labels), generate(loaded, z, labels))

    def test_role_validated(self):
        with pytest.raises(ValueError):
            ModelCheckpoint(role="painter", net=torch.nn.Linear(2, 2), arch={})

    def test_predict_probs_wrong_role_rejected(self):
        gen = build_generator(10, 1, width=16, seed=0)
        with pytest.raises(ValueError, match="classifier"):
            predict_probs(gen, np.zeros((1, 32, 32, 1), dtype=np.float32))


class TestOneHot:
    def test_encoding(self):
        code = one_hot(np.array([2, 0]), 4)
        assert code.tolist() == [[0, 0, 1, 0], [1, 0, 0, 0]]

    def test_range_validation(self):
        with pytest.raises(ValueError):
            one_hot(np.array([4]), 4)
        with pytest.raises(ValueError):
            one_hot(np.array([-1]), 4)


class TestOracle:
    def test_builds_above_threshold(self, digits_train, digits_test):
        oracle = build_oracle(
            digits_train, digits_test, threshold=0.80, max_epochs=20, width=8, seed=0
        )
        assert oracle.role == "oracle"
        preds = np.argmax(predict_probs(oracle, digits_test.images), axis=1)
        assert np.mean(preds == digits_test.labels) >= 0.80

    def test_unreachable_threshold_reports_achieved(self, digits_train, digits_test):
        tiny = subsample(digits_train, 150, seed=0)
        with pytest.raises(OracleThresholdError, match=r"0\.\d+"):
            build_oracle(tiny, digits_test, threshold=0.999, max_epochs=1, width=8, seed=0)
