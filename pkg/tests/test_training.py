"""Training engine: the alternation contract, live pseudo-labels, logging,
divergence handling, and determinism of the refinement loop."""

import copy

import numpy as np
import pytest
import torch

import plr.training as training_mod
from plr.data import PseudoLabeledDataset
from plr.models import build_classifier, build_discriminator, build_generator
from plr.training import (
    MetricsLog,
    TrainState,
    TrainingDiverged,
    plr_train,
    pretrain_cgan,
    pretrain_source,
    run_classifier_epoch,
)


def _fresh_state(tiny_classifier, tiny_gan, seed=0) -> TrainState:
    gen, disc = tiny_gan
    return TrainState(
        classifier=copy.deepcopy(tiny_classifier),
        generator=copy.deepcopy(gen),
        discriminator=copy.deepcopy(disc),
        eta=1e-4,
        delta=1e-4,
        rng_seed=seed,
    )


def _params(net) -> list:
    return [p.detach().clone() for p in net.parameters()]


def _params_equal(a, b) -> bool:
    return all(torch.equal(x, y) for x, y in zip(a, b))


class TestPretrainSource:
    def test_learns_above_chance(self, tiny_classifier, digits_test):
        from plr.models import predict_probs

        preds = np.argmax(predict_probs(tiny_classifier, digits_test.images), axis=1)
        assert np.mean(preds == digits_test.labels) > 0.3

    def test_epochs_validated(self, digits_train):
        with pytest.raises(ValueError):
            pretrain_source(digits_train, epochs=0, width=8)

    def test_divergence_preserves_parameters(self):
        ckpt = build_classifier(10, 1, width=8, seed=0)
        opt = torch.optim.Adam(ckpt.net.parameters())
        before = _params(ckpt.net)
        bad = np.full((8, 32, 32, 1), np.nan, dtype=np.float32)
        with pytest.raises(TrainingDiverged):
            run_classifier_epoch(
                ckpt.net, opt, bad, np.zeros(8, dtype=np.int64), 8, np.random.default_rng(0)
            )
        assert _params_equal(before, _params(ckpt.net))


class TestPretrainCgan:
    def test_mode_collapse_warning_on_tiny_budget(self, tiny_pseudo, tiny_classifier):
        gen = build_generator(10, 1, width=16, seed=0)
        disc = build_discriminator(10, 1, width=8, seed=0)
        with pytest.warns(RuntimeWarning, match="mode collapse"):
            pretrain_cgan(
                gen, disc, tiny_pseudo, iterations=2, probe_classifier=tiny_classifier
            )

    def test_steps_counted(self, tiny_pseudo):
        gen = build_generator(10, 1, width=16, seed=0)
        disc = build_discriminator(10, 1, width=8, seed=0)
        pretrain_cgan(gen, disc, tiny_pseudo, iterations=5)
        assert gen.step == 5 and disc.step == 5

    def test_mismatches_rejected(self, tiny_pseudo):
        with pytest.raises(ValueError, match="class count"):
            pretrain_cgan(
                build_generator(7, 1, width=16),
                build_discriminator(7, 1, width=8),
                tiny_pseudo,
                iterations=1,
            )
        with pytest.raises(ValueError, match="channel"):
            pretrain_cgan(
                build_generator(10, 3, width=16),
                build_discriminator(10, 3, width=8),
                tiny_pseudo,
                iterations=1,
            )


class TestTrainState:
    def test_step_sizes_validated(self, tiny_classifier, tiny_gan):
        gen, disc = tiny_gan
        with pytest.raises(ValueError):
            TrainState(tiny_classifier, gen, disc, eta=0.0)
        with pytest.raises(ValueError):
            TrainState(tiny_classifier, gen, disc, delta=-1e-5)


class TestMetricsLog:
    def test_csv_round_trip_and_format(self, tmp_path):
        log = MetricsLog()
        log.append(0, 0.5, 0.25, 2.3, 1.4, 0.7)
        log.append(10, 0.625, 0.125, 2.2, 1.38, 0.71)
        text = log.to_csv()
        lines = text.strip().split("\n")
        assert lines[0] == "step,test_acc,delta_A,loss_C,loss_D,loss_G"
        assert lines[1] == "0,0.500000,0.250000,2.300000,1.400000,0.700000"
        path = str(tmp_path / "m.csv")
        log.save(path)
        again = MetricsLog.load(path)
        assert again.rows == log.rows

    def test_header_enforced_on_load(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(ValueError, match="header"):
            MetricsLog.load(str(path))


class TestPlrTrain:
    def test_zero_iterations_is_noop(self, tiny_classifier, tiny_gan, tiny_pseudo, digits_test):
        state = _fresh_state(tiny_classifier, tiny_gan)
        before = _params(state.classifier.net)
        state, log = plr_train(state, tiny_pseudo, 0, 10, eval_data=digits_test, batch_size=32)
        assert _params_equal(before, _params(state.classifier.net))
        assert len(log) == 1 and log.rows[0][0] == 0

    def test_log_length_contract(self, tiny_classifier, tiny_gan, tiny_pseudo, digits_test):
        for iterations, eval_every, expected in ((20, 10, 3), (25, 10, 3), (9, 10, 1)):
            state = _fresh_state(tiny_classifier, tiny_gan)
            _, log = plr_train(
                state, tiny_pseudo, iterations, eval_every, eval_data=digits_test, batch_size=16
            )
            assert len(log) == expected == iterations // eval_every + 1

    def test_eval_every_validated(self, tiny_classifier, tiny_gan, tiny_pseudo, digits_test):
        state = _fresh_state(tiny_classifier, tiny_gan)
        with pytest.raises(ValueError, match="eval_every"):
            plr_train(state, tiny_pseudo, 5, 0, eval_data=digits_test)

    def test_update_pattern_is_c_d_g(self, tiny_classifier, tiny_gan, tiny_pseudo, digits_test):
        sequence = []
        state = _fresh_state(tiny_classifier, tiny_gan)
        plr_train(
            state,
            tiny_pseudo,
            6,
            3,
            eval_data=digits_test,
            batch_size=16,
            update_hook=sequence.append,
        )
        assert sequence == ["C", "D", "G"] * 6

    def test_stored_pseudo_labels_ignored(self, tiny_classifier, tiny_gan, tiny_pseudo, digits_test):
        # the loop must label batches with the live classifier, so rewriting
        # the stored pseudo-labels cannot change anything
        logs = []
        for fill in (0, 9):
            data = PseudoLabeledDataset(
                images=tiny_pseudo.images,
                pseudo_labels=np.full(len(tiny_pseudo), fill, dtype=np.int64),
                true_labels=tiny_pseudo.true_labels,
                provenance="overwritten",
                name=tiny_pseudo.name,
                split=tiny_pseudo.split,
            )
            state = _fresh_state(tiny_classifier, tiny_gan)
            _, log = plr_train(state, data, 8, 4, eval_data=digits_test, batch_size=16)
            logs.append(log.to_csv())
        assert logs[0] == logs[1]

    def test_deterministic_given_seed(self, tiny_classifier, tiny_gan, tiny_pseudo, digits_test):
        runs = []
        for _ in range(2):
            state = _fresh_state(tiny_classifier, tiny_gan, seed=7)
            _, log = plr_train(state, tiny_pseudo, 10, 5, eval_data=digits_test, batch_size=16)
            runs.append(log.to_csv())
        assert runs[0] == runs[1]

    def test_condition_codes_uniform(
        self, monkeypatch, tiny_classifier, tiny_gan, tiny_pseudo, digits_test
    ):
        seen = []
        original = training_mod.classification_loss

        def capture(probs, labels):
            seen.append(np.asarray(labels))
            return original(probs, labels)

        monkeypatch.setattr(training_mod, "classification_loss", capture)
        state = _fresh_state(tiny_classifier, tiny_gan)
        plr_train(state, tiny_pseudo, 100, 50, eval_data=digits_test, batch_size=32)
        draws = np.concatenate(seen)
        freq = np.bincount(draws, minlength=10) / len(draws)
        sigma = np.sqrt(0.1 * 0.9 / len(draws))
        assert np.all(np.abs(freq - 0.1) < 3.5 * sigma)

    def test_divergence_carries_partial_log(
        self, tiny_classifier, tiny_gan, tiny_pseudo, digits_test
    ):
        images = tiny_pseudo.images.copy()
        images[:64] = np.nan
        # bypass dataset range validation to plant the poison batch
        data = copy.copy(tiny_pseudo)
        data.images = images
        state = _fresh_state(tiny_classifier, tiny_gan)
        with pytest.raises(TrainingDiverged) as err:
            plr_train(state, data, 50, 10, eval_data=digits_test, batch_size=64)
        assert err.value.metrics is not None
        assert len(err.value.metrics) >= 1
        for p in state.classifier.net.parameters():
            assert torch.isfinite(p).all()

    def test_checkpoints_emitted_per_eval(
        self, tmp_path, tiny_classifier, tiny_gan, tiny_pseudo, digits_test
    ):
        state = _fresh_state(tiny_classifier, tiny_gan)
        plr_train(
            state,
            tiny_pseudo,
            10,
            5,
            eval_data=digits_test,
            batch_size=16,
            checkpoint_dir=str(tmp_path),
        )
        names = sorted(p.name for p in tmp_path.iterdir())
        for step in (0, 5, 10):
            for role in ("classifier", "generator", "discriminator"):
                assert f"{role}_{step}.ckpt" in names


@pytest.mark.slow
def test_condition_codes_uniform_long(tiny_classifier, tiny_gan, tiny_pseudo, digits_test, monkeypatch):
    """Per-class frequency of step-1 condition codes over 10^4 iterations."""
    seen = []
    original = training_mod.classification_loss

    def capture(probs, labels):
        seen.append(np.asarray(labels))
        return original(probs, labels)

    monkeypatch.setattr(training_mod, "classification_loss", capture)
    state = _fresh_state(tiny_classifier, tiny_gan)
    plr_train(state, tiny_pseudo, 10_000, 10_000, eval_data=digits_test, batch_size=4)
    draws = np.concatenate(seen)
    freq = np.bincount(draws, minlength=10) / len(draws)
    sigma = np.sqrt(0.1 * 0.9 / len(draws))
    assert np.all(np.abs(freq - 0.1) < 3.5 * sigma)
