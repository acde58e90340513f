import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from codeprobe.corpus import CodeSequence, corpus_frames, split_halves
from codeprobe.infometrics import JointHistogram, build_histogram, conditional_entropy, entropy, mutual_information
from codeprobe.probe import (
    TrainerConfig,
    accuracy,
    code_frequencies,
    cross_entropy,
    fit_closed_form,
    load_probe,
    save_probe,
    speaker_probe,
    train_logistic,
    train_logistic_dense,
)
from codeprobe.synth import ChannelConfig, generate

from conftest import random_histogram


def frames_of(counts):
    codes, labels = np.nonzero(counts)
    reps = counts[codes, labels]
    return np.repeat(codes, reps), np.repeat(labels, reps)


class TestClosedForm:
    def test_cross_entropy_is_conditional_entropy(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            c = random_histogram(rng, 200, 20, 20_000)
            h = JointHistogram.from_counts(c)
            probe = fit_closed_form(h)
            codes, labels = frames_of(c)
            ce = cross_entropy(probe, codes, labels)
            assert abs(ce - conditional_entropy(h)) <= 1e-10
            assert abs(entropy(h, "label") - ce - mutual_information(h)) <= 1e-9

    def test_predicts_majority_label(self):
        h = JointHistogram([[5, 1], [0, 3]], ["c0", "c1"], ["a", "b"])
        probe = fit_closed_form(h)
        assert probe.predict(["c0", "c1", "c9"]) == ["a", "b", "a"]
        # unseen code predicts uniformly
        np.testing.assert_allclose(np.exp(probe.log_proba(["c9"])), [[0.5, 0.5]])

    def test_tied_counts(self):
        c = np.array([[1, 1], [1, 1]])
        probe = fit_closed_form(JointHistogram.from_counts(c))
        codes, labels = frames_of(c)
        assert cross_entropy(probe, codes, labels) == pytest.approx(math.log(2), abs=1e-15)
        assert accuracy(probe, codes, labels) == 0.5

    def test_deterministic_mapping(self):
        c = np.diag([4, 2, 7])
        probe = fit_closed_form(JointHistogram.from_counts(c))
        codes, labels = frames_of(c)
        # zero conditionals are floored at 1e-12, so the loss is only ~1e-11
        assert cross_entropy(probe, codes, labels) == pytest.approx(0.0, abs=1e-10)
        assert accuracy(probe, codes, labels) == 1.0

    def test_conditionals_normalized(self):
        c = random_histogram(np.random.default_rng(5), 32, 10, 10_000)
        probe = fit_closed_form(JointHistogram.from_counts(c))
        sums = np.exp(probe.weights[:, probe.support]).sum(axis=0)
        np.testing.assert_allclose(sums, 1.0, rtol=0, atol=1e-9)

    def test_unseen_label_charge(self):
        probe = fit_closed_form(JointHistogram([[2, 2]], [0], ["a", "b"]))
        ce = cross_entropy(probe, [0, 0], ["a", "zz"])
        assert ce == pytest.approx(0.5 * (math.log(2) - math.log(1e-12)))


class TestTrained:
    def test_histogram_training_equals_frame_training(self):
        rng = np.random.default_rng(1)
        c = random_histogram(rng, 12, 4, 600)
        codes, labels = frames_of(c)
        cfg = TrainerConfig(epochs=50)
        fast = train_logistic(codes, labels.tolist(), cfg, n_codes=12)
        dense = train_logistic_dense(np.eye(12)[codes], labels.tolist(), cfg)
        np.testing.assert_allclose(fast.weights, dense.weights, rtol=0, atol=1e-12)
        np.testing.assert_allclose(fast.bias, dense.bias, rtol=0, atol=1e-12)
        np.testing.assert_allclose(fast.loss_history, dense.loss_history, rtol=0, atol=1e-12)

    def test_loss_decreases(self):
        rng = np.random.default_rng(2)
        codes, labels = frames_of(random_histogram(rng, 30, 5, 3000))
        probe = train_logistic(codes, labels.tolist())
        assert len(probe.loss_history) == 201
        assert probe.loss_history[0] == pytest.approx(math.log(5))
        assert np.all(np.diff(probe.loss_history) <= 1e-15)

    def test_deterministic(self):
        codes, labels = frames_of(random_histogram(np.random.default_rng(3), 10, 3, 500))
        a = train_logistic(codes, labels.tolist())
        b = train_logistic(codes, labels.tolist())
        assert a.weights.tobytes() == b.weights.tobytes()

    def test_close_to_closed_form_on_eval_split(self):
        for seed in range(3):
            corpus, _ = generate(ChannelConfig(codebook_size=64, purity=0.6, n_utterances=300, seed=seed))
            train, held = split_halves(corpus, seed)
            t_codes, t_labels = corpus_frames(train)
            e_codes, e_labels = corpus_frames(held)
            trained = accuracy(train_logistic(t_codes, t_labels, n_codes=64), e_codes, e_labels)
            closed = accuracy(fit_closed_form(build_histogram(t_codes, t_labels)), e_codes, e_labels)
            assert abs(trained - closed) <= 0.02

    def test_deterministic_mapping_learned(self):
        probe = train_logistic([0, 1, 2, 0, 1, 2], ["a", "b", "c", "a", "b", "c"])
        assert accuracy(probe, [0, 1, 2], ["a", "b", "c"]) == 1.0
        np.testing.assert_allclose(np.exp(probe.log_proba([0, 1, 2])).sum(axis=1), 1.0, atol=1e-6)

    def test_degenerate_labels(self):
        with pytest.raises(ValueError, match="degenerate labels"):
            train_logistic([0, 1, 2], ["a", "a", "a"])

    def test_unseen_code_is_uniform(self):
        probe = train_logistic([0, 0, 1], ["a", "a", "b"], n_codes=4)
        np.testing.assert_allclose(np.exp(probe.log_proba([3, 2, 9])), 0.5)

    @given(seed=st.integers(0, 10_000))
    @settings(max_examples=15, deadline=None)
    def test_code_permutation_invariance(self, seed):
        rng = np.random.default_rng(seed)
        codes, labels = frames_of(random_histogram(rng, 16, 4, 800))
        held_codes = rng.integers(0, 16, size=200)
        held_labels = rng.integers(0, 4, size=200)
        perm = rng.permutation(16)
        cfg = TrainerConfig(epochs=40)
        a = train_logistic(codes, labels.tolist(), cfg, n_codes=16)
        b = train_logistic(perm[codes], labels.tolist(), cfg, n_codes=16)
        assert accuracy(a, held_codes, held_labels.tolist()) == accuracy(b, perm[held_codes], held_labels.tolist())

    @pytest.mark.parametrize("purity", [0.2, 0.5, 0.8])
    def test_never_beats_pooled_closed_form(self, purity):
        for seed in range(10):
            corpus, _ = generate(ChannelConfig(codebook_size=32, n_phonemes=8, purity=purity,
                                               n_utterances=80, seed=seed))
            train, held = split_halves(corpus, seed)
            probe = train_logistic(*corpus_frames(train), n_codes=32)
            held_acc = accuracy(probe, *corpus_frames(held))
            codes, labels = corpus_frames(corpus)
            pooled = accuracy(fit_closed_form(build_histogram(codes, labels)), codes, labels)
            assert held_acc <= pooled + 0.02


class TestPersistence:
    def test_round_trip(self, tmp_path):
        codes, labels = frames_of(random_histogram(np.random.default_rng(4), 10, 3, 400))
        for probe in (train_logistic(codes, labels.tolist(), TrainerConfig(epochs=20)),
                      fit_closed_form(build_histogram(codes, labels.tolist()))):
            save_probe(probe, tmp_path / "p.json")
            back = load_probe(tmp_path / "p.json")
            np.testing.assert_array_equal(back.log_proba(codes), probe.log_proba(codes))

    def test_rejects_foreign_json(self, tmp_path):
        (tmp_path / "p.json").write_text('{"format": "other"}')
        with pytest.raises(ValueError, match="not a probe"):
            load_probe(tmp_path / "p.json")


class TestSpeakerProbe:
    def test_frequencies(self, small_corpus):
        f = code_frequencies(small_corpus[0].code_sequence)
        assert f.shape == (32,) and f.sum() == pytest.approx(1.0)

    def test_disjoint_code_sets(self):
        seqs = [CodeSequence(f"u{i}", f"s{i % 2}", [i % 2 * 4 + j % 4 for j in range(12)], 8)
                for i in range(20)]
        assert speaker_probe(seqs, 0) == 1.0

    def test_full_leakage_is_detected(self):
        corpus, _ = generate(ChannelConfig(codebook_size=64, n_speakers=4, purity=0.0,
                                           speaker_leakage=1.0, n_utterances=200, seed=0))
        assert speaker_probe([u.code_sequence for u in corpus], 0, stratify=True) > 0.95

    def test_no_leakage_is_chance(self):
        accs = []
        for seed in range(10):
            corpus, _ = generate(ChannelConfig(codebook_size=64, n_speakers=4, purity=0.5,
                                               speaker_leakage=0.0, n_utterances=200, seed=seed))
            accs.append(speaker_probe([u.code_sequence for u in corpus], seed, stratify=True))
        assert abs(np.mean(accs) - 0.25) <= 0.05

    def test_shuffled_speakers_is_chance(self):
        rng = np.random.default_rng(0)
        accs = []
        for seed in range(10):
            corpus, _ = generate(ChannelConfig(codebook_size=64, n_speakers=4, purity=0.0,
                                               speaker_leakage=1.0, n_utterances=200, seed=seed))
            spk = rng.permutation([u.speaker_id for u in corpus])
            seqs = [CodeSequence(u.utterance_id, s, u.codes, 64) for u, s in zip(corpus, spk)]
            accs.append(speaker_probe(seqs, seed, stratify=True))
        assert abs(np.mean(accs) - 0.25) <= 0.05

    def test_missing_speaker_message(self):
        corpus, _ = generate(ChannelConfig(n_speakers=30, n_utterances=20, seed=0))
        with pytest.raises(ValueError, match="stratified"):
            speaker_probe([u.code_sequence for u in corpus], 0)
