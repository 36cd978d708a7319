import numpy as np
import pytest

from immune_face_defense.attacks import (
    AttackConfig,
    generate_adversarial_set,
    pair_key,
    perturbed_ids,
)
from immune_face_defense.attacks import adversarial_set as adversarial_module
from immune_face_defense.errors import NonFiniteError
from immune_face_defense.ingest import PairProtocol, corpus_lookup


@pytest.fixture
def lookup(holdout_faces):
    return corpus_lookup(holdout_faces)


@pytest.fixture
def fgsm():
    return AttackConfig(kind="fgsm", noise_ratio=0.04)


def test_pair_key():
    assert pair_key(7) == "pair_00007"


def test_perturbed_ids_follow_side(protocol):
    first, second = perturbed_ids(protocol)
    assert first == protocol.pairs["IMAGE_ID_1"].tolist()
    flipped = PairProtocol(pairs=protocol.pairs, perturbed_side="second")
    attacked, references = perturbed_ids(flipped)
    assert attacked == second
    assert references == first


class TestGenerateAdversarialSet:
    def test_one_image_per_pair(self, protocol, lookup, embedder, fgsm):
        result = generate_adversarial_set(protocol, lookup, embedder, fgsm)
        assert sorted(result.images) == [pair_key(i) for i in range(len(protocol))]
        assert result.skipped == []
        assert result.attack["kind"] == "fgsm"
        for image in result.images.values():
            assert image.dtype == np.float32
            assert image.shape == (16, 16)

    def test_noise_within_target(self, protocol, lookup, embedder, fgsm):
        result = generate_adversarial_set(protocol, lookup, embedder, fgsm)
        assert max(result.noise_ratios.values()) <= 0.04 + 1e-6
        assert 0 < result.mean_noise_ratio <= 0.04 + 1e-6

    def test_seeded(self, protocol, lookup, embedder):
        cfg = AttackConfig(kind="pgd", noise_ratio=0.04, steps=2, random_start=True, seed=3)
        first = generate_adversarial_set(protocol, lookup, embedder, cfg)
        second = generate_adversarial_set(protocol, lookup, embedder, cfg)
        for key, image in first.images.items():
            np.testing.assert_array_equal(image, second.images[key])

    def test_failed_pairs_are_skipped(self, protocol, lookup, embedder, fgsm, monkeypatch):
        original = adversarial_module.run_attack
        calls = []

        def flaky(x, loss_fn, cfg, basis=None):
            calls.append(1)
            if len(calls) == 2:
                raise NonFiniteError("diverged")
            return original(x, loss_fn, cfg, basis=basis)

        monkeypatch.setattr(adversarial_module, "run_attack", flaky)
        result = generate_adversarial_set(protocol, lookup, embedder, fgsm)
        assert result.skipped == [1]
        assert pair_key(1) not in result.images
        assert len(result.images) == len(protocol) - 1

    def test_sticker_rejected(self, protocol, lookup, embedder):
        with pytest.raises(ValueError, match="galleries"):
            generate_adversarial_set(protocol, lookup, embedder, AttackConfig(kind="sticker"))

    def test_adaptive_needs_basis(self, protocol, lookup, embedder):
        with pytest.raises(ValueError, match="eigenbasis"):
            generate_adversarial_set(
                protocol, lookup, embedder, AttackConfig(kind="adaptive_fgsm")
            )
