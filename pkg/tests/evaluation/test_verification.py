import numpy as np
import pytest
import torch

from immune_face_defense.attacks import (
    AdversarialSet,
    AttackConfig,
    generate_adversarial_set,
    pair_key,
)
from immune_face_defense.datasets import AdversarialSetDataset
from immune_face_defense.evaluation import (
    EvaluationConfig,
    render_table,
    run_verification,
    sticker_accuracy,
)
from immune_face_defense.ingest import corpus_lookup


@pytest.fixture
def lookup(holdout_faces):
    return corpus_lookup(holdout_faces)


@pytest.fixture(scope="module")
def fgsm():
    return AttackConfig(kind="fgsm", noise_ratio=0.04)


class TestRunVerification:
    def test_clean_undefended(self, embedder, protocol, lookup):
        report = run_verification(None, embedder, protocol, lookup, experiment_id="clean")
        assert report.experiment_id == "clean"
        assert not report.defense
        assert report.defense_mode is None
        assert report.n_positive == 6
        assert report.n_negative == 6
        assert report.skipped_pairs == 0
        assert 0.0 <= report.eer <= 1.0
        assert report.mean_cardinality is None
        assert report.attack is None

    def test_deterministic(self, embedder, protocol, lookup, defense):
        first = run_verification(defense, embedder, protocol, lookup)
        second = run_verification(defense, embedder, protocol, lookup)
        assert first == second

    def test_defended_reports_antibodies(self, embedder, protocol, lookup, defense):
        report = run_verification(defense, embedder, protocol, lookup)
        assert report.defense
        assert report.defense_mode == "map"
        assert 0.0 <= report.mean_cardinality <= defense.head.d_e
        assert report.specificity_v is not None

    def test_sampled_mode(self, embedder, protocol, lookup, defense):
        cfg = EvaluationConfig(defense_mode="sampled", sampled_seed=4)
        first = run_verification(defense, embedder, protocol, lookup, cfg=cfg)
        second = run_verification(defense, embedder, protocol, lookup, cfg=cfg)
        assert first.defense_mode == "sampled"
        assert first == second

    def test_stored_set_matches_in_memory(self, embedder, protocol, lookup, fgsm, tmp_path):
        generated = generate_adversarial_set(protocol, lookup, embedder, fgsm)
        dataset = AdversarialSetDataset(str(tmp_path / "fgsm"))
        dataset.save(generated)
        stored = dataset.load()

        in_memory = run_verification(None, embedder, protocol, lookup, attack=generated)
        from_disk = run_verification(None, embedder, protocol, lookup, attack=stored)
        on_the_fly = run_verification(None, embedder, protocol, lookup, attack=fgsm)
        assert from_disk == in_memory
        assert on_the_fly == in_memory
        assert in_memory.mean_noise_ratio <= 0.04 + 1e-6
        assert in_memory.attack["kind"] == "fgsm"

    def test_skipped_pairs(self, embedder, protocol, lookup):
        images = {
            pair_key(index): lookup[protocol.pairs["IMAGE_ID_1"].iloc[index]].pixels.astype(np.float32)
            for index in range(1, len(protocol))
        }
        attack = AdversarialSet(attack={"kind": "fgsm"}, images=images, skipped=[0])
        report = run_verification(None, embedder, protocol, lookup, attack=attack)
        assert report.skipped_pairs == 1
        assert report.n_positive + report.n_negative == len(protocol) - 1

    def test_curve_is_attached(self, embedder, protocol, lookup):
        report = run_verification(None, embedder, protocol, lookup)
        assert list(report.curve.columns) == ["THRESHOLD", "FAR", "FRR"]
        assert "curve" not in report.to_dict()


class TestStickerAccuracy:
    def test_threshold_bounds(self, embedder, holdout_faces):
        gallery = torch.stack([torch.from_numpy(face.pixels) for face in holdout_faces[:3]])
        target = torch.from_numpy(holdout_faces[-1].pixels)
        assert sticker_accuracy(None, embedder, gallery, target, threshold=1.01) == 1.0
        assert sticker_accuracy(None, embedder, gallery, target, threshold=-1.0) == 0.0

    def test_defended(self, embedder, holdout_faces, defense):
        gallery = torch.stack([torch.from_numpy(face.pixels) for face in holdout_faces[:3]])
        target = torch.from_numpy(holdout_faces[-1].pixels)
        accuracy = sticker_accuracy(defense, embedder, gallery, target)
        assert 0.0 <= accuracy <= 1.0

    def test_empty_gallery(self, embedder, holdout_faces):
        target = torch.from_numpy(holdout_faces[0].pixels)
        with pytest.raises(ValueError, match="empty"):
            sticker_accuracy(None, embedder, torch.zeros(0, 16, 16), target)


def test_render_table(embedder, protocol, lookup, defense):
    reports = [
        run_verification(None, embedder, protocol, lookup, experiment_id="clean_undefended"),
        run_verification(defense, embedder, protocol, lookup, experiment_id="clean_defended"),
    ]
    table = render_table(reports)
    assert "clean_undefended" in table
    assert "clean_defended" in table
    assert "EER (%)" in table
