import numpy as np
import pytest

from immune_face_defense.evaluation import EvaluationConfig
from immune_face_defense.pipelines.attack.nodes import (
    generate_attack_set,
    run_sticker_attack,
    select_sticker_gallery,
)

STICKER = {
    "kind": "sticker",
    "steps": 2,
    "goal": "impersonation",
    "patch_height": 4,
    "patch_width": 8,
    "anchor_row": 2,
}


def test_generate_attack_set(protocol, holdout_faces, embedder, basis):
    adversarial = generate_attack_set(
        protocol, holdout_faces, embedder, basis, {"kind": "fgsm", "noise_ratio": 0.02}
    )
    assert adversarial.attack["kind"] == "fgsm"
    assert len(adversarial.images) + len(adversarial.skipped) == len(protocol.pairs)


class TestStickerGallery:
    def test_excludes_target_identity(self, faces):
        target, gallery = select_sticker_gallery(
            faces, EvaluationConfig(sticker_gallery_size=5), seed=0
        )
        assert target.image_id == sorted(face.image_id for face in faces)[0]
        assert len(gallery) == 5
        assert all(face.identity_label != target.identity_label for face in gallery)

    def test_seeded(self, faces):
        cfg = EvaluationConfig(sticker_gallery_size=5)
        first = [face.image_id for face in select_sticker_gallery(faces, cfg, seed=3)[1]]
        second = [face.image_id for face in select_sticker_gallery(faces, cfg, seed=3)[1]]
        assert first == second

    def test_small_corpus_shrinks_gallery(self, faces, caplog):
        _, gallery = select_sticker_gallery(
            faces, EvaluationConfig(sticker_gallery_size=1000), seed=0
        )
        assert len(gallery) == 30
        assert "Only 30 faces" in caplog.text

    def test_unknown_target(self, faces):
        with pytest.raises(ValueError, match="not in the corpus"):
            select_sticker_gallery(faces, EvaluationConfig(sticker_target_id="nobody"), seed=0)


def test_run_sticker_attack(faces, embedder):
    payload = run_sticker_attack(faces, embedder, STICKER, {"sticker_gallery_size": 4})
    arrays = payload["arrays"]
    assert arrays["patch"].shape == (4, 8)
    assert arrays["gallery"].shape == arrays["patched_gallery"].shape == (4, 16, 16)
    np.testing.assert_array_equal(arrays["patched_gallery"][:, :2], arrays["gallery"][:, :2])
    assert len(payload["metadata"]["objective_history"]) == 3
    assert len(payload["metadata"]["gallery_ids"]) == 4
