import numpy as np
import pytest
import torch

from immune_face_defense.errors import CorpusError, EmbedderTrainingError
from immune_face_defense.evaluation import metrics
from immune_face_defense.ingest import corpus_lookup
from immune_face_defense.recognition import (
    EmbedderConfig,
    EmbeddingModel,
    cosine,
    embed,
    freeze,
    pair_scores,
    parameter_hash,
    train_toy_embedder,
)

SHAPE = (16, 16)


@pytest.fixture
def quick_config():
    return EmbedderConfig(
        architecture="conv_small",
        d_f=8,
        batch_size=4,
        max_steps=3,
        eval_every=3,
        target_eer=1.0,
        eval_pairs=12,
    )


class TestEmbeddingModel:
    def test_width(self):
        model = EmbeddingModel("toy_mlp", "mlp", SHAPE, 10)
        assert model.d_f == 10
        assert model.name == "toy_mlp"

    def test_embed_face_image(self, embedder, holdout_faces):
        features = embed(embedder, holdout_faces[0])
        assert features.shape == (8,)
        torch.testing.assert_close(
            features, embed(embedder, torch.from_numpy(holdout_faces[0].pixels))
        )

    def test_freeze(self):
        model = freeze(EmbeddingModel("toy_cnn", "conv_small", SHAPE, 4))
        assert not model.training
        assert all(not p.requires_grad for p in model.parameters())

    def test_cosine_is_clipped(self):
        vector = torch.tensor([1.0, 2.0, 3.0])
        assert cosine(vector, vector * 5) == pytest.approx(1.0)
        assert -1.0 <= cosine(vector, -vector) <= 1.0


class TestParameterHash:
    def test_stable_for_same_seed(self):
        first = EmbeddingModel("toy_cnn", "conv_small", SHAPE, 4, seed=3)
        second = EmbeddingModel("toy_cnn", "conv_small", SHAPE, 4, seed=3)
        assert parameter_hash(first) == parameter_hash(second)

    def test_changes_with_weights(self):
        model = EmbeddingModel("toy_cnn", "conv_small", SHAPE, 4, seed=3)
        before = parameter_hash(model)
        with torch.no_grad():
            next(model.parameters()).add_(1e-3)
        assert parameter_hash(model) != before


class TestPairScores:
    def test_split_by_label(self, embedder, protocol, holdout_faces):
        positive, negative = pair_scores(embedder, protocol, corpus_lookup(holdout_faces))
        assert len(positive) == int(protocol.pairs["IS_POSITIVE"].sum())
        assert len(negative) == len(protocol) - len(positive)
        assert np.all(np.abs(positive) <= 1.0)


class TestTrainToyEmbedder:
    def test_reaches_target(self, train_faces, quick_config):
        model = train_toy_embedder(train_faces, quick_config)
        assert model.d_f == 8
        assert not model.training
        assert all(not p.requires_grad for p in model.parameters())

    def test_uses_given_holdout(self, train_faces, holdout_faces, quick_config):
        model = train_toy_embedder(train_faces, quick_config, holdout=holdout_faces)
        assert model.input_shape == SHAPE

    def test_seeded(self, train_faces, quick_config):
        first = train_toy_embedder(train_faces, quick_config)
        second = train_toy_embedder(train_faces, quick_config)
        assert parameter_hash(first) == parameter_hash(second)

    def test_missed_target_reports_best_eer(self, train_faces, quick_config, monkeypatch):
        monkeypatch.setattr(metrics, "compute_eer", lambda scores: (0.4, 0.0))
        config = quick_config.model_copy(update={"target_eer": 0.1})
        with pytest.raises(EmbedderTrainingError, match="0.4000") as info:
            train_toy_embedder(train_faces, config)
        assert info.value.best_eer == pytest.approx(0.4)

    def test_single_identity(self, faces, quick_config):
        single = [face for face in faces if face.identity_label == faces[0].identity_label]
        with pytest.raises(CorpusError, match="identities"):
            train_toy_embedder(single, quick_config)

    def test_holdout_needs_two_per_identity(self):
        with pytest.raises(ValueError, match="greater than or equal to 2"):
            EmbedderConfig(holdout_per_identity=1)

    def test_holdout_without_positive_pairs(self, train_faces, quick_config):
        seen, singles = set(), []
        for face in train_faces:
            if face.identity_label not in seen:
                seen.add(face.identity_label)
                singles.append(face)
        with pytest.raises(CorpusError, match="0 positive"):
            train_toy_embedder(train_faces, quick_config, holdout=singles)
