"""Shared fixtures: a tiny synthetic corpus and the models built on it.

Everything runs on 16x16 faces so the whole suite stays on a laptop budget.
"""

import pytest
import torch

from immune_face_defense.eigen import fit_eigenbasis
from immune_face_defense.ingest import build_pairs, split_corpus, synthesize_corpus
from immune_face_defense.model import DefenseConfig, build_defense
from immune_face_defense.recognition import EmbeddingModel, freeze
from immune_face_defense.training import TrainerConfig

IMAGE_SIZE = (16, 16)


@pytest.fixture(scope="session")
def faces():
    return synthesize_corpus(6, 6, IMAGE_SIZE, seed=0)


@pytest.fixture(scope="session")
def split(faces):
    return split_corpus(faces, holdout_per_identity=2, seed=0)


@pytest.fixture(scope="session")
def train_faces(split):
    return split[0]


@pytest.fixture(scope="session")
def holdout_faces(split):
    return split[1]


@pytest.fixture(scope="session")
def basis(train_faces):
    return fit_eigenbasis(train_faces, 16)


@pytest.fixture(scope="session")
def embedder():
    return freeze(EmbeddingModel("toy_cnn", "conv_small", IMAGE_SIZE, 8, seed=0))


@pytest.fixture(scope="session")
def protocol(holdout_faces):
    return build_pairs(holdout_faces, 6, 6, seed=0)


@pytest.fixture
def defense_cfg():
    return DefenseConfig(d_n=8, d_m=4, analyzer="conv_small", seed=0)


@pytest.fixture
def defense(basis, defense_cfg):
    return build_defense(basis, defense_cfg, epsilon=0.9)


@pytest.fixture
def trainer_cfg():
    return TrainerConfig(
        k=4,
        batch_size=2,
        warmup_steps=2,
        adversarial_steps=2,
        log_every=1,
        seed=0,
    )


@pytest.fixture
def clean_image(holdout_faces):
    return torch.from_numpy(holdout_faces[0].pixels)
