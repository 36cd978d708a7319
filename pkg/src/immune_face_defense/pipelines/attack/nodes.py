"""Nodes generating adversarial sets against the recognition model."""

import logging

import numpy as np
import torch

from immune_face_defense.attacks import (
    AdversarialSet,
    AttackConfig,
    attack_sticker,
    generate_adversarial_set,
)
from immune_face_defense.eigen import EigenBasis
from immune_face_defense.evaluation import EvaluationConfig
from immune_face_defense.ingest import FaceImage, PairProtocol, corpus_lookup, stack_pixels
from immune_face_defense.recognition import EmbeddingModel

logger = logging.getLogger(__name__)


def generate_attack_set(
    pair_protocol: PairProtocol,
    holdout_faces: list[FaceImage],
    embedder: EmbeddingModel,
    eigenbasis: EigenBasis,
    attack_params: dict,
) -> AdversarialSet:
    """Perturb the designated side of every pair; adaptive attacks use the basis."""
    cfg = AttackConfig.model_validate(attack_params)
    return generate_adversarial_set(
        pair_protocol, corpus_lookup(holdout_faces), embedder, cfg, basis=eigenbasis
    )


def select_sticker_gallery(
    faces: list[FaceImage], cfg: EvaluationConfig, seed: int
) -> tuple[FaceImage, list[FaceImage]]:
    """The target face and a seeded gallery of faces of other identities.

    Raises:
        ValueError: If the target id is unknown or no other identity exists
    """
    ordered = sorted(faces, key=lambda image: image.image_id)
    if cfg.sticker_target_id is None:
        target = ordered[0]
    else:
        matches = [image for image in ordered if image.image_id == cfg.sticker_target_id]
        if not matches:
            raise ValueError(f"Sticker target '{cfg.sticker_target_id}' is not in the corpus")
        target = matches[0]
    others = [image for image in ordered if image.identity_label != target.identity_label]
    if not others:
        raise ValueError("Sticker gallery needs faces of at least one other identity")
    if len(others) < cfg.sticker_gallery_size:
        logger.warning(
            "Only %d faces available for a sticker gallery of %d",
            len(others),
            cfg.sticker_gallery_size,
        )
    size = min(len(others), cfg.sticker_gallery_size)
    chosen = np.sort(np.random.default_rng(seed).choice(len(others), size=size, replace=False))
    return target, [others[int(i)] for i in chosen]


def run_sticker_attack(
    face_corpus: list[FaceImage],
    embedder: EmbeddingModel,
    attack_params: dict,
    evaluation_params: dict,
) -> dict:
    """Optimise one impersonation patch over the gallery.

    Returns:
        container payload with ``patch``, ``gallery``, ``patched_gallery`` and
        ``target`` arrays plus the attack metadata
    """
    cfg = AttackConfig.model_validate(attack_params)
    evaluation = EvaluationConfig.model_validate(evaluation_params)
    target, gallery_faces = select_sticker_gallery(face_corpus, evaluation, seed=cfg.seed)
    gallery = torch.from_numpy(stack_pixels(gallery_faces)).to(torch.float32)
    target_pixels = torch.from_numpy(target.pixels).to(torch.float32)
    history: list[float] = []
    patch, patched = attack_sticker(gallery, target_pixels, embedder, cfg, history=history)
    return {
        "arrays": {
            "patch": patch.numpy(),
            "gallery": gallery.numpy(),
            "patched_gallery": patched.detach().numpy(),
            "target": target_pixels.numpy(),
        },
        "metadata": {
            "attack": cfg.model_dump(),
            "target_id": target.image_id,
            "gallery_ids": [image.image_id for image in gallery_faces],
            "objective_history": history,
        },
    }
