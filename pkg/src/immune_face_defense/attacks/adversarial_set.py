"""Perturbed sides of a pair protocol, generated once and evaluated many times."""

import logging
from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np
import torch

from immune_face_defense.eigen import EigenBasis
from immune_face_defense.errors import NonFiniteError, UndefinedCosineError
from immune_face_defense.ingest import FaceImage, PairProtocol

from .attacks import AttackConfig, noise_magnitude, pair_attack_loss, run_attack

logger = logging.getLogger(__name__)


def pair_key(index: int) -> str:
    return f"pair_{index:05d}"


@dataclass
class AdversarialSet:
    """Perturbed images keyed by pair, with the realised noise of each.

    Images are float32 rasters; evaluating a set read back from disk therefore
    gives the same scores as evaluating it in memory.

    Args:
        attack: The attack configuration that produced the set
        images: ``pair_XXXXX`` -> perturbed ``H x W`` float32 raster
        noise_ratios: ``pair_XXXXX`` -> realised ``||x_adv - x|| / ||x||``
        skipped: Pair indices the attack failed on
    """

    attack: dict
    images: dict[str, np.ndarray] = field(default_factory=dict)
    noise_ratios: dict[str, float] = field(default_factory=dict)
    skipped: list[int] = field(default_factory=list)

    @property
    def mean_noise_ratio(self) -> float:
        if not self.noise_ratios:
            return float("nan")
        return float(np.mean(list(self.noise_ratios.values())))


def perturbed_ids(protocol: PairProtocol) -> tuple[list[str], list[str]]:
    """(perturbed side ids, reference side ids) in pair order."""
    first = protocol.pairs["IMAGE_ID_1"].tolist()
    second = protocol.pairs["IMAGE_ID_2"].tolist()
    return (first, second) if protocol.perturbed_side == "first" else (second, first)


def generate_adversarial_set(
    protocol: PairProtocol,
    lookup: Mapping[str, FaceImage],
    embedder,
    cfg: AttackConfig,
    basis: EigenBasis | None = None,
) -> AdversarialSet:
    """Attack the designated side of every pair against the recognition model.

    ``goal="pair"`` dodges on positive pairs and impersonates on negative ones.
    Pairs whose attack fails are skipped and reported.
    """
    if cfg.kind == "sticker":
        raise ValueError("The sticker attack runs on galleries, not pair protocols")
    attacked, references = perturbed_ids(protocol)
    positives = protocol.pairs["IS_POSITIVE"].tolist()
    result = AdversarialSet(attack=cfg.model_dump())
    for index, (attacked_id, reference_id, positive) in enumerate(zip(attacked, references, positives)):
        clean = torch.from_numpy(lookup[attacked_id].pixels)
        reference = torch.from_numpy(lookup[reference_id].pixels)
        dodging = positive if cfg.goal == "pair" else cfg.goal == "dodging"
        try:
            with torch.no_grad():
                reference_embedding = embedder(reference.unsqueeze(0))[0]
            loss_fn = pair_attack_loss(embedder, reference_embedding, dodging=dodging)
            adversarial = run_attack(clean, loss_fn, cfg, basis=basis).to(torch.float32)
        except (NonFiniteError, UndefinedCosineError) as exc:
            logger.warning("Attack on pair %d (%s) failed: %s", index, attacked_id, exc)
            result.skipped.append(index)
            continue
        key = pair_key(index)
        result.images[key] = adversarial.numpy()
        result.noise_ratios[key] = noise_magnitude(clean.to(torch.float32), adversarial)
    logger.info(
        "Attack %s on %d pairs: mean I %.4f, %d skipped",
        cfg.kind,
        len(protocol),
        result.mean_noise_ratio,
        len(result.skipped),
    )
    return result
