"""Verification experiments: attacked pair protocols scored with or without defense."""

import logging
import time
from collections.abc import Mapping, Sequence
from dataclasses import asdict, dataclass, field
from typing import Literal

import pandas as pd
import torch
from pydantic import BaseModel, ConfigDict, Field

from immune_face_defense.attacks import (
    AdversarialSet,
    AttackConfig,
    generate_adversarial_set,
    pair_key,
    perturbed_ids,
)
from immune_face_defense.eigen import specificity_matrix
from immune_face_defense.ingest import FaceImage, PairProtocol
from immune_face_defense.model import DefenseState, defend_batch
from immune_face_defense.similarity import cosine_similarity

from .metrics import ScoreSet, compute_eer, far_frr_curve, roc_auc

logger = logging.getLogger(__name__)

SCORING_BATCH = 64


class EvaluationConfig(BaseModel):
    """How defended images are produced and how the sticker protocol is judged."""

    model_config = ConfigDict(extra="forbid")

    defense_mode: Literal["map", "sampled"] = "map"
    sampled_seed: int = 0
    sticker_threshold: float = Field(0.2, ge=-1, le=1)
    sticker_gallery_size: int = Field(200, ge=1)
    sticker_target_id: str | None = None


@dataclass
class EvalReport:
    """Outcome of one verification experiment.

    ``runtime_seconds`` and ``curve`` are left out of equality so that two runs
    with equal seeds compare equal.
    """

    experiment_id: str
    defense: bool
    defense_mode: str | None
    attack: dict | None
    eer: float
    eer_threshold: float
    roc_auc: float
    n_positive: int
    n_negative: int
    skipped_pairs: int
    mean_noise_ratio: float | None
    mean_cardinality: float | None
    specificity_v: float | None
    runtime_seconds: float = field(default=0.0, compare=False)
    curve: pd.DataFrame = field(default_factory=pd.DataFrame, repr=False, compare=False)

    def to_dict(self) -> dict:
        payload = asdict(self)
        payload.pop("curve")
        return payload


def _stack(images: Sequence[torch.Tensor]) -> torch.Tensor:
    return torch.stack([image.to(torch.float32) for image in images])


@torch.no_grad()
def _embed(
    images: torch.Tensor,
    embedder,
    defense: DefenseState | None,
    cfg: EvaluationConfig,
) -> tuple[torch.Tensor, torch.Tensor | None]:
    """Embeddings of a stack, purified first when a defense is given."""
    features, masks = [], []
    for start in range(0, images.shape[0], SCORING_BATCH):
        chunk = images[start : start + SCORING_BATCH]
        if defense is not None:
            seed = cfg.sampled_seed + start if cfg.defense_mode == "sampled" else None
            chunk, weights = defend_batch(defense, chunk, mode=cfg.defense_mode, seed=seed)
            masks.append(weights)
        features.append(embedder(chunk))
    return torch.cat(features), (torch.cat(masks) if masks else None)


def run_verification(
    defense: DefenseState | None,
    embedder,
    protocol: PairProtocol,
    lookup: Mapping[str, FaceImage],
    attack: AttackConfig | AdversarialSet | None = None,
    cfg: EvaluationConfig | None = None,
    experiment_id: str = "experiment",
) -> EvalReport:
    """Score every pair of a protocol by embedding cosine and compute the EER.

    The designated side of each pair is replaced by its adversarial version when
    an attack (or a pre-generated adversarial set) is given. With a defense, both
    sides pass through it before embedding. Pairs the attack failed on are
    skipped and counted.

    Args:
        defense: Trained defense, or None for the undefended model
        embedder: Recognition model
        protocol: Pairs to score
        lookup: Clean images by id
        attack: Attack to run now, a stored adversarial set, or None
        cfg: Defense inference mode
        experiment_id: Name recorded in the report

    Returns:
        EvalReport
    """
    cfg = cfg or EvaluationConfig()
    started = time.perf_counter()
    if isinstance(attack, AttackConfig):
        attack = generate_adversarial_set(
            protocol, lookup, embedder, attack, basis=defense.basis if defense is not None else None
        )

    attacked, references = perturbed_ids(protocol)
    positives = protocol.pairs["IS_POSITIVE"].to_numpy(dtype=bool)
    skipped = set(attack.skipped) if attack is not None else set()
    kept = [index for index in range(len(protocol)) if index not in skipped]
    if skipped:
        logger.warning("Skipping %d pairs the attack failed on", len(skipped))

    probes, gallery = [], []
    for index in kept:
        if attack is not None:
            probes.append(torch.from_numpy(attack.images[pair_key(index)]))
        else:
            probes.append(torch.from_numpy(lookup[attacked[index]].pixels))
        gallery.append(torch.from_numpy(lookup[references[index]].pixels))

    probe_features, probe_masks = _embed(_stack(probes), embedder, defense, cfg)
    gallery_features, gallery_masks = _embed(_stack(gallery), embedder, defense, cfg)
    scores = cosine_similarity(probe_features, gallery_features).clamp(-1.0, 1.0).numpy()
    kept_positive = positives[kept]
    score_set = ScoreSet(scores[kept_positive], scores[~kept_positive])
    eer, threshold = compute_eer(score_set)

    mean_cardinality = specificity = None
    if defense is not None:
        masks = torch.cat([probe_masks, gallery_masks]).numpy()
        mean_cardinality = float(masks.sum(axis=1).mean())
        n = masks.shape[0]
        specificity = float(specificity_matrix(masks).sum()) / (n * (n - 1)) if n > 1 else None

    report = EvalReport(
        experiment_id=experiment_id,
        defense=defense is not None,
        defense_mode=cfg.defense_mode if defense is not None else None,
        attack=attack.attack if attack is not None else None,
        eer=eer,
        eer_threshold=threshold,
        roc_auc=roc_auc(score_set),
        n_positive=score_set.n_positive,
        n_negative=score_set.n_negative,
        skipped_pairs=len(skipped),
        mean_noise_ratio=attack.mean_noise_ratio if attack is not None else None,
        mean_cardinality=mean_cardinality,
        specificity_v=specificity,
        runtime_seconds=time.perf_counter() - started,
        curve=far_frr_curve(score_set),
    )
    logger.info(
        "%s: EER %.4f (AUC %.4f) over %d/%d pairs",
        experiment_id,
        eer,
        report.roc_auc,
        len(kept),
        len(protocol),
    )
    return report


@torch.no_grad()
def sticker_accuracy(
    defense: DefenseState | None,
    embedder,
    patched_gallery: torch.Tensor,
    target: torch.Tensor,
    threshold: float = 0.2,
    cfg: EvaluationConfig | None = None,
) -> float:
    """Share of patched faces whose cosine to the target stays below ``threshold``.

    With a defense, the gallery and the target are both purified first.
    """
    if patched_gallery.shape[0] == 0:
        raise ValueError("Sticker gallery is empty")
    cfg = cfg or EvaluationConfig()
    gallery_features, _ = _embed(patched_gallery.to(torch.float32), embedder, defense, cfg)
    target_features, _ = _embed(target.to(torch.float32).unsqueeze(0), embedder, defense, cfg)
    similarities = cosine_similarity(gallery_features, target_features).clamp(-1.0, 1.0)
    return float((similarities < threshold).to(torch.float64).mean())


def render_table(reports: Sequence[EvalReport]) -> str:
    """Plain-text table of EERs in percent, one row per experiment."""
    rows = [
        {
            "EXPERIMENT": report.experiment_id,
            "DEFENSE": "on" if report.defense else "off",
            "ATTACK": report.attack["kind"] if report.attack else "none",
            "EER (%)": round(100 * report.eer, 2),
            "AUC": round(report.roc_auc, 4),
            "I": None if report.mean_noise_ratio is None else round(report.mean_noise_ratio, 4),
            "|a|": None if report.mean_cardinality is None else round(report.mean_cardinality, 1),
            "V": None if report.specificity_v is None else round(report.specificity_v, 1),
            "SKIPPED": report.skipped_pairs,
        }
        for report in reports
    ]
    return pd.DataFrame(rows).to_string(index=False, na_rep="-")

