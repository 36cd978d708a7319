"""Nodes scoring the pair protocol and the sticker gallery with and without defense."""

import logging

import pandas as pd
import torch

from immune_face_defense.attacks import AdversarialSet
from immune_face_defense.eigen import EigenBasis
from immune_face_defense.evaluation import (
    EvaluationConfig,
    render_table,
    run_verification,
    sticker_accuracy,
)
from immune_face_defense.ingest import FaceImage, PairProtocol, corpus_lookup
from immune_face_defense.recognition import EmbeddingModel
from immune_face_defense.training import DefenseCheckpoint, restore_defense

logger = logging.getLogger(__name__)


def evaluate_defense(
    defense_checkpoint: DefenseCheckpoint,
    eigenbasis: EigenBasis,
    embedder: EmbeddingModel,
    pair_protocol: PairProtocol,
    holdout_faces: list[FaceImage],
    adversarial_fgsm: AdversarialSet,
    adversarial_pgd: AdversarialSet,
    adversarial_adaptive_pgd: AdversarialSet,
    evaluation_params: dict,
) -> tuple[dict, pd.DataFrame, str]:
    """Clean and attacked protocols, each scored undefended and defended.

    Experiment ids are ``<clean|fgsm|pgd|adaptive>_<undefended|defended>``.

    Returns:
        tuple of (reports keyed by experiment id, FAR/FRR curves with an
        ``EXPERIMENT`` column, rendered EER table)
    """
    cfg = EvaluationConfig.model_validate(evaluation_params)
    defense = restore_defense(defense_checkpoint, eigenbasis)
    lookup = corpus_lookup(holdout_faces)
    attacks = {
        "clean": None,
        "fgsm": adversarial_fgsm,
        "pgd": adversarial_pgd,
        "adaptive": adversarial_adaptive_pgd,
    }
    reports = []
    for name, attack in attacks.items():
        for label, model in (("undefended", None), ("defended", defense)):
            reports.append(
                run_verification(
                    model,
                    embedder,
                    pair_protocol,
                    lookup,
                    attack=attack,
                    cfg=cfg,
                    experiment_id=f"{name}_{label}",
                )
            )
    curves = pd.concat(
        [report.curve.assign(EXPERIMENT=report.experiment_id) for report in reports],
        ignore_index=True,
    )
    table = render_table(reports)
    logger.info("Verification results:\n%s", table)
    return {report.experiment_id: report.to_dict() for report in reports}, curves, table


def evaluate_sticker(
    defense_checkpoint: DefenseCheckpoint,
    eigenbasis: EigenBasis,
    embedder: EmbeddingModel,
    sticker_attack: dict,
    evaluation_params: dict,
) -> dict:
    """Impersonation accuracy of the patched gallery with and without defense."""
    cfg = EvaluationConfig.model_validate(evaluation_params)
    defense = restore_defense(defense_checkpoint, eigenbasis)
    arrays = sticker_attack["arrays"]
    gallery = torch.from_numpy(arrays["gallery"])
    patched = torch.from_numpy(arrays["patched_gallery"])
    target = torch.from_numpy(arrays["target"])
    threshold = cfg.sticker_threshold
    report = {
        "threshold": threshold,
        "gallery_size": int(patched.shape[0]),
        "target_id": sticker_attack["metadata"].get("target_id"),
        "clean_undefended": sticker_accuracy(None, embedder, gallery, target, threshold, cfg),
        "undefended": sticker_accuracy(None, embedder, patched, target, threshold, cfg),
        "defended": sticker_accuracy(defense, embedder, patched, target, threshold, cfg),
    }
    logger.info(
        "Sticker accuracy at threshold %.2f: undefended %.3f, defended %.3f",
        threshold,
        report["undefended"],
        report["defended"],
    )
    return report
