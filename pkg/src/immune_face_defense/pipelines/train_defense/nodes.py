"""Nodes training the defense by clonal selection."""

import logging

import pandas as pd
import torch

from immune_face_defense.config import DefenseConfig, RunConfig, TrainerConfig, merge_overrides
from immune_face_defense.eigen import EigenBasis
from immune_face_defense.ingest import FaceImage, stack_pixels
from immune_face_defense.model import build_defense
from immune_face_defense.recognition import EmbeddingModel
from immune_face_defense.training import (
    DefenseCheckpoint,
    capture_checkpoint,
    records_to_frame,
    run_training,
)

logger = logging.getLogger(__name__)


def resolve_run(
    defense_params: dict, trainer_params: dict, run_params: dict
) -> tuple[RunConfig, DefenseConfig, TrainerConfig]:
    """Apply a run's overrides to the shared ``defense`` and ``trainer`` groups."""
    run = RunConfig.model_validate(run_params)
    defense_cfg = DefenseConfig.model_validate(
        merge_overrides(defense_params, run.overrides.get("defense"))
    )
    trainer_cfg = TrainerConfig.model_validate(
        merge_overrides(trainer_params, run.overrides.get("trainer"))
    )
    return run, defense_cfg, trainer_cfg


def train_defense(
    eigenbasis: EigenBasis,
    train_faces: list[FaceImage],
    embedder: EmbeddingModel,
    defense_params: dict,
    trainer_params: dict,
    run_params: dict,
) -> tuple[DefenseCheckpoint, pd.DataFrame]:
    """Warm-up then self-supervised adversarial training of a fresh defense.

    Intermediate checkpoints go to ``run.checkpoint_dir``; an interrupted run
    resumes from the latest one.

    Returns:
        tuple of (final defense checkpoint, per-step training log)
    """
    run, defense_cfg, trainer_cfg = resolve_run(defense_params, trainer_params, run_params)
    logger.info("Training defense run '%s'", run.name)
    state = build_defense(eigenbasis, defense_cfg, epsilon=trainer_cfg.epsilon)
    corpus = torch.from_numpy(stack_pixels(train_faces)).to(torch.float32)
    state, records = run_training(
        state,
        corpus,
        embedder,
        trainer_cfg,
        defense_cfg,
        checkpoint_dir=run.checkpoint_dir,
        resume=run.resume,
    )
    aborted = sum(record.aborted for record in records)
    if aborted:
        logger.warning("Run '%s' aborted %d of %d steps", run.name, aborted, len(records))
    checkpoint = capture_checkpoint(state, defense_cfg, trainer_cfg.epsilon)
    return checkpoint, records_to_frame(records)
