"""Clonal selection training of the defense and its checkpoints."""

from .checkpoint import (
    DefenseCheckpoint,
    capture_checkpoint,
    checkpoint_path,
    latest_checkpoint,
    load_checkpoint,
    restore_defense,
    restore_training,
    save_checkpoint,
)
from .clonal_trainer import (
    LOG_COLUMNS,
    TrainerConfig,
    TrainLogRecord,
    clone_antibodies,
    log_likelihood,
    make_optimizer,
    mask_log_likelihood,
    records_to_frame,
    run_training,
    sample_clone_masks,
    score_function_loss,
    siamese_loss,
    step_seed,
    train_step,
)

__all__ = [
    "LOG_COLUMNS",
    "DefenseCheckpoint",
    "TrainLogRecord",
    "TrainerConfig",
    "capture_checkpoint",
    "checkpoint_path",
    "clone_antibodies",
    "latest_checkpoint",
    "load_checkpoint",
    "log_likelihood",
    "make_optimizer",
    "mask_log_likelihood",
    "records_to_frame",
    "restore_defense",
    "restore_training",
    "run_training",
    "sample_clone_masks",
    "save_checkpoint",
    "score_function_loss",
    "siamese_loss",
    "step_seed",
    "train_step",
]
