"""Nodes training the toy recognition model the defense protects."""

from immune_face_defense.evaluation import ScoreSet, compute_eer
from immune_face_defense.ingest import FaceImage, PairProtocol, corpus_lookup
from immune_face_defense.recognition import (
    EmbedderConfig,
    EmbeddingModel,
    pair_scores,
    parameter_hash,
    train_toy_embedder,
)


def train_embedder(
    train_faces: list[FaceImage],
    holdout_faces: list[FaceImage],
    pair_protocol: PairProtocol,
    embedder_params: dict,
) -> tuple[EmbeddingModel, dict]:
    """Train until the hold-out EER target is met, then score the pair protocol.

    Returns:
        tuple of (frozen EmbeddingModel, summary with its clean protocol EER)
    """
    cfg = EmbedderConfig.model_validate(embedder_params)
    model = train_toy_embedder(train_faces, cfg, holdout=holdout_faces)
    positive, negative = pair_scores(model, pair_protocol, corpus_lookup(holdout_faces))
    eer, threshold = compute_eer(ScoreSet(positive, negative))
    summary = {
        "name": cfg.name,
        "architecture": cfg.architecture if isinstance(cfg.architecture, str) else "custom",
        "d_f": model.d_f,
        "n_parameters": sum(p.numel() for p in model.parameters()),
        "parameter_hash": parameter_hash(model),
        "protocol_eer": eer,
        "protocol_eer_threshold": threshold,
    }
    return model, summary
