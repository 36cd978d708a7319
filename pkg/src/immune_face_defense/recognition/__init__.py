"""The protected recognition model and its toy trainer."""

from .embedder import (
    EmbedderConfig,
    EmbeddingModel,
    cosine,
    embed,
    freeze,
    pair_scores,
    parameter_hash,
    train_toy_embedder,
)

__all__ = [
    "EmbedderConfig",
    "EmbeddingModel",
    "cosine",
    "embed",
    "freeze",
    "pair_scores",
    "parameter_hash",
    "train_toy_embedder",
]
