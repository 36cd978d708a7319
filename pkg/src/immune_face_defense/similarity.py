"""Cosine similarity shared by affinity scoring, attacks and verification."""

import torch

from immune_face_defense.errors import UndefinedCosineError


def cosine_similarity(first: torch.Tensor, second: torch.Tensor) -> torch.Tensor:
    """Cosine along the last axis, broadcasting leading axes.

    The result is not clipped so gradients stay exact; callers that report
    scores clip to ``[-1, 1]`` themselves.

    Raises:
        UndefinedCosineError: If any vector has zero norm
    """
    first_norm = torch.linalg.vector_norm(first, dim=-1)
    second_norm = torch.linalg.vector_norm(second, dim=-1)
    if bool((first_norm == 0).any()) or bool((second_norm == 0).any()):
        raise UndefinedCosineError("undefined cosine: zero-norm embedding")
    return (first * second).sum(dim=-1) / (first_norm * second_norm)
