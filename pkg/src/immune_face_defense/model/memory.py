"""Immune memory: prototypes of noise features, read by cosine addressing."""

import logging
from typing import Literal

import torch
from torch import nn

from immune_face_defense.errors import UndefinedCosineError

logger = logging.getLogger(__name__)

ReadMode = Literal["cosine", "softmax"]


class MemoryBank(nn.Module):
    """``d_m`` stored noise features of width ``d_n``.

    Rows are initialised from a seeded spherical Gaussian scaled to unit norm.
    They are a buffer, not parameters: the bank changes only through
    ``memory_update`` and the siamese moving average.

    Args:
        d_m: Number of memory items
        d_n: Width of every item
        epsilon: Decay of the nearest-item moving average, in ``(0, 1)``
        read_mode: ``"cosine"`` aggregates with raw cosine weights, ``"softmax"``
            normalises the weights first
        seed: Initialisation seed
    """

    def __init__(
        self,
        d_m: int,
        d_n: int,
        epsilon: float = 0.999,
        read_mode: ReadMode = "cosine",
        seed: int = 0,
    ) -> None:
        super().__init__()
        if not 0 < epsilon < 1:
            raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
        if read_mode not in ("cosine", "softmax"):
            raise ValueError(f"Unknown read_mode '{read_mode}'")
        generator = torch.Generator().manual_seed(seed)
        rows = torch.randn(d_m, d_n, generator=generator)
        self.register_buffer("items", rows / torch.linalg.vector_norm(rows, dim=1, keepdim=True))
        self.epsilon = epsilon
        self.read_mode = read_mode

    @property
    def d_m(self) -> int:
        return int(self.items.shape[0])

    @property
    def d_n(self) -> int:
        return int(self.items.shape[1])

    def forward(self, query: torch.Tensor) -> torch.Tensor:
        return memory_read(self, query)


def _row_norms(bank: MemoryBank) -> torch.Tensor:
    norms = torch.linalg.vector_norm(bank.items, dim=1)
    zero_rows = torch.nonzero(norms == 0).flatten()
    if zero_rows.numel():
        raise UndefinedCosineError(f"Memory row {int(zero_rows[0])} has zero norm")
    return norms


def memory_similarities(bank: MemoryBank, query: torch.Tensor) -> torch.Tensor:
    """Cosine between every memory row and the query (or a batch of queries)."""
    if query.shape[-1] != bank.d_n:
        raise ValueError(f"Query width {query.shape[-1]} does not match d_n={bank.d_n}")
    query_norm = torch.linalg.vector_norm(query, dim=-1, keepdim=True)
    if bool((query_norm == 0).any()):
        raise UndefinedCosineError("Memory query has zero norm")
    items = bank.items.to(query.dtype)
    return (query @ items.T) / (query_norm * _row_norms(bank).to(query.dtype))


def memory_read(bank: MemoryBank, query: torch.Tensor) -> torch.Tensor:
    """Soft-attention read ``sum_i r_i * m_i`` with ``r_i = cosine(m_i, query)``.

    In ``cosine`` mode the weights are used as they are, so they need not sum to
    one and can be negative. In ``softmax`` mode they are normalised first.
    """
    weights = memory_similarities(bank, query)
    if bank.read_mode == "softmax":
        weights = torch.softmax(weights, dim=-1)
    return weights @ bank.items.to(query.dtype)


@torch.no_grad()
def memory_update(bank: MemoryBank, f_n: torch.Tensor) -> int:
    """Blend the most similar row toward ``f_n`` in place.

    ``m_i* <- epsilon * m_i* + (1 - epsilon) * f_n`` with ``i*`` the row of
    highest cosine; ties resolve to the lowest index.

    Returns:
        The index of the updated row
    """
    similarities = memory_similarities(bank, f_n.detach().to(bank.items.dtype))
    # torch.argmax returns the first maximal index
    nearest = int(torch.argmax(similarities))
    row = bank.items[nearest]
    bank.items[nearest] = bank.epsilon * row + (1.0 - bank.epsilon) * f_n.to(row.dtype)
    logger.debug("Memory row %d updated (cosine %.4f)", nearest, float(similarities[nearest]))
    return nearest
