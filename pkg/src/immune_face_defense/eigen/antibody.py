"""Antibodies: eigenvector subsets, their application, affinity and analytics."""

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np
import torch
from pydantic import BaseModel, ConfigDict, Field

from immune_face_defense.errors import NonFiniteError
from immune_face_defense.similarity import cosine_similarity

from .eigenbasis import EigenBasis, ImageLike, flatten_images, weighted_projection

logger = logging.getLogger(__name__)

Embedder = Callable[[torch.Tensor], torch.Tensor]


class AffinityConfig(BaseModel):
    """Weights of the affinity score.

    ``lambda1 * cosine - lambda2 * pixel_l2 - lambda3 * |a|``
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    lambda1: float = Field(8.0, ge=0)
    lambda2: float = Field(1.0, ge=0)
    lambda3: float = Field(0.003, ge=0)


@dataclass(frozen=True, eq=False)
class Antibody:
    """Bitmask over the ``d_e`` eigenvectors of a basis.

    ``selected[i]`` is true when eigenvector ``i`` is kept. An empty mask is a
    valid but degenerate antibody; applying it yields the mean face.
    """

    selected: np.ndarray

    def __post_init__(self) -> None:
        mask = np.asarray(self.selected)
        if mask.ndim != 1:
            raise ValueError(f"Antibody mask must be 1-D, got shape {mask.shape}")
        mask = mask.astype(bool, copy=True)
        mask.setflags(write=False)
        object.__setattr__(self, "selected", mask)

    @classmethod
    def from_indices(cls, indices: Sequence[int], d_e: int) -> "Antibody":
        mask = np.zeros(d_e, dtype=bool)
        for index in indices:
            if not 0 <= index < d_e:
                raise ValueError(f"Eigenvector index {index} out of range for d_e={d_e}")
            mask[index] = True
        return cls(mask)

    @classmethod
    def full(cls, d_e: int) -> "Antibody":
        return cls(np.ones(d_e, dtype=bool))

    @classmethod
    def empty(cls, d_e: int) -> "Antibody":
        return cls(np.zeros(d_e, dtype=bool))

    @classmethod
    def from_tensor(cls, mask: torch.Tensor) -> "Antibody":
        return cls(mask.detach().cpu().numpy() > 0.5)

    @property
    def d_e(self) -> int:
        return int(self.selected.shape[0])

    @property
    def cardinality(self) -> int:
        return int(np.count_nonzero(self.selected))

    @property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.selected)

    @property
    def is_degenerate(self) -> bool:
        return self.cardinality == 0

    def as_tensor(self, dtype: torch.dtype = torch.float64) -> torch.Tensor:
        return torch.from_numpy(self.selected.astype(np.float64)).to(dtype)

    def to_dict(self) -> dict:
        """Hex-encoded bitmask (little bit order) plus ``d_e``."""
        packed = np.packbits(self.selected, bitorder="little")
        return {"d_e": self.d_e, "mask": packed.tobytes().hex()}

    @classmethod
    def from_dict(cls, payload: dict) -> "Antibody":
        d_e = int(payload["d_e"])
        packed = np.frombuffer(bytes.fromhex(payload["mask"]), dtype=np.uint8)
        return cls(np.unpackbits(packed, bitorder="little", count=d_e).astype(bool))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Antibody):
            return NotImplemented
        return np.array_equal(self.selected, other.selected)

    def __hash__(self) -> int:
        return hash((self.d_e, self.selected.tobytes()))

    def __repr__(self) -> str:
        return f"Antibody(d_e={self.d_e}, cardinality={self.cardinality})"


def _check_bound(antibody: Antibody, basis: EigenBasis) -> None:
    if antibody.d_e != basis.d_e:
        raise ValueError(
            f"Antibody bound to d_e={antibody.d_e}, basis has d_e={basis.d_e}"
        )


def apply_antibody(image: ImageLike, antibody: Antibody, basis: EigenBasis) -> torch.Tensor:
    """Keep only the components of ``image`` along the antibody's eigenvectors.

    Args:
        image: ``H x W`` raster (or a stack of rasters)
        antibody: Mask bound to ``basis``
        basis: Fitted eigenbasis

    Returns:
        Unclamped float64 reconstruction with the input's shape

    Example:
        >>> restored = apply_antibody(face, Antibody.full(basis.d_e), basis)
    """
    _check_bound(antibody, basis)
    flat = flatten_images(image).to(basis.vectors.dtype)
    if flat.shape[-1] != basis.d:
        raise ValueError(f"Image has {flat.shape[-1]} pixels, basis expects {basis.d}")
    if antibody.is_degenerate:
        logger.debug("Applying a degenerate (empty) antibody; result is the mean face")
    images = flat.reshape(*flat.shape[:-1], *basis.image_shape)
    return weighted_projection(
        images, basis.mean, basis.vectors, antibody.as_tensor(basis.vectors.dtype)
    )


def affinity_scores(
    reconstructions: torch.Tensor,
    clean: torch.Tensor,
    cardinalities: torch.Tensor,
    embedder: Embedder,
    cfg: AffinityConfig,
    clean_embedding: torch.Tensor | None = None,
) -> torch.Tensor:
    """Affinity of a stack of reconstructions against one clean image.

    Args:
        reconstructions: ``K x H x W`` unclamped reconstructions
        clean: ``H x W`` clean image the reconstructions are compared with
        cardinalities: ``K`` antibody sizes
        embedder: Recognition model mapping ``B x H x W`` to ``B x d_f``
        cfg: Affinity weights
        clean_embedding: Precomputed ``F(clean)``, computed when omitted

    Returns:
        ``K`` affinities
    """
    if reconstructions.shape[-2:] != clean.shape[-2:]:
        raise ValueError(
            f"Reconstruction shape {tuple(reconstructions.shape[-2:])} does not match "
            f"clean shape {tuple(clean.shape[-2:])}"
        )
    if clean_embedding is None:
        clean_embedding = embedder(clean.unsqueeze(0))[0]
    features = embedder(reconstructions)
    fidelity = cosine_similarity(features, clean_embedding.unsqueeze(0)).to(clean.dtype)
    distortion = torch.linalg.vector_norm(
        (reconstructions - clean).flatten(start_dim=1), dim=1
    )
    return (
        cfg.lambda1 * fidelity
        - cfg.lambda2 * distortion
        - cfg.lambda3 * cardinalities.to(clean.dtype)
    )


def affinity(
    x_recon: ImageLike,
    x_clean: ImageLike,
    antibody: Antibody,
    embedder: Embedder,
    cfg: AffinityConfig,
) -> float:
    """Affinity of one antibody's reconstruction against the clean image."""
    recon = flatten_images(x_recon)
    clean = flatten_images(x_clean)
    if recon.shape != clean.shape:
        raise ValueError(
            f"x_recon has {recon.shape[-1]} pixels, x_clean has {clean.shape[-1]}"
        )
    image_shape = _image_shape(x_clean)
    with torch.no_grad():
        scores = affinity_scores(
            recon.reshape(1, *image_shape),
            clean.reshape(image_shape),
            torch.tensor([antibody.cardinality]),
            embedder,
            cfg,
        )
    return float(scores[0])


def _image_shape(image: ImageLike) -> tuple[int, int]:
    shape = image.shape if not hasattr(image, "pixels") else image.pixels.shape
    return int(shape[-2]), int(shape[-1])


def specificity_J(a: Antibody, b: Antibody) -> int:
    """Number of eigenvectors present in exactly one of the two antibodies."""
    if a.d_e != b.d_e:
        raise ValueError(f"Antibody lengths differ: {a.d_e} != {b.d_e}")
    return int(np.count_nonzero(a.selected ^ b.selected))


def specificity_matrix(masks: np.ndarray) -> np.ndarray:
    """Pairwise symmetric-difference counts of an ``n x d_e`` 0/1 matrix."""
    counts = masks.astype(np.int64)
    shared = counts @ counts.T
    sizes = counts.sum(axis=1)
    return sizes[:, None] + sizes[None, :] - 2 * shared


def specificity_V(antibodies: Sequence[Antibody]) -> float:
    """Mean pairwise specificity over all ordered distinct pairs."""
    n = len(antibodies)
    if n < 2:
        raise ValueError(f"specificity_V needs at least 2 antibodies, got {n}")
    lengths = {antibody.d_e for antibody in antibodies}
    if len(lengths) > 1:
        raise ValueError(f"Antibody lengths differ: {sorted(lengths)}")
    distances = specificity_matrix(np.stack([ab.selected for ab in antibodies]))
    return float(distances.sum()) / (n * (n - 1))


def mutation_probability(f_e: torch.Tensor | np.ndarray | Sequence[float]) -> float:
    """Mean chance that a fresh Bernoulli draw flips the majority decision.

    ``mean(0.5 - |f_e - 0.5|)`` over the components of ``f_e``.
    """
    probabilities = np.asarray(
        f_e.detach().cpu().numpy() if isinstance(f_e, torch.Tensor) else f_e,
        dtype=np.float64,
    )
    if probabilities.size == 0:
        raise ValueError("mutation_probability needs at least one component")
    if not np.isfinite(probabilities).all():
        raise NonFiniteError("Selection probabilities contain non-finite values")
    outside = np.flatnonzero((probabilities < 0) | (probabilities > 1))
    if outside.size:
        raise ValueError(
            f"Selection probability {probabilities.flat[outside[0]]} at index "
            f"{outside[0]} outside [0, 1]"
        )
    return float(np.mean(0.5 - np.abs(probabilities - 0.5)))


def sparsity(antibody: Antibody) -> int:
    """Number of eigenvectors an antibody keeps."""
    return antibody.cardinality
