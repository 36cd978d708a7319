"""Eigenvector basis of a face corpus in pixel space.

The basis is fitted once on flattened ``[0, 1]`` grayscale rasters and is
immutable afterwards. Projection and reconstruction through eigenvector subsets
are the only way images move through the defense: an antibody keeps the
components of the image along its selected eigenvectors and drops the rest.

Conventions:
    - population covariance (divide by N) of the centred images
    - eigenvalues sorted descending, ties kept in solver order (stable sort)
    - every eigenvector is sign-normalised so its largest-magnitude entry is
      positive
    - reconstructions are never clamped inside the pipeline; ``clamp_to_unit``
      is applied only when images are exported
"""

import hashlib
import logging
from collections.abc import Sequence
from dataclasses import dataclass
from functools import cached_property
from typing import TYPE_CHECKING

import numpy as np
import torch

from immune_face_defense.ingest import FaceImage

if TYPE_CHECKING:
    from .antibody import Antibody

logger = logging.getLogger(__name__)

ImageLike = FaceImage | np.ndarray | torch.Tensor


@dataclass(frozen=True, eq=False)
class EigenBasis:
    """Mean face plus orthonormal eigenvectors with descending eigenvalues.

    Args:
        mean: Flat mean image, length ``d = H * W``
        vectors: ``d x d_e`` matrix with orthonormal columns
        eigenvalues: Length ``d_e``, non-negative, descending
        image_shape: ``(H, W)``
        total_variance: Sum of all eigenvalues of the covariance (retained or not)
        covariance: Covariance normalisation used when fitting
        identifier: Content hash; derived from the float32 arrays when empty
    """

    mean: torch.Tensor
    vectors: torch.Tensor
    eigenvalues: torch.Tensor
    image_shape: tuple[int, int]
    total_variance: float
    covariance: str = "population"
    identifier: str = ""

    def __post_init__(self) -> None:
        if self.vectors.shape != (self.d, self.eigenvalues.shape[0]):
            raise ValueError(
                f"vectors shape {tuple(self.vectors.shape)} does not match "
                f"d={self.d}, d_e={self.eigenvalues.shape[0]}"
            )
        if self.d_e > self.d:
            raise ValueError(f"d_e={self.d_e} exceeds d={self.d}")
        if not self.identifier:
            object.__setattr__(self, "identifier", basis_identifier(self))

    @property
    def d(self) -> int:
        return int(self.mean.shape[0])

    @property
    def d_e(self) -> int:
        return int(self.eigenvalues.shape[0])

    @cached_property
    def float32_view(self) -> tuple[torch.Tensor, torch.Tensor]:
        """``(mean, vectors)`` cast once to float32 for the training pipeline."""
        return self.mean.to(torch.float32), self.vectors.to(torch.float32)

    def energy_ratio(self, n_components: int | None = None) -> float:
        """Share of total variance carried by the first ``n_components``."""
        n = self.d_e if n_components is None else n_components
        if not 0 <= n <= self.d_e:
            raise ValueError(f"n_components={n} outside [0, {self.d_e}]")
        if self.total_variance <= 0:
            return 1.0
        return float(self.eigenvalues[:n].sum()) / self.total_variance

    def orthonormality_error(self) -> float:
        gram = self.vectors.T @ self.vectors
        identity = torch.eye(self.d_e, dtype=gram.dtype)
        return float((gram - identity).abs().max()) if self.d_e else 0.0


def basis_identifier(basis: EigenBasis) -> str:
    digest = hashlib.sha256()
    for array in (basis.mean, basis.vectors, basis.eigenvalues):
        digest.update(array.detach().cpu().numpy().astype("<f4").tobytes())
    return digest.hexdigest()[:16]


def flatten_images(images: ImageLike | Sequence[FaceImage]) -> torch.Tensor:
    """Turn one image or a stack into a ``(..., d)`` float64 tensor."""
    if isinstance(images, FaceImage):
        pixels = torch.from_numpy(np.asarray(images.pixels, dtype=np.float64))
    elif isinstance(images, torch.Tensor):
        pixels = images
    elif isinstance(images, np.ndarray):
        pixels = torch.from_numpy(images.astype(np.float64, copy=False))
    else:
        pixels = torch.from_numpy(
            np.stack([np.asarray(img.pixels, dtype=np.float64) for img in images])
        )
    if pixels.ndim < 2:
        raise ValueError(f"Expected an image raster, got shape {tuple(pixels.shape)}")
    return pixels.reshape(*pixels.shape[:-2], -1)


def _sign_normalise(vectors: np.ndarray) -> np.ndarray:
    if vectors.size == 0:
        return vectors
    pivots = np.abs(vectors).argmax(axis=0)
    signs = np.sign(vectors[pivots, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def _orthonormal_polish(vectors: np.ndarray) -> np.ndarray:
    """QR re-orthonormalisation keeping every column's direction."""
    if vectors.shape[1] == 0:
        return vectors
    q, r = np.linalg.qr(vectors)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def _orthonormal_complement(vectors: np.ndarray, count: int, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    extra = rng.standard_normal((vectors.shape[0], count))
    for _ in range(2):
        extra -= vectors @ (vectors.T @ extra)
    return _orthonormal_polish(extra)


def fit_eigenbasis(corpus: Sequence[FaceImage] | np.ndarray, d_e: int) -> EigenBasis:
    """Fit the principal components of a corpus of equally sized rasters.

    When the corpus is smaller than the pixel dimension the eigenproblem is solved
    on the ``N x N`` Gram matrix and lifted back to pixel space; otherwise the
    ``d x d`` covariance is decomposed directly. Components beyond the numerical
    rank are completed with a seeded orthonormal complement and eigenvalue 0.

    Args:
        corpus: FaceImages or an ``N x H x W`` array
        d_e: Number of eigenvectors to retain

    Returns:
        EigenBasis

    Raises:
        ValueError: If the corpus has fewer than 2 images or ``d_e`` exceeds
            ``min(d, N)``
    """
    if isinstance(corpus, np.ndarray):
        stack = corpus.astype(np.float64, copy=False)
    else:
        stack = np.stack([np.asarray(img.pixels, dtype=np.float64) for img in corpus])
    if stack.ndim != 3:
        raise ValueError(f"Expected N x H x W images, got shape {stack.shape}")
    n_images = stack.shape[0]
    image_shape = (int(stack.shape[1]), int(stack.shape[2]))
    flat = stack.reshape(n_images, -1)
    d = flat.shape[1]
    if n_images < 2:
        raise ValueError(f"Corpus needs at least 2 images, got {n_images}")
    achievable = min(d, n_images)
    if not 1 <= d_e <= achievable:
        raise ValueError(
            f"d_e={d_e} exceeds achievable rank {achievable} (min(d={d}, N={n_images}))"
        )

    mean = flat.mean(axis=0)
    centred = flat - mean
    total_variance = float((centred**2).sum() / n_images)

    if n_images < d:
        logger.info("Fitting eigenbasis through the %dx%d Gram matrix", n_images, n_images)
        gram = centred @ centred.T / n_images
        values, small_vectors = np.linalg.eigh(gram)
        order = np.argsort(-values, kind="stable")
        values, small_vectors = values[order], small_vectors[:, order]
        tol = max(n_images, d) * np.finfo(np.float64).eps * max(values[0], 0.0)
        rank = int(np.count_nonzero(values > tol)) if values[0] > 0 else 0
        take = min(d_e, rank)
        vectors = centred.T @ small_vectors[:, :take] / np.sqrt(n_images * values[:take])
        vectors = _orthonormal_polish(vectors)
        values = values[:take]
    else:
        logger.info("Fitting eigenbasis through the %dx%d covariance", d, d)
        covariance = centred.T @ centred / n_images
        values, vectors = np.linalg.eigh(covariance)
        order = np.argsort(-values, kind="stable")[:d_e]
        values, vectors = values[order], vectors[:, order]
        take = d_e

    if take < d_e:
        logger.warning(
            "Corpus rank %d below d_e=%d; completing with zero-variance directions",
            take,
            d_e,
        )
        vectors = np.concatenate(
            [vectors, _orthonormal_complement(vectors, d_e - take)], axis=1
        )
        values = np.concatenate([values, np.zeros(d_e - take)])

    basis = EigenBasis(
        mean=torch.from_numpy(mean),
        vectors=torch.from_numpy(_sign_normalise(vectors).copy()),
        eigenvalues=torch.from_numpy(np.clip(values, 0.0, None).copy()),
        image_shape=image_shape,
        total_variance=total_variance,
    )
    logger.info(
        "Eigenbasis %s: d=%d, d_e=%d, retained energy %.4f",
        basis.identifier,
        basis.d,
        basis.d_e,
        basis.energy_ratio(),
    )
    return basis


def subset_indices(subset: "Antibody | Sequence[int]", d_e: int) -> torch.Tensor:
    """Resolve an antibody or an index list into a validated index tensor."""
    from .antibody import Antibody

    if isinstance(subset, Antibody):
        if subset.d_e != d_e:
            raise ValueError(
                f"Antibody bound to d_e={subset.d_e}, basis has d_e={d_e}"
            )
        return torch.from_numpy(subset.indices)
    indices = torch.as_tensor(list(subset), dtype=torch.long)
    for index in indices.tolist():
        if not 0 <= index < d_e:
            raise ValueError(f"Eigenvector index {index} out of range for d_e={d_e}")
    return indices


def project(
    image: ImageLike, basis: EigenBasis, subset: "Antibody | Sequence[int]"
) -> torch.Tensor:
    """Coefficients of an image along a subset of eigenvectors.

    ``alpha[j] = <e_subset[j], flatten(image) - mean>``
    """
    indices = subset_indices(subset, basis.d_e)
    flat = flatten_images(image).to(basis.vectors.dtype)
    if flat.shape[-1] != basis.d:
        raise ValueError(f"Image has {flat.shape[-1]} pixels, basis expects {basis.d}")
    return (flat - basis.mean) @ basis.vectors[:, indices]


def reconstruct(
    alpha: torch.Tensor, basis: EigenBasis, subset: "Antibody | Sequence[int]"
) -> torch.Tensor:
    """Image ``sum_j alpha[j] * e_subset[j] + mean`` reshaped to ``H x W``.

    The result is not clamped; see ``clamp_to_unit``.
    """
    indices = subset_indices(subset, basis.d_e)
    alpha = torch.as_tensor(alpha, dtype=basis.vectors.dtype)
    if alpha.shape[-1] != indices.shape[0]:
        raise ValueError(
            f"Got {alpha.shape[-1]} coefficients for a subset of {indices.shape[0]}"
        )
    flat = alpha @ basis.vectors[:, indices].T + basis.mean
    return flat.reshape(*flat.shape[:-1], *basis.image_shape)


def weighted_projection(
    images: torch.Tensor,
    mean: torch.Tensor,
    vectors: torch.Tensor,
    weights: torch.Tensor,
) -> torch.Tensor:
    """``E diag(w) E^T (x - mean) + mean`` for a stack of images.

    With a 0/1 ``weights`` mask this is the antibody reconstruction; with
    selection probabilities it is the continuous relaxation used for gradients.

    Args:
        images: ``(..., H, W)``
        mean: Flat mean, length ``d``
        vectors: ``d x d_e``
        weights: ``(..., d_e)`` broadcastable against the image batch

    Returns:
        Tensor shaped like ``images``
    """
    shape = images.shape
    flat = images.reshape(*shape[:-2], -1)
    coefficients = (flat - mean) @ vectors
    return ((coefficients * weights) @ vectors.T + mean).reshape(shape)


def full_projection(images: torch.Tensor, basis: EigenBasis) -> torch.Tensor:
    """Projection through every retained eigenvector (the full antibody)."""
    mean, vectors = basis.mean, basis.vectors
    if images.dtype == torch.float32:
        mean, vectors = basis.float32_view
    weights = torch.ones(basis.d_e, dtype=vectors.dtype)
    return weighted_projection(images, mean, vectors, weights)


def clamp_to_unit(pixels: torch.Tensor | np.ndarray) -> tuple[np.ndarray, bool]:
    """Clamp a raster to ``[0, 1]`` for export; the flag tells whether it changed."""
    array = (
        pixels.detach().cpu().numpy() if isinstance(pixels, torch.Tensor) else pixels
    )
    clamped = np.clip(array, 0.0, 1.0)
    return clamped, bool(np.any(clamped != array))


def basis_to_arrays(basis: EigenBasis) -> tuple[dict[str, np.ndarray], dict]:
    """Arrays and manifest metadata of a basis for float32 persistence."""
    arrays = {
        "mean": basis.mean.numpy(),
        "vectors": basis.vectors.numpy(),
        "eigenvalues": basis.eigenvalues.numpy(),
    }
    metadata = {
        "d": basis.d,
        "d_e": basis.d_e,
        "image_shape": list(basis.image_shape),
        "total_variance": basis.total_variance,
        "covariance": basis.covariance,
        "identifier": basis.identifier,
        "energy_ratio": basis.energy_ratio(),
    }
    return arrays, metadata


def basis_from_arrays(arrays: dict[str, np.ndarray], metadata: dict) -> EigenBasis:
    """Rebuild a basis from float32 arrays, re-orthonormalised in float64.

    The identifier recorded at save time is kept, so checkpoints bound to the
    basis still match after a reload.
    """
    vectors = _orthonormal_polish(arrays["vectors"].astype(np.float64))
    return EigenBasis(
        mean=torch.from_numpy(arrays["mean"].astype(np.float64)),
        vectors=torch.from_numpy(np.ascontiguousarray(vectors)),
        eigenvalues=torch.from_numpy(np.clip(arrays["eigenvalues"].astype(np.float64), 0.0, None)),
        image_shape=tuple(metadata["image_shape"]),
        total_variance=float(metadata["total_variance"]),
        covariance=metadata.get("covariance", "population"),
        identifier=metadata["identifier"],
    )
