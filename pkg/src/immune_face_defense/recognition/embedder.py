"""Recognition model ``F``: a frozen image-to-embedding map compared by cosine.

Any ``EmbeddingModel`` can be protected by the defense without retraining it.
``train_toy_embedder`` produces small ones so the whole pipeline runs on a desk:
a declarative network trained as an identity classifier with an additive cosine
margin, stopped as soon as its clean verification EER on held-out pairs reaches
the configured target.
"""

import hashlib
import logging
from collections.abc import Sequence

import numpy as np
import torch
import torch.nn.functional as F
from pydantic import BaseModel, ConfigDict, Field
from torch import nn

from immune_face_defense.errors import CorpusError, EmbedderTrainingError
from immune_face_defense.ingest import (
    FaceImage,
    PairProtocol,
    build_pairs,
    corpus_lookup,
    split_corpus,
    stack_pixels,
)
from immune_face_defense.model.neuralcore import ImageNet, resolve_architecture
from immune_face_defense.similarity import cosine_similarity

logger = logging.getLogger(__name__)


class EmbedderConfig(BaseModel):
    """Architecture and training budget of a toy recognition model."""

    model_config = ConfigDict(extra="forbid")

    name: str = "toy_cnn"
    architecture: str | list[dict] = "conv_deep"
    d_f: int = Field(64, ge=1)
    margin: float = Field(0.35, ge=0)
    scale: float = Field(16.0, gt=0)
    learning_rate: float = Field(1e-3, gt=0)
    batch_size: int = Field(32, ge=1)
    max_steps: int = Field(3000, ge=1)
    eval_every: int = Field(100, ge=1)
    target_eer: float = Field(0.05, ge=0, le=1)
    holdout_per_identity: int = Field(2, ge=2)
    eval_pairs: int = Field(400, ge=2)
    seed: int = 0


class EmbeddingModel(ImageNet):
    """A named image network whose output is the embedding.

    Args:
        name: Registry name, e.g. ``toy_cnn``
        architecture: Shipped architecture name or explicit layer list
        input_shape: ``(H, W)``
        d_f: Embedding width
        seed: Initialisation seed
    """

    def __init__(
        self,
        name: str,
        architecture: str | Sequence[dict],
        input_shape: tuple[int, int],
        d_f: int,
        seed: int = 0,
    ) -> None:
        super().__init__(resolve_architecture(architecture, d_f), input_shape, seed=seed)
        if self.output_dim != d_f:
            raise ValueError(f"Architecture emits {self.output_dim} features, d_f={d_f}")
        self.name = name

    @property
    def d_f(self) -> int:
        return self.output_dim

    @classmethod
    def from_config(cls, cfg: EmbedderConfig, input_shape: tuple[int, int]) -> "EmbeddingModel":
        return cls(cfg.name, cfg.architecture, input_shape, cfg.d_f, seed=cfg.seed)


def embed(model: EmbeddingModel, image: torch.Tensor | np.ndarray | FaceImage) -> torch.Tensor:
    """Embedding ``F(x)`` of one image or a batch."""
    if isinstance(image, FaceImage):
        image = image.pixels
    if isinstance(image, np.ndarray):
        image = torch.from_numpy(image)
    return model(image)


def cosine(first: torch.Tensor, second: torch.Tensor) -> float:
    """Cosine similarity of two embeddings, clipped to ``[-1, 1]``."""
    return float(cosine_similarity(first, second).clamp(-1.0, 1.0))


def freeze(model: nn.Module) -> nn.Module:
    model.requires_grad_(False)
    model.eval()
    return model


def parameter_hash(model: nn.Module) -> str:
    """SHA-256 over the float32 parameters and buffers, in name order."""
    digest = hashlib.sha256()
    for name, tensor in sorted(model.state_dict().items()):
        digest.update(name.encode())
        digest.update(tensor.detach().cpu().numpy().astype("<f4").tobytes())
    return digest.hexdigest()


@torch.no_grad()
def pair_scores(model: nn.Module, protocol: PairProtocol, lookup: dict[str, FaceImage]) -> tuple[np.ndarray, np.ndarray]:
    """Clean cosine scores of the positive and negative pairs of a protocol."""
    ids = sorted(set(protocol.pairs["IMAGE_ID_1"]) | set(protocol.pairs["IMAGE_ID_2"]))
    if not ids:
        return np.empty(0), np.empty(0)
    batch = torch.from_numpy(np.stack([lookup[i].pixels for i in ids]))
    features = dict(zip(ids, model(batch)))
    scores = np.array(
        [
            float(cosine_similarity(features[a], features[b]).clamp(-1.0, 1.0))
            for a, b in zip(protocol.pairs["IMAGE_ID_1"], protocol.pairs["IMAGE_ID_2"])
        ]
    )
    positive = protocol.pairs["IS_POSITIVE"].to_numpy(dtype=bool)
    return scores[positive], scores[~positive]


def _margin_logits(
    features: torch.Tensor,
    class_weights: torch.Tensor,
    labels: torch.Tensor,
    margin: float,
    scale: float,
) -> torch.Tensor:
    cosines = F.normalize(features, dim=1) @ F.normalize(class_weights, dim=1).T
    return scale * (cosines - margin * F.one_hot(labels, cosines.shape[1]))


def train_toy_embedder(
    corpus: Sequence[FaceImage],
    config: EmbedderConfig,
    holdout: Sequence[FaceImage] | None = None,
) -> EmbeddingModel:
    """Train a toy recognition model until its held-out EER meets the target.

    Args:
        corpus: Labelled training images
        config: Architecture, optimiser and stopping settings
        holdout: Images for the verification check; when omitted,
            ``holdout_per_identity`` images per identity are split off ``corpus``

    Returns:
        The frozen EmbeddingModel

    Raises:
        CorpusError: If the corpus has fewer than 2 identities or the holdout
            yields no positive or no negative pairs
        EmbedderTrainingError: If the target EER is not reached within
            ``max_steps``; carries the best EER seen
    """
    from immune_face_defense.evaluation.metrics import ScoreSet, compute_eer

    identities = sorted({image.identity_label for image in corpus if image.identity_label is not None})
    if len(identities) < 2:
        raise CorpusError(f"Toy embedder needs ≥2 identities, corpus has {len(identities)}")
    if holdout is None:
        corpus, holdout = split_corpus(corpus, config.holdout_per_identity, seed=config.seed)
    counts: dict[str | None, int] = {}
    for image in holdout:
        counts[image.identity_label] = counts.get(image.identity_label, 0) + 1
    same_identity = sum(n * (n - 1) // 2 for n in counts.values())
    n_pos = min(config.eval_pairs // 2, same_identity)
    n_neg = min(config.eval_pairs // 2, len(holdout) * (len(holdout) - 1) // 2 - same_identity)
    if n_pos == 0 or n_neg == 0:
        raise CorpusError(
            f"Embedder holdout of {len(holdout)} images yields {n_pos} positive and "
            f"{n_neg} negative pairs; both sides need at least one"
        )
    protocol = build_pairs(holdout, n_pos, n_neg, seed=config.seed)
    lookup = corpus_lookup(holdout)

    labels = torch.tensor([identities.index(image.identity_label) for image in corpus])
    images = torch.from_numpy(stack_pixels(corpus)).to(torch.float32)
    model = EmbeddingModel.from_config(config, tuple(images.shape[-2:]))
    generator = torch.Generator().manual_seed(config.seed)
    class_weights = nn.Parameter(
        torch.randn(len(identities), config.d_f, generator=generator)
    )
    optimizer = torch.optim.Adam(
        [*model.parameters(), class_weights], lr=config.learning_rate
    )
    logger.info(
        "Training embedder '%s' on %d images of %d identities (target EER %.3f)",
        config.name,
        len(corpus),
        len(identities),
        config.target_eer,
    )

    best_eer = 1.0
    for step in range(1, config.max_steps + 1):
        model.train()
        batch = torch.randint(len(corpus), (config.batch_size,), generator=generator)
        logits = _margin_logits(
            model(images[batch]), class_weights, labels[batch], config.margin, config.scale
        )
        loss = F.cross_entropy(logits, labels[batch])
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()

        if step % config.eval_every == 0 or step == config.max_steps:
            model.eval()
            positive, negative = pair_scores(model, protocol, lookup)
            eer, _ = compute_eer(ScoreSet(positive, negative))
            best_eer = min(best_eer, eer)
            logger.info("Embedder step %d: loss %.4f, held-out EER %.4f", step, float(loss), eer)
            if eer <= config.target_eer:
                logger.info("Embedder '%s' reached EER %.4f at step %d", config.name, eer, step)
                return freeze(model)

    raise EmbedderTrainingError(
        f"Embedder '{config.name}' did not reach EER {config.target_eer:.3f} within "
        f"{config.max_steps} steps; best EER {best_eer:.4f}",
        best_eer=best_eer,
    )
