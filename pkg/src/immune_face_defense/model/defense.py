"""The defense model: analyzer, memory, selection head and antibody projection.

An input image is analysed into a noise feature, refined by the memory bank and
turned into per-eigenvector selection probabilities. Three inference modes turn
the probabilities into a purified image:

- ``map``: keep eigenvector ``i`` when ``f_e[i] >= 0.5`` (evaluation default)
- ``sampled``: draw a seeded Bernoulli mask from ``f_e``
- ``soft``: weight every component by ``f_e`` instead of masking, a linear
  relaxation that agrees with ``map`` on 0/1 probabilities and lets gradients
  reach the input pixels
"""

import copy
import logging
from dataclasses import dataclass
from typing import Literal

import torch
from pydantic import BaseModel, ConfigDict, Field
from torch import nn

from immune_face_defense.eigen import Antibody, EigenBasis, weighted_projection

from .memory import MemoryBank, memory_read
from .neuralcore import AnalyzerNet, SelectionHead, resolve_architecture

logger = logging.getLogger(__name__)

Phase = Literal["warmup", "adversarial"]
DefenseMode = Literal["map", "sampled", "soft"]


class DefenseConfig(BaseModel):
    """Dimensions and switches of the defense model."""

    model_config = ConfigDict(extra="forbid")

    d_n: int = Field(64, ge=1)
    d_m: int = Field(32, ge=1)
    analyzer: str | list[dict] = "conv_small"
    memory_read_mode: Literal["cosine", "softmax"] = "cosine"
    use_memory: bool = True
    siamese_includes_memory: bool = True
    seed: int = 0


class DefenseState(nn.Module):
    """Trainable defense ``D_theta`` bound to one eigenbasis.

    Args:
        analyzer: Noise-feature network with output width ``d_n``
        head: Selection head ``d_n -> d_e``
        bank: Memory bank with rows of width ``d_n``
        basis: Eigenbasis the antibodies index into
        use_memory: Feed the analyzer output straight into the head when false
    """

    def __init__(
        self,
        analyzer: AnalyzerNet,
        head: SelectionHead,
        bank: MemoryBank,
        basis: EigenBasis,
        use_memory: bool = True,
    ) -> None:
        super().__init__()
        if not analyzer.d_n == bank.d_n == head.d_n:
            raise ValueError(
                f"Dimension chain broken: analyzer d_n={analyzer.d_n}, "
                f"memory d_n={bank.d_n}, head d_n={head.d_n}"
            )
        if head.d_e != basis.d_e:
            raise ValueError(f"Head emits d_e={head.d_e}, basis has d_e={basis.d_e}")
        if tuple(analyzer.input_shape) != tuple(basis.image_shape):
            raise ValueError(
                f"Analyzer input {analyzer.input_shape} does not match basis image "
                f"shape {basis.image_shape}"
            )
        self.analyzer = analyzer
        self.head = head
        self.bank = bank
        self.basis = basis
        self.use_memory = use_memory
        self.phase: Phase = "warmup"
        self.step = 0

    @property
    def basis_ref(self) -> str:
        return self.basis.identifier

    @property
    def dtype(self) -> torch.dtype:
        return self.head.affine.weight.dtype

    def projector(self, dtype: torch.dtype) -> tuple[torch.Tensor, torch.Tensor]:
        if dtype == torch.float32:
            return self.basis.float32_view
        return self.basis.mean.to(dtype), self.basis.vectors.to(dtype)

    def selection(self, images: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """``(f_n, f_e)`` for an image or a batch of images."""
        f_n = self.analyzer(images)
        f_hat = memory_read(self.bank, f_n) if self.use_memory else f_n
        return f_n, self.head(f_hat)

    def purify(self, images: torch.Tensor, weights: torch.Tensor) -> torch.Tensor:
        """Project images through per-eigenvector weights (0/1 masks or ``f_e``)."""
        mean, vectors = self.projector(images.dtype)
        return weighted_projection(images, mean, vectors, weights.to(images.dtype))

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        return defend_batch(self, images, mode="soft")[0]


def build_defense(
    basis: EigenBasis,
    cfg: DefenseConfig,
    epsilon: float,
    dtype: torch.dtype = torch.float32,
) -> DefenseState:
    """Fresh defense state for ``basis`` with seeded initialisation."""
    architecture = resolve_architecture(cfg.analyzer, cfg.d_n)
    analyzer = AnalyzerNet(architecture, basis.image_shape, seed=cfg.seed)
    if analyzer.d_n != cfg.d_n:
        raise ValueError(f"Analyzer architecture emits {analyzer.d_n} features, d_n={cfg.d_n}")
    head = SelectionHead(cfg.d_n, basis.d_e, seed=cfg.seed + 1)
    bank = MemoryBank(
        cfg.d_m, cfg.d_n, epsilon=epsilon, read_mode=cfg.memory_read_mode, seed=cfg.seed + 2
    )
    state = DefenseState(analyzer, head, bank, basis, use_memory=cfg.use_memory).to(dtype)
    logger.info(
        "Built defense: analyzer %s -> d_n=%d, memory %dx%d (%s), head -> d_e=%d",
        cfg.analyzer if isinstance(cfg.analyzer, str) else "custom",
        cfg.d_n,
        cfg.d_m,
        cfg.d_n,
        "on" if cfg.use_memory else "off",
        basis.d_e,
    )
    return state


def defend_batch(
    state: DefenseState,
    images: torch.Tensor,
    mode: DefenseMode = "map",
    seed: int | None = None,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Purify a batch of images.

    Returns:
        ``(purified images, weights)`` where weights are 0/1 masks in ``map`` and
        ``sampled`` mode and the selection probabilities in ``soft`` mode
    """
    _, f_e = state.selection(images)
    if mode == "soft":
        weights = f_e
    elif mode == "map":
        weights = (f_e >= 0.5).to(f_e.dtype)
    elif mode == "sampled":
        if seed is None:
            raise ValueError("Sampled inference needs a seed")
        generator = torch.Generator().manual_seed(seed)
        weights = torch.bernoulli(f_e.detach(), generator=generator)
    else:
        raise ValueError(f"Unknown defense mode '{mode}'")
    return state.purify(images, weights), weights


def defend(
    state: DefenseState,
    image: torch.Tensor,
    mode: DefenseMode = "map",
    seed: int | None = None,
) -> tuple[torch.Tensor, Antibody | torch.Tensor]:
    """Purify one ``H x W`` image.

    Returns:
        The purified image and either the antibody used (``map``/``sampled``) or
        the selection probabilities (``soft``)
    """
    purified, weights = defend_batch(state, image, mode=mode, seed=seed)
    if mode == "soft":
        return purified, weights
    antibody = Antibody.from_tensor(weights)
    if antibody.is_degenerate:
        logger.warning("Defense produced a degenerate (empty) antibody")
    return purified, antibody


@dataclass
class SiameseState:
    """Exponential-moving-average twin of a defense state.

    Args:
        model: Frozen copy receiving the moving average
        xi: Decay of the moving average
        includes_memory: Blend the memory bank by the same rule
    """

    model: DefenseState
    xi: float
    includes_memory: bool = True


def make_siamese(state: DefenseState, xi: float, includes_memory: bool = True) -> SiameseState:
    """Deep copy of the defense that shares its (immutable) basis."""
    twin = DefenseState(
        copy.deepcopy(state.analyzer),
        copy.deepcopy(state.head),
        copy.deepcopy(state.bank),
        state.basis,
        use_memory=state.use_memory,
    )
    twin.requires_grad_(False)
    twin.phase, twin.step = state.phase, state.step
    return SiameseState(model=twin, xi=xi, includes_memory=includes_memory)


def _blended_tensors(state: DefenseState, includes_memory: bool) -> list[tuple[str, torch.Tensor]]:
    tensors = [(f"analyzer.{name}", p) for name, p in state.analyzer.named_parameters()]
    tensors += [(f"head.{name}", p) for name, p in state.head.named_parameters()]
    if includes_memory:
        tensors.append(("bank.items", state.bank.items))
    return tensors


@torch.no_grad()
def siamese_update(siamese: SiameseState, source: DefenseState) -> SiameseState:
    """``theta_bar <- xi * theta_bar + (1 - xi) * theta`` for every array, in place."""
    if not 0 <= siamese.xi < 1:
        raise ValueError(f"xi must lie in [0, 1), got {siamese.xi}")
    target = _blended_tensors(siamese.model, siamese.includes_memory)
    current = _blended_tensors(source, siamese.includes_memory)
    if [(name, tuple(t.shape)) for name, t in target] != [
        (name, tuple(t.shape)) for name, t in current
    ]:
        raise ValueError("Siamese twin does not match the structure of its source")
    for (_, averaged), (_, live) in zip(target, current):
        averaged.mul_(siamese.xi).add_(live, alpha=1.0 - siamese.xi)
    siamese.model.phase, siamese.model.step = source.phase, source.step
    return siamese
