"""Adversarial sample generation against a recognition model.

Budgets follow the noise-magnitude index ``I = ||x_adv - x|| / ||x||``:

- FGSM takes either a max-norm step ``eta`` or a target ``noise_ratio``; the
  ratio is realised per image by bisecting ``eta`` until the clamped step hits
  ``I`` (``calibrate_scale``)
- PGD projects onto the max-norm ball of radius ``I * ||x|| / sqrt(d)`` (or
  ``eta`` when given). With a ``noise_ratio`` every iterate's perturbation is
  then rescaled along itself to the exact ratio. It returns the iterate with the
  highest loss, the start included
- the adaptive variants run the same attacks with every candidate first mapped
  through the full-basis projector
- the sticker attack optimises one shared patch of free intensity over a gallery

A ratio is unreachable only when even a fully saturated step falls short; the
saturated step is used and a warning logged.
"""

import logging
import math
from collections.abc import Callable
from typing import Literal

import torch
import torch.nn.functional as F
from pydantic import BaseModel, ConfigDict, Field, model_validator

from immune_face_defense.eigen import EigenBasis, full_projection
from immune_face_defense.errors import NonFiniteError
from immune_face_defense.model.neuralcore import grad_input
from immune_face_defense.similarity import cosine_similarity

logger = logging.getLogger(__name__)

LossFn = Callable[[torch.Tensor], torch.Tensor]
AttackKind = Literal["fgsm", "pgd", "adaptive_fgsm", "adaptive_pgd", "sticker"]
AttackGoal = Literal["pair", "dodging", "impersonation"]

RATIO_TOLERANCE = 1e-9


class AttackConfig(BaseModel):
    """One attack setting.

    ``goal="pair"`` dodges on positive pairs and impersonates on negative pairs.
    """

    model_config = ConfigDict(extra="forbid")

    kind: AttackKind = "fgsm"
    eta: float | None = Field(None, ge=0)
    noise_ratio: float | None = Field(0.04, ge=0)
    steps: int = Field(1, ge=1)
    step_size: float | None = Field(None, gt=0)
    goal: AttackGoal = "pair"
    random_start: bool = False
    patch_height: int = Field(20, ge=1)
    patch_width: int = Field(40, ge=1)
    anchor_row: int = Field(4, ge=0)
    anchor_col: int | None = Field(None, ge=0)
    seed: int = 0

    @model_validator(mode="after")
    def _check_budget(self) -> "AttackConfig":
        if self.kind != "sticker" and self.eta is None and self.noise_ratio is None:
            raise ValueError(f"Attack '{self.kind}' needs eta or noise_ratio")
        return self

    @property
    def is_adaptive(self) -> bool:
        return self.kind.startswith("adaptive_")

    @property
    def base_kind(self) -> str:
        return self.kind.removeprefix("adaptive_")


def noise_magnitude(x: torch.Tensor, x_adv: torch.Tensor) -> float:
    """``||x_adv - x|| / ||x||`` on flattened images."""
    if x.shape != x_adv.shape:
        raise ValueError(f"Shapes differ: {tuple(x.shape)} vs {tuple(x_adv.shape)}")
    clean_norm = float(torch.linalg.vector_norm(x.flatten()))
    if clean_norm == 0:
        raise ValueError("Noise magnitude undefined for a zero-norm clean image")
    return float(torch.linalg.vector_norm((x_adv - x).flatten())) / clean_norm


def generate_adversarial_fgsm(x: torch.Tensor, loss_grad: torch.Tensor, eta: float) -> torch.Tensor:
    """``clamp(x + eta * sign(g), 0, 1)`` with ``sign(0) = 0``."""
    if eta < 0:
        raise ValueError(f"eta must be non-negative, got {eta}")
    if x.shape != loss_grad.shape:
        raise ValueError(
            f"Gradient shape {tuple(loss_grad.shape)} does not match image {tuple(x.shape)}"
        )
    return (x.detach() + eta * torch.sign(loss_grad)).clamp(0.0, 1.0)


def calibrate_scale(x: torch.Tensor, direction: torch.Tensor, noise_ratio: float) -> float:
    """Scale ``c`` with ``I(clamp(x + c * direction, 0, 1)) = noise_ratio``.

    The realised ratio is continuous and non-decreasing in ``c``, so ``c`` is
    found by bisection in float64 to within ``RATIO_TOLERANCE``.

    Returns:
        The scale; 0 for a zero direction, the saturating scale when the ratio
        is out of reach

    Raises:
        ValueError: If ``x`` has zero norm
    """
    clean = x.detach().to(torch.float64).flatten()
    step = direction.detach().to(torch.float64).flatten()
    clean_norm = float(torch.linalg.vector_norm(clean))
    if clean_norm == 0:
        raise ValueError("Noise magnitude undefined for a zero-norm clean image")
    moving = step != 0
    if noise_ratio == 0 or not bool(moving.any()):
        return 0.0

    def realised(scale: float) -> float:
        moved = (clean + scale * step).clamp(0.0, 1.0) - clean
        return float(torch.linalg.vector_norm(moved)) / clean_norm

    high = 1.0 / float(step[moving].abs().min())
    ceiling = realised(high)
    if ceiling < noise_ratio - RATIO_TOLERANCE:
        logger.warning(
            "Noise ratio %.6f out of reach, saturating at %.6f", noise_ratio, ceiling
        )
        return high
    low = 0.0
    for _ in range(200):
        middle = 0.5 * (low + high)
        value = realised(middle)
        if abs(value - noise_ratio) <= RATIO_TOLERANCE:
            return middle
        if value < noise_ratio:
            low = middle
        else:
            high = middle
    return high


def rescale_to_ratio(
    x: torch.Tensor, candidate: torch.Tensor, noise_ratio: float
) -> torch.Tensor:
    """Stretch or shrink ``candidate - x`` so the clamped result realises ``noise_ratio``."""
    clean = x.detach()
    direction = candidate.detach() - clean
    scale = calibrate_scale(clean, direction, noise_ratio)
    return (clean + scale * direction).clamp(0.0, 1.0)


def fgsm_step_size(x: torch.Tensor, grad: torch.Tensor, cfg: AttackConfig) -> float:
    if cfg.eta is not None:
        return cfg.eta
    return calibrate_scale(x, torch.sign(grad), cfg.noise_ratio)


def fgsm_attack(x: torch.Tensor, loss_fn: LossFn, cfg: AttackConfig) -> torch.Tensor:
    grad = grad_input(loss_fn, x)
    return generate_adversarial_fgsm(x, grad, fgsm_step_size(x, grad, cfg))


def pgd_radius(x: torch.Tensor, cfg: AttackConfig) -> float:
    if cfg.eta is not None:
        return cfg.eta
    return cfg.noise_ratio * float(torch.linalg.vector_norm(x.flatten())) / math.sqrt(x.numel())


def _loss_value(loss_fn: LossFn, x: torch.Tensor) -> float:
    with torch.no_grad():
        value = float(loss_fn(x))
    if not math.isfinite(value):
        raise NonFiniteError(f"Non-finite attack loss {value}")
    return value


def attack_pgd(
    x: torch.Tensor,
    loss_fn: LossFn,
    cfg: AttackConfig,
    history: list[float] | None = None,
) -> torch.Tensor:
    """Projected sign-gradient ascent inside a max-norm ball around ``x``.

    With a ``noise_ratio`` budget each iterate is rescaled along its own
    perturbation so its realised ratio equals the target.

    Args:
        x: Clean image
        loss_fn: Scalar loss to maximise
        cfg: Radius (``eta`` or ``noise_ratio``), ``steps``, ``step_size``
            (default ``2.5 * radius / steps``) and optional seeded random start
        history: Receives the loss of the start and of every iterate

    Returns:
        The iterate with the highest loss; later iterates win ties
    """
    radius = pgd_radius(x, cfg)
    exact = cfg.eta is None
    step_size = cfg.step_size if cfg.step_size is not None else 2.5 * radius / cfg.steps
    clean = x.detach()
    current = clean.clone()
    if cfg.random_start and radius > 0:
        generator = torch.Generator().manual_seed(cfg.seed)
        offset = torch.rand(clean.shape, generator=generator, dtype=clean.dtype) * 2 - 1
        current = (clean + radius * offset).clamp(0.0, 1.0)
        if exact:
            current = rescale_to_ratio(clean, current, cfg.noise_ratio)

    best, best_loss = current, _loss_value(loss_fn, current)
    if history is not None:
        history.append(best_loss)
    for _ in range(cfg.steps):
        grad = grad_input(loss_fn, current)
        stepped = current + step_size * torch.sign(grad)
        current = (clean + (stepped - clean).clamp(-radius, radius)).clamp(0.0, 1.0)
        if exact:
            current = rescale_to_ratio(clean, current, cfg.noise_ratio)
        loss = _loss_value(loss_fn, current)
        if history is not None:
            history.append(loss)
        if loss >= best_loss:
            best, best_loss = current, loss
    return best


def adaptive_loss(loss_fn: LossFn, basis: EigenBasis) -> LossFn:
    """Compose a loss with the fixed full-basis projector."""

    def composed(candidate: torch.Tensor) -> torch.Tensor:
        return loss_fn(full_projection(candidate, basis))

    return composed


def attack_adaptive(
    x: torch.Tensor,
    basis: EigenBasis,
    loss_fn: LossFn,
    cfg: AttackConfig,
    history: list[float] | None = None,
) -> torch.Tensor:
    """FGSM or PGD whose loss sees every candidate through the full antibody."""
    composed = adaptive_loss(loss_fn, basis)
    if cfg.base_kind == "pgd":
        return attack_pgd(x, composed, cfg, history=history)
    if cfg.base_kind == "fgsm":
        return fgsm_attack(x, composed, cfg)
    raise ValueError(f"No adaptive variant of attack '{cfg.kind}'")


ATTACKS: dict[str, Callable[..., torch.Tensor]] = {
    "fgsm": fgsm_attack,
    "pgd": attack_pgd,
}


def run_attack(
    x: torch.Tensor,
    loss_fn: LossFn,
    cfg: AttackConfig,
    basis: EigenBasis | None = None,
) -> torch.Tensor:
    """Dispatch a budgeted attack by ``cfg.kind``."""
    if cfg.is_adaptive:
        if basis is None:
            raise ValueError(f"Attack '{cfg.kind}' needs the defense eigenbasis")
        return attack_adaptive(x, basis, loss_fn, cfg)
    if cfg.kind not in ATTACKS:
        raise ValueError(f"Unknown attack '{cfg.kind}', expected one of {sorted(ATTACKS)}")
    return ATTACKS[cfg.kind](x, loss_fn, cfg)


def pair_attack_loss(
    embedder: Callable[[torch.Tensor], torch.Tensor],
    reference_embedding: torch.Tensor,
    dodging: bool,
) -> LossFn:
    """Dodging pushes the pair apart (``1 - cos``); impersonation pulls it together."""
    reference = reference_embedding.detach()

    def loss(candidate: torch.Tensor) -> torch.Tensor:
        similarity = cosine_similarity(embedder(candidate), reference)
        return 1.0 - similarity if dodging else similarity

    return loss


def sticker_anchor(cfg: AttackConfig, image_shape: tuple[int, int]) -> tuple[int, int]:
    """Top-left corner of the patch; horizontally centred unless configured.

    Raises:
        ValueError: If the patch does not fit inside the image at the anchor
    """
    height, width = image_shape
    col = cfg.anchor_col if cfg.anchor_col is not None else (width - cfg.patch_width) // 2
    row = cfg.anchor_row
    if col < 0 or row + cfg.patch_height > height or col + cfg.patch_width > width:
        raise ValueError(
            f"Sticker {cfg.patch_height}x{cfg.patch_width} at anchor ({row}, {col}) "
            f"is out of bounds for images of {height}x{width}"
        )
    return row, col


def apply_patch(images: torch.Tensor, patch: torch.Tensor, anchor: tuple[int, int]) -> torch.Tensor:
    """Paste ``patch`` over every image at ``anchor`` without touching the input."""
    row, col = anchor
    height, width = patch.shape
    mask = torch.zeros(images.shape[-2:], dtype=images.dtype)
    mask[row : row + height, col : col + width] = 1.0
    canvas = F.pad(
        patch, (col, images.shape[-1] - col - width, row, images.shape[-2] - row - height)
    )
    return images * (1.0 - mask) + canvas.to(images.dtype) * mask


def attack_sticker(
    gallery: torch.Tensor,
    target: torch.Tensor,
    embedder: Callable[[torch.Tensor], torch.Tensor],
    cfg: AttackConfig,
    history: list[float] | None = None,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Optimise one patch that makes every gallery face resemble ``target``.

    Sign-gradient ascent on the mean cosine between the patched gallery and the
    target embedding, with patch pixels kept in ``[0, 1]``.

    Args:
        gallery: ``N x H x W`` faces to impersonate the target with
        target: ``H x W`` face of the target identity
        embedder: Recognition model
        cfg: Patch geometry, ``steps`` and ``step_size`` (default ``1/32``)
        history: Receives the objective of the start and of every iterate

    Returns:
        tuple of (best patch, patched gallery)
    """
    anchor = sticker_anchor(cfg, tuple(gallery.shape[-2:]))
    generator = torch.Generator().manual_seed(cfg.seed)
    patch = torch.rand(cfg.patch_height, cfg.patch_width, generator=generator, dtype=gallery.dtype)
    step_size = cfg.step_size if cfg.step_size is not None else 1.0 / 32
    with torch.no_grad():
        target_embedding = embedder(target.unsqueeze(0))[0]
    clean = gallery.detach()

    def objective(candidate: torch.Tensor) -> torch.Tensor:
        patched = apply_patch(clean, candidate, anchor)
        return cosine_similarity(embedder(patched), target_embedding).mean()

    best, best_value = patch, _loss_value(objective, patch)
    if history is not None:
        history.append(best_value)
    for _ in range(cfg.steps):
        patch = (patch + step_size * torch.sign(grad_input(objective, patch))).clamp(0.0, 1.0)
        value = _loss_value(objective, patch)
        if history is not None:
            history.append(value)
        if value >= best_value:
            best, best_value = patch, value
    logger.info(
        "Sticker %dx%d at %s: mean target cosine %.4f after %d steps",
        cfg.patch_height,
        cfg.patch_width,
        anchor,
        best_value,
        cfg.steps,
    )
    with torch.no_grad():
        return best, apply_patch(clean, best, anchor)
