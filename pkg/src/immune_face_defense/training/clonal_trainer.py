"""Clonal selection training of the defense.

For every training image the defense proposes selection probabilities ``f_e``;
``k`` antibodies are cloned from them by independent Bernoulli draws, each clone
is scored by its affinity against the clean image, and the parameters move along
the baseline-weighted score-function gradient

    theta <- theta - (phi / k) * sum_j (s0 - s_j) * grad log l(a_j)

where ``s0`` is the mean clone affinity and ``l`` the factorized Bernoulli
likelihood. Per-image gradients are summed over a mini-batch and applied once
through momentum SGD.

Training runs in two phases. During warm-up the defense sees clean images and
learns plain reconstruction. Afterwards every input is first perturbed by FGSM
through the soft-mode siamese twin (the self-supervised adversarial samples),
while affinities are still measured against the clean image.

All randomness of step ``t`` (batch choice, cloning) is derived from
``(seed, t)``, so a run resumed from a checkpoint reproduces the uninterrupted
run exactly.
"""

import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import pandas as pd
import torch
from pydantic import BaseModel, ConfigDict, Field

from immune_face_defense.attacks import generate_adversarial_fgsm
from immune_face_defense.eigen import (
    AffinityConfig,
    Antibody,
    affinity_scores,
    mutation_probability,
    specificity_matrix,
)
from immune_face_defense.errors import NonFiniteError
from immune_face_defense.model import (
    DefenseConfig,
    DefenseState,
    SiameseState,
    clip_probabilities,
    defend_batch,
    grad_input,
    make_siamese,
    memory_update,
    siamese_update,
)
from immune_face_defense.recognition import parameter_hash
from immune_face_defense.similarity import cosine_similarity

from .checkpoint import (
    capture_checkpoint,
    checkpoint_path,
    latest_checkpoint,
    load_checkpoint,
    restore_training,
    save_checkpoint,
)

logger = logging.getLogger(__name__)

LOG_COLUMNS = [
    "STEP",
    "PHASE",
    "MEAN_AFFINITY",
    "MEAN_CARDINALITY",
    "P_MUTATION",
    "SPECIFICITY_V",
    "LOSS_MEAN",
    "LOSS_MAX",
    "RECON_L2",
    "ABORTED",
]


class TrainerConfig(BaseModel):
    """Clonal selection and schedule settings."""

    model_config = ConfigDict(extra="forbid")

    k: int = Field(10, ge=1)
    phi: float = Field(0.01, gt=0)
    momentum: float = Field(0.9, ge=0, lt=1)
    batch_size: int = Field(4, ge=1)
    warmup_steps: int = Field(2000, ge=0)
    adversarial_steps: int = Field(10000, ge=0)
    eta: float = Field(0.04, ge=0)
    xi: float = Field(0.999, gt=0, lt=1)
    epsilon: float = Field(0.999, gt=0, lt=1)
    affinity: AffinityConfig = AffinityConfig()
    use_ssat: bool = True
    checkpoint_every: int = Field(0, ge=0)
    log_every: int = Field(100, ge=1)
    seed: int = 0

    @property
    def total_steps(self) -> int:
        return self.warmup_steps + self.adversarial_steps


@dataclass
class TrainLogRecord:
    """Diagnostics of one training step, averaged over its batch."""

    step: int
    phase: str
    mean_affinity: float
    mean_cardinality: float
    p_mutation: float
    specificity_v: float
    loss_mean: float
    loss_max: float
    recon_l2: float
    aborted: bool = False

    def to_row(self) -> dict:
        return {column: value for column, value in zip(LOG_COLUMNS, asdict(self).values())}

    @classmethod
    def from_row(cls, row: dict) -> "TrainLogRecord":
        return cls(*(row[column] for column in LOG_COLUMNS))


def records_to_frame(records: list[TrainLogRecord]) -> pd.DataFrame:
    return pd.DataFrame([record.to_row() for record in records], columns=LOG_COLUMNS)


def step_seed(seed: int, step: int) -> int:
    """Independent 32-bit seed for step ``step`` of a run seeded with ``seed``."""
    return int(np.random.SeedSequence([seed, step]).generate_state(1)[0])


def sample_clone_masks(f_e: torch.Tensor, k: int, generator: torch.Generator) -> torch.Tensor:
    """``k x d_e`` 0/1 masks, index ``i`` set with probability ``f_e[i]``."""
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    probabilities = f_e.detach().unsqueeze(0).expand(k, -1)
    return torch.bernoulli(probabilities, generator=generator)


def clone_antibodies(f_e: torch.Tensor, k: int, seed: int) -> list[Antibody]:
    """Clone ``k`` antibodies from the selection probabilities under ``seed``."""
    generator = torch.Generator().manual_seed(seed)
    masks = sample_clone_masks(clip_probabilities(torch.as_tensor(f_e)), k, generator)
    return [Antibody.from_tensor(mask) for mask in masks]


def mask_log_likelihood(masks: torch.Tensor, f_e: torch.Tensor) -> torch.Tensor:
    """Factorized Bernoulli log-likelihood of every mask row, differentiable in ``f_e``."""
    f_e = clip_probabilities(f_e)
    masks = masks.to(f_e.dtype)
    return (masks * torch.log(f_e) + (1.0 - masks) * torch.log1p(-f_e)).sum(dim=-1)


def log_likelihood(antibody: Antibody, f_e: torch.Tensor) -> float:
    """``sum_i [a_i ln f_e(i) + (1 - a_i) ln(1 - f_e(i))]``."""
    f_e = torch.as_tensor(f_e, dtype=torch.float64)
    if antibody.d_e != f_e.shape[-1]:
        raise ValueError(f"Antibody d_e={antibody.d_e} does not match f_e of length {f_e.shape[-1]}")
    return float(mask_log_likelihood(antibody.as_tensor(torch.float64), f_e))


def score_function_loss(
    masks: torch.Tensor, f_e: torch.Tensor, affinities: torch.Tensor
) -> torch.Tensor:
    """Surrogate whose gradient is ``(1/k) sum_j (s0 - s_j) grad log l(a_j)``.

    Descending it raises the likelihood of above-average clones and lowers that
    of below-average ones. Equal affinities give an exactly zero gradient.
    """
    weights = (affinities.mean() - affinities).detach()
    return (weights.to(f_e.dtype) * mask_log_likelihood(masks, f_e)).sum() / masks.shape[0]


def siamese_loss(siamese: SiameseState, embedder, clean_embedding: torch.Tensor):
    """``L(x) = 1 - cos(F(x), F(D_siamese(x)))`` through the soft defense mode."""

    def loss(image: torch.Tensor) -> torch.Tensor:
        purified = defend_batch(siamese.model, image, mode="soft")[0]
        return 1.0 - cosine_similarity(embedder(purified.unsqueeze(0))[0], clean_embedding)

    return loss


def _antibody_diagnostics(first_clones: list[torch.Tensor]) -> float:
    if len(first_clones) < 2:
        return math.nan
    masks = torch.stack(first_clones).cpu().numpy()
    n = masks.shape[0]
    return float(specificity_matrix(masks).sum()) / (n * (n - 1))


def train_step(
    state: DefenseState,
    siamese: SiameseState,
    x_clean: torch.Tensor,
    embedder,
    optimizer: torch.optim.Optimizer,
    cfg: TrainerConfig,
    seed: int,
) -> TrainLogRecord:
    """Run clonal selection on one mini-batch and apply a single parameter update.

    Args:
        state: Live defense, updated in place
        siamese: Moving-average twin, updated in place once per sample
        x_clean: ``B x H x W`` clean images (a single ``H x W`` image is accepted)
        embedder: Frozen recognition model
        optimizer: Momentum SGD over ``state``'s parameters
        cfg: Trainer settings
        seed: Seed for this step's clone sampling

    Returns:
        TrainLogRecord for ``state.step`` before it is incremented
    """
    batch = x_clean.unsqueeze(0) if x_clean.ndim == 2 else x_clean
    batch = batch.to(state.dtype)
    generator = torch.Generator().manual_seed(seed)
    adversarial = state.phase == "adversarial" and cfg.use_ssat
    optimizer.zero_grad(set_to_none=False)

    affinities, cardinalities, mutation, losses, recon_l2 = [], [], [], [], []
    first_clones: list[torch.Tensor] = []
    bank_before = state.bank.items.detach().clone()
    aborted = False
    try:
        for x in batch:
            with torch.no_grad():
                clean_embedding = embedder(x.unsqueeze(0))[0]
            loss_fn = siamese_loss(siamese, embedder, clean_embedding)
            if adversarial:
                grad = grad_input(loss_fn, x)
                x_in = generate_adversarial_fgsm(x, grad, cfg.eta)
            else:
                x_in = x
            with torch.no_grad():
                losses.append(float(loss_fn(x)))

            f_n, f_e = state.selection(x_in)
            masks = sample_clone_masks(f_e, cfg.k, generator)
            with torch.no_grad():
                reconstructions = state.purify(x_in.expand(cfg.k, *x_in.shape), masks)
                scores = affinity_scores(
                    reconstructions, x, masks.sum(dim=1), embedder, cfg.affinity, clean_embedding
                )
            score_function_loss(masks, f_e, scores).backward()
            memory_update(state.bank, f_n.detach())

            affinities.append(float(scores.mean()))
            cardinalities.append(float(masks.sum(dim=1).mean()))
            mutation.append(mutation_probability(f_e))
            recon_l2.append(
                float(torch.linalg.vector_norm((reconstructions - x).flatten(start_dim=1), dim=1).mean())
            )
            first_clones.append(masks[0].detach())

        for name, parameter in state.named_parameters():
            if parameter.grad is not None and not torch.isfinite(parameter.grad).all():
                raise NonFiniteError(f"Non-finite gradient for parameter '{name}'")
    except NonFiniteError as exc:
        logger.error("Step %d aborted: %s", state.step, exc)
        optimizer.zero_grad(set_to_none=False)
        # an aborted step leaves the memory as it found it
        with torch.no_grad():
            state.bank.items.copy_(bank_before)
        aborted = True
    else:
        optimizer.step()
        for _ in range(batch.shape[0]):
            siamese_update(siamese, state)

    def mean(values: list[float]) -> float:
        return float(np.mean(values)) if values else math.nan

    return TrainLogRecord(
        step=state.step,
        phase=state.phase,
        mean_affinity=mean(affinities),
        mean_cardinality=mean(cardinalities),
        p_mutation=mean(mutation),
        specificity_v=_antibody_diagnostics(first_clones),
        loss_mean=mean(losses),
        loss_max=float(np.max(losses)) if losses else math.nan,
        recon_l2=mean(recon_l2),
        aborted=aborted,
    )


def make_optimizer(state: DefenseState, cfg: TrainerConfig) -> torch.optim.SGD:
    return torch.optim.SGD(state.parameters(), lr=cfg.phi, momentum=cfg.momentum)


def select_batch(n_images: int, batch_size: int, generator: torch.Generator) -> torch.Tensor:
    if batch_size <= n_images:
        return torch.randperm(n_images, generator=generator)[:batch_size]
    return torch.randint(n_images, (batch_size,), generator=generator)


def run_training(
    state: DefenseState,
    corpus: torch.Tensor,
    embedder,
    cfg: TrainerConfig,
    defense_cfg: DefenseConfig,
    checkpoint_dir: str | Path | None = None,
    resume: bool = True,
) -> tuple[DefenseState, list[TrainLogRecord]]:
    """Warm-up then self-supervised adversarial training.

    Args:
        state: Freshly built defense (replaced by the checkpointed one on resume)
        corpus: ``N x H x W`` training images
        embedder: Frozen recognition model; its parameters must not change
        cfg: Trainer settings, including ``seed`` and ``checkpoint_every``
        defense_cfg: Settings ``state`` was built from, stored in checkpoints
        checkpoint_dir: Directory for ``step_XXXXXXX`` checkpoints
        resume: Continue from the latest checkpoint in ``checkpoint_dir``

    Returns:
        tuple of (trained state, log records of every step including resumed ones)
    """
    if corpus.ndim != 3 or corpus.shape[0] == 0:
        raise ValueError(f"Training corpus must be a non-empty N x H x W stack, got {tuple(corpus.shape)}")
    corpus = corpus.to(state.dtype)
    siamese = make_siamese(state, cfg.xi, includes_memory=defense_cfg.siamese_includes_memory)
    optimizer = make_optimizer(state, cfg)
    history: list[dict] = []

    if checkpoint_dir is not None and resume:
        latest = latest_checkpoint(checkpoint_dir)
        if latest is not None:
            state, siamese, optimizer, history = restore_training(
                load_checkpoint(latest), state.basis, lambda s: make_optimizer(s, cfg)
            )
            logger.info("Resumed training from %s at step %d", latest, state.step)

    embedder_hash = parameter_hash(embedder)
    records = [TrainLogRecord.from_row(row) for row in history]
    logger.info(
        "Training steps %d..%d (warm-up %d, adversarial %d, SSAT %s)",
        state.step,
        cfg.total_steps,
        cfg.warmup_steps,
        cfg.adversarial_steps,
        "on" if cfg.use_ssat else "off",
    )
    while state.step < cfg.total_steps:
        phase = "warmup" if state.step < cfg.warmup_steps else "adversarial"
        if phase != state.phase:
            logger.info("Switching to %s phase at step %d", phase, state.step)
        state.phase = phase
        siamese.model.phase = phase
        generator = torch.Generator().manual_seed(step_seed(cfg.seed, state.step))
        indices = select_batch(corpus.shape[0], cfg.batch_size, generator)
        record = train_step(
            state,
            siamese,
            corpus[indices],
            embedder,
            optimizer,
            cfg,
            seed=int(torch.randint(2**31 - 1, (1,), generator=generator)),
        )
        records.append(record)
        state.step += 1

        if state.step % cfg.log_every == 0 or state.step == cfg.total_steps:
            logger.info(
                "Step %d [%s]: affinity %.4f, |a| %.1f, P_mutation %.4f, V %.2f, L %.4f",
                record.step,
                record.phase,
                record.mean_affinity,
                record.mean_cardinality,
                record.p_mutation,
                record.specificity_v,
                record.loss_mean,
            )
        if checkpoint_dir is not None and cfg.checkpoint_every and state.step % cfg.checkpoint_every == 0:
            checkpoint = capture_checkpoint(
                state,
                defense_cfg,
                cfg.epsilon,
                siamese=siamese,
                optimizer=optimizer,
                log=[r.to_row() for r in records],
            )
            save_checkpoint(checkpoint, checkpoint_path(checkpoint_dir, state.step))

    if parameter_hash(embedder) != embedder_hash:
        raise RuntimeError("Recognition model parameters changed during defense training")
    return state, records
