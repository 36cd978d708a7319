"""Experiment configuration: every parameter group of ``conf/*/parameters.yml``.

Each group is a pydantic model owned by the module that consumes it; this module
composes them and checks what no single group can check on its own, chiefly the
dimension chain image -> analyzer -> memory -> head -> basis. Validation never
touches data, so a broken configuration fails before any computation starts.
"""

import logging
from collections.abc import Mapping
from pathlib import Path
from typing import Literal

from omegaconf import OmegaConf
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from immune_face_defense.attacks import AttackConfig, sticker_anchor
from immune_face_defense.eigen import AffinityConfig
from immune_face_defense.errors import ConfigValidationError
from immune_face_defense.evaluation import EvaluationConfig
from immune_face_defense.model import DefenseConfig, infer_output_shape, resolve_architecture
from immune_face_defense.recognition import EmbedderConfig
from immune_face_defense.training import TrainerConfig

logger = logging.getLogger(__name__)

__all__ = [
    "AffinityConfig",
    "AnalyticsConfig",
    "AttackConfig",
    "BasisConfig",
    "CorpusConfig",
    "DefenseConfig",
    "EmbedderConfig",
    "EvaluationConfig",
    "ExperimentConfig",
    "ProtocolConfig",
    "RunConfig",
    "SyntheticCorpusConfig",
    "TrainerConfig",
    "check_dimension_chain",
    "check_paths",
    "merge_overrides",
    "validate_parameters",
]


class SyntheticCorpusConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_identities: int = Field(40, ge=2)
    images_per_identity: int = Field(10, ge=2)
    seed: int = 0
    identity_amplitude: float = Field(0.12, ge=0)
    max_shift: int = Field(1, ge=0)
    brightness_jitter: float = Field(0.03, ge=0)
    noise_std: float = Field(0.02, ge=0)


class CorpusConfig(BaseModel):
    """Where faces come from and how they are split.

    ``root`` names a ``<identity>/<image>`` directory; when it is None the
    synthetic corpus is generated instead.
    """

    model_config = ConfigDict(extra="forbid")

    root: str | None = None
    image_size: tuple[int, int] = (64, 64)
    synthetic: SyntheticCorpusConfig = SyntheticCorpusConfig()
    holdout_per_identity: int = Field(2, ge=1)
    split_seed: int = 0

    @property
    def shape(self) -> tuple[int, int]:
        return tuple(self.image_size)


class ProtocolConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_pos: int = Field(200, ge=0)
    n_neg: int = Field(200, ge=0)
    seed: int = 7
    perturbed_side: Literal["first", "second"] = "first"


class BasisConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    d_e: int = Field(256, ge=1)


class AnalyticsConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    window: int = Field(100, ge=1)


class RunConfig(BaseModel):
    """Name, checkpoint directory and group overrides of one defense training run."""

    model_config = ConfigDict(extra="forbid")

    name: str = "full"
    checkpoint_dir: str | None = None
    resume: bool = True
    overrides: dict[str, dict] = Field(default_factory=dict)


class ExperimentConfig(BaseModel):
    """All parameter groups of one experiment."""

    model_config = ConfigDict(extra="forbid")

    corpus: CorpusConfig = CorpusConfig()
    protocol: ProtocolConfig = ProtocolConfig()
    eigenbasis: BasisConfig = BasisConfig()
    defense: DefenseConfig = DefenseConfig()
    trainer: TrainerConfig = TrainerConfig()
    embedder: EmbedderConfig = EmbedderConfig()
    swap_embedder: EmbedderConfig | None = None
    attacks: dict[str, AttackConfig] = Field(default_factory=dict)
    evaluation: EvaluationConfig = EvaluationConfig()
    analytics: AnalyticsConfig = AnalyticsConfig()
    run: RunConfig = RunConfig()
    ablations: dict[str, RunConfig] = Field(default_factory=dict)


def merge_overrides(base: Mapping, overrides: Mapping | None) -> dict:
    """Deep merge of a parameter group with partial overrides."""
    if not overrides:
        return OmegaConf.to_container(OmegaConf.create(dict(base)), resolve=True)
    merged = OmegaConf.merge(OmegaConf.create(dict(base)), OmegaConf.create(dict(overrides)))
    return OmegaConf.to_container(merged, resolve=True)


def _training_size(corpus: CorpusConfig) -> int | None:
    if corpus.root is not None:
        return None
    synthetic = corpus.synthetic
    kept = synthetic.images_per_identity
    if synthetic.images_per_identity > corpus.holdout_per_identity:
        kept -= corpus.holdout_per_identity
    return synthetic.n_identities * kept


def _check_network(label: str, architecture, width: int, shape: tuple[int, int]) -> None:
    try:
        output = infer_output_shape(resolve_architecture(architecture, width), shape)
    except ValueError as exc:
        raise ConfigValidationError(f"{label} cannot take {shape} images: {exc}") from exc
    if output != (width,):
        raise ConfigValidationError(f"{label} emits {output}, expected ({width},)")


def check_dimension_chain(cfg: ExperimentConfig) -> None:
    """image -> analyzer -> memory -> head -> basis, plus embedders and stickers.

    Raises:
        ConfigValidationError: Naming the first broken link
    """
    shape = cfg.corpus.shape
    pixels = shape[0] * shape[1]
    _check_network("Analyzer", cfg.defense.analyzer, cfg.defense.d_n, shape)
    _check_network("Embedder", cfg.embedder.architecture, cfg.embedder.d_f, shape)
    if cfg.swap_embedder is not None:
        _check_network(
            "Swap embedder", cfg.swap_embedder.architecture, cfg.swap_embedder.d_f, shape
        )

    if cfg.eigenbasis.d_e > pixels:
        raise ConfigValidationError(
            f"d_e={cfg.eigenbasis.d_e} exceeds the {pixels} pixels of {shape} images"
        )
    n_train = _training_size(cfg.corpus)
    if n_train is not None and cfg.eigenbasis.d_e > min(pixels, n_train):
        raise ConfigValidationError(
            f"d_e={cfg.eigenbasis.d_e} exceeds the achievable rank "
            f"{min(pixels, n_train)} of {n_train} training images"
        )

    for name, attack in cfg.attacks.items():
        if attack.kind == "sticker":
            try:
                sticker_anchor(attack, shape)
            except ValueError as exc:
                raise ConfigValidationError(f"Attack '{name}': {exc}") from exc

    logger.info(
        "Dimension chain %dx%d -> d_n=%d -> memory %dx%d -> d_e=%d is consistent",
        shape[0],
        shape[1],
        cfg.defense.d_n,
        cfg.defense.d_m,
        cfg.defense.d_n,
        cfg.eigenbasis.d_e,
    )


def check_paths(cfg: ExperimentConfig, project_path: str | Path | None = None) -> None:
    """Referenced input directories must exist."""
    if cfg.corpus.root is None:
        return
    root = Path(cfg.corpus.root)
    if not root.is_absolute() and project_path is not None:
        root = Path(project_path) / root
    if not root.is_dir():
        raise ConfigValidationError(f"Corpus root {root} does not exist")


def validate_parameters(
    parameters: Mapping, project_path: str | Path | None = None, check_inputs: bool = True
) -> ExperimentConfig:
    """Parse the Kedro parameters, then check the dimension chain and paths.

    Ablation runs are validated with their overrides applied.

    Raises:
        ConfigValidationError: On any inconsistency, pydantic errors included
    """
    known = {key: value for key, value in parameters.items() if key in ExperimentConfig.model_fields}
    try:
        cfg = ExperimentConfig.model_validate(known)
        variants = [cfg]
        for name, run in cfg.ablations.items():
            payload = dict(known)
            for group, overrides in run.overrides.items():
                if group not in ExperimentConfig.model_fields:
                    raise ConfigValidationError(f"Ablation '{name}' overrides unknown group '{group}'")
                payload[group] = merge_overrides(known.get(group, {}), overrides)
            variants.append(ExperimentConfig.model_validate(payload))
    except ValidationError as exc:
        raise ConfigValidationError(f"Invalid parameters:\n{exc}") from exc

    for variant in variants:
        check_dimension_chain(variant)
    if check_inputs:
        check_paths(cfg, project_path)
    return cfg
