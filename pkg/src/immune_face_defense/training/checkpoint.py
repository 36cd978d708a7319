"""Defense checkpoints: live state, siamese twin, momentum buffers and log."""

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from immune_face_defense.eigen import EigenBasis
from immune_face_defense.model import (
    DefenseConfig,
    DefenseState,
    SiameseState,
    build_defense,
    make_siamese,
)
from immune_face_defense.storage import read_container, write_container

logger = logging.getLogger(__name__)

CHECKPOINT_KIND = "defense"
STEP_PREFIX = "step_"


@dataclass
class DefenseCheckpoint:
    """Arrays and metadata of a defense checkpoint, independent of storage."""

    arrays: dict[str, np.ndarray]
    metadata: dict = field(default_factory=dict)

    @property
    def step(self) -> int:
        return int(self.metadata["step"])

    @property
    def phase(self) -> str:
        return self.metadata["phase"]


def capture_checkpoint(
    state: DefenseState,
    defense_cfg: DefenseConfig,
    epsilon: float,
    siamese: SiameseState | None = None,
    optimizer: torch.optim.Optimizer | None = None,
    log: list[dict] | None = None,
) -> DefenseCheckpoint:
    arrays = {f"state.{name}": tensor.detach().cpu().numpy().copy() for name, tensor in state.state_dict().items()}
    metadata = {
        "basis_ref": state.basis_ref,
        "phase": state.phase,
        "step": state.step,
        "defense": defense_cfg.model_dump(),
        "epsilon": epsilon,
    }
    if siamese is not None:
        arrays.update(
            {f"siamese.{name}": t.detach().cpu().numpy().copy() for name, t in siamese.model.state_dict().items()}
        )
        metadata["xi"] = siamese.xi
        metadata["siamese_includes_memory"] = siamese.includes_memory
    if optimizer is not None:
        parameters = [p for group in optimizer.param_groups for p in group["params"]]
        for index, parameter in enumerate(parameters):
            buffer = optimizer.state.get(parameter, {}).get("momentum_buffer")
            if buffer is not None:
                arrays[f"momentum.{index:03d}"] = buffer.detach().cpu().numpy().copy()
    if log is not None:
        metadata["log"] = list(log)
    return DefenseCheckpoint(arrays=arrays, metadata=metadata)


def _load_prefixed(module: torch.nn.Module, arrays: dict[str, np.ndarray], prefix: str) -> None:
    tensors = {
        name.removeprefix(prefix): torch.from_numpy(array)
        for name, array in arrays.items()
        if name.startswith(prefix)
    }
    module.load_state_dict(tensors, strict=True)


def restore_defense(checkpoint: DefenseCheckpoint, basis: EigenBasis) -> DefenseState:
    """Rebuild the live defense state of a checkpoint on its eigenbasis.

    Raises:
        ValueError: If the checkpoint was trained on a different basis
    """
    if checkpoint.metadata["basis_ref"] != basis.identifier:
        raise ValueError(
            f"Checkpoint bound to basis {checkpoint.metadata['basis_ref']}, "
            f"got basis {basis.identifier}"
        )
    cfg = DefenseConfig(**checkpoint.metadata["defense"])
    state = build_defense(basis, cfg, epsilon=checkpoint.metadata["epsilon"])
    _load_prefixed(state, checkpoint.arrays, "state.")
    state.phase = checkpoint.phase
    state.step = checkpoint.step
    return state


def restore_training(
    checkpoint: DefenseCheckpoint,
    basis: EigenBasis,
    optimizer_factory,
) -> tuple[DefenseState, SiameseState, torch.optim.Optimizer, list[dict]]:
    """Everything needed to continue a run exactly where the checkpoint left it."""
    state = restore_defense(checkpoint, basis)
    siamese = make_siamese(
        state,
        xi=checkpoint.metadata["xi"],
        includes_memory=checkpoint.metadata["siamese_includes_memory"],
    )
    _load_prefixed(siamese.model, checkpoint.arrays, "siamese.")
    optimizer = optimizer_factory(state)
    parameters = [p for group in optimizer.param_groups for p in group["params"]]
    for index, parameter in enumerate(parameters):
        name = f"momentum.{index:03d}"
        if name in checkpoint.arrays:
            optimizer.state[parameter]["momentum_buffer"] = torch.from_numpy(checkpoint.arrays[name]).clone()
    return state, siamese, optimizer, list(checkpoint.metadata.get("log", []))


def save_checkpoint(checkpoint: DefenseCheckpoint, path: str | Path) -> None:
    write_container(str(path), checkpoint.arrays, kind=CHECKPOINT_KIND, metadata=checkpoint.metadata)


def load_checkpoint(path: str | Path) -> DefenseCheckpoint:
    arrays, metadata = read_container(str(path), kind=CHECKPOINT_KIND)
    return DefenseCheckpoint(arrays=arrays, metadata=metadata)


def checkpoint_path(directory: str | Path, step: int) -> Path:
    return Path(directory) / f"{STEP_PREFIX}{step:07d}"


def latest_checkpoint(directory: str | Path) -> Path | None:
    """Most advanced complete checkpoint under ``directory``, if any."""
    directory = Path(directory)
    if not directory.is_dir():
        return None
    candidates = sorted(
        path
        for path in directory.glob(f"{STEP_PREFIX}*")
        if (path / "manifest.json").is_file()
    )
    return candidates[-1] if candidates else None
