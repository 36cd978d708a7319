"""Kedro datasets over float32 containers (see ``immune_face_defense.storage``).

``Float32ContainerDataset`` moves ``{"arrays": ..., "metadata": ...}`` payloads;
the subclasses convert to and from the domain objects stored that way.
"""

from pathlib import PurePosixPath
from typing import Any, ClassVar

import fsspec
import numpy as np
import torch
from kedro.io.core import AbstractDataset, get_filepath_str, get_protocol_and_path
from PIL import Image

from immune_face_defense.attacks import AdversarialSet
from immune_face_defense.eigen import EigenBasis, basis_from_arrays, basis_to_arrays, clamp_to_unit
from immune_face_defense.recognition import EmbeddingModel, freeze, parameter_hash
from immune_face_defense.storage import container_exists, read_container, write_container
from immune_face_defense.training import DefenseCheckpoint


class Float32ContainerDataset(AbstractDataset[Any, Any]):
    """Directory of raw little-endian float32 arrays plus ``manifest.json``.

    Example catalog entry::

        sticker_attack:
          type: immune_face_defense.datasets.Float32ContainerDataset
          filepath: data/07_model_output/sticker_attack
          kind: sticker
    """

    default_kind: ClassVar[str | None] = None

    def __init__(
        self,
        filepath: str,
        kind: str | None = None,
        fs_args: dict[str, Any] | None = None,
    ) -> None:
        protocol, path = get_protocol_and_path(filepath)
        self._protocol = protocol
        self._fs = fsspec.filesystem(protocol, **(fs_args or {}))
        self._filepath = PurePosixPath(path)
        self._kind = kind or self.default_kind or "arrays"

    @property
    def _path(self) -> str:
        return get_filepath_str(self._filepath, self._protocol)

    def _to_container(self, data: Any) -> tuple[dict[str, np.ndarray], dict]:
        return data["arrays"], data.get("metadata", {})

    def _from_container(self, arrays: dict[str, np.ndarray], metadata: dict) -> Any:
        return {"arrays": arrays, "metadata": metadata}

    def load(self) -> Any:
        arrays, metadata = read_container(self._path, kind=self._kind, fs=self._fs)
        return self._from_container(arrays, metadata)

    def save(self, data: Any) -> None:
        arrays, metadata = self._to_container(data)
        write_container(self._path, arrays, kind=self._kind, metadata=metadata, fs=self._fs)

    def _exists(self) -> bool:
        return container_exists(self._path, fs=self._fs)

    def _describe(self) -> dict[str, Any]:
        return {"filepath": str(self._filepath), "protocol": self._protocol, "kind": self._kind}


class EigenBasisDataset(Float32ContainerDataset):
    """Eigenbasis; vectors are re-orthonormalised in float64 on load."""

    default_kind = "eigenbasis"

    def _to_container(self, data: EigenBasis) -> tuple[dict[str, np.ndarray], dict]:
        return basis_to_arrays(data)

    def _from_container(self, arrays: dict[str, np.ndarray], metadata: dict) -> EigenBasis:
        return basis_from_arrays(arrays, metadata)


class EmbedderDataset(Float32ContainerDataset):
    """Frozen toy recognition model; the parameter hash is checked on load."""

    default_kind = "embedder"

    def _to_container(self, data: EmbeddingModel) -> tuple[dict[str, np.ndarray], dict]:
        arrays = {name: tensor.detach().cpu().numpy() for name, tensor in data.state_dict().items()}
        metadata = {
            "name": data.name,
            "architecture": data.architecture,
            "input_shape": list(data.input_shape),
            "d_f": data.d_f,
            "parameter_hash": parameter_hash(data),
        }
        return arrays, metadata

    def _from_container(self, arrays: dict[str, np.ndarray], metadata: dict) -> EmbeddingModel:
        model = EmbeddingModel(
            metadata["name"],
            metadata["architecture"],
            tuple(metadata["input_shape"]),
            int(metadata["d_f"]),
        )
        model.load_state_dict({name: torch.from_numpy(a) for name, a in arrays.items()}, strict=True)
        model = freeze(model)
        if parameter_hash(model) != metadata["parameter_hash"]:
            raise ValueError(f"Embedder at {self._filepath} does not match its recorded hash")
        return model


class DefenseCheckpointDataset(Float32ContainerDataset):
    default_kind = "defense"

    def _to_container(self, data: DefenseCheckpoint) -> tuple[dict[str, np.ndarray], dict]:
        return data.arrays, data.metadata

    def _from_container(self, arrays: dict[str, np.ndarray], metadata: dict) -> DefenseCheckpoint:
        return DefenseCheckpoint(arrays=arrays, metadata=metadata)


class AdversarialSetDataset(Float32ContainerDataset):
    """Adversarial set; ``previews`` > 0 also writes that many clamped PNGs.

    Example catalog entry::

        adversarial_fgsm:
          type: immune_face_defense.datasets.AdversarialSetDataset
          filepath: data/07_model_output/adversarial/fgsm
          previews: 8
    """

    default_kind = "adversarial_set"

    def __init__(
        self,
        filepath: str,
        previews: int = 0,
        kind: str | None = None,
        fs_args: dict[str, Any] | None = None,
    ) -> None:
        super().__init__(filepath, kind=kind, fs_args=fs_args)
        self._previews = previews

    def _to_container(self, data: AdversarialSet) -> tuple[dict[str, np.ndarray], dict]:
        metadata = {
            "attack": data.attack,
            "noise_ratios": data.noise_ratios,
            "skipped": data.skipped,
            "mean_noise_ratio": data.mean_noise_ratio if data.noise_ratios else None,
        }
        return data.images, metadata

    def _from_container(self, arrays: dict[str, np.ndarray], metadata: dict) -> AdversarialSet:
        return AdversarialSet(
            attack=metadata["attack"],
            images=arrays,
            noise_ratios={key: float(value) for key, value in metadata["noise_ratios"].items()},
            skipped=[int(index) for index in metadata["skipped"]],
        )

    def save(self, data: AdversarialSet) -> None:
        super().save(data)
        if not self._previews:
            return
        directory = f"{self._path.rstrip('/')}/previews"
        self._fs.makedirs(directory, exist_ok=True)
        for key in sorted(data.images)[: self._previews]:
            pixels, _ = clamp_to_unit(data.images[key])
            raster = np.round(pixels * 255.0).astype(np.uint8)
            with self._fs.open(f"{directory}/{key}.png", "wb") as stream:
                Image.fromarray(raster).save(stream, format="PNG")

    def _describe(self) -> dict[str, Any]:
        return {**super()._describe(), "previews": self._previews}
