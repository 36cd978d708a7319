"""``FaceCorpusDataset`` loads and saves ``root/<identity>/<image>`` face corpora."""

from pathlib import PurePosixPath
from typing import Any

import fsspec
from kedro.io.core import AbstractDataset, DatasetError, get_protocol_and_path

from immune_face_defense.ingest import FaceImage, load_corpus, save_corpus


class FaceCorpusDataset(AbstractDataset[list[FaceImage], list[FaceImage]]):
    """Face corpus on the local file system, one directory per identity.

    Loading converts to grayscale, resizes bilinearly and scales to ``[0, 1]``;
    saving writes 8-bit PNGs.

    Example catalog entry::

        face_corpus:
          type: immune_face_defense.datasets.FaceCorpusDataset
          filepath: data/01_raw/faces
          image_size: [64, 64]
    """

    def __init__(self, filepath: str, image_size: tuple[int, int] | list[int] = (64, 64)) -> None:
        protocol, path = get_protocol_and_path(filepath)
        if protocol != "file":
            raise DatasetError(f"FaceCorpusDataset reads local directories only, got '{filepath}'")
        self._protocol = protocol
        self._fs = fsspec.filesystem(protocol)
        self._filepath = PurePosixPath(path)
        self._image_size = tuple(int(size) for size in image_size)

    def load(self) -> list[FaceImage]:
        return load_corpus(str(self._filepath), self._image_size)

    def save(self, data: list[FaceImage]) -> None:
        save_corpus(data, str(self._filepath))

    def _exists(self) -> bool:
        return self._fs.isdir(str(self._filepath)) and bool(self._fs.ls(str(self._filepath)))

    def _describe(self) -> dict[str, Any]:
        return {"filepath": str(self._filepath), "image_size": self._image_size}
