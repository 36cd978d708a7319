"""``PairProtocolDataset`` stores verification pairs as plain text.

Format::

    # perturbed_side=first
    id_000/img_03.png id_000/img_07.png 1
    id_004/img_01.png id_019/img_05.png 0
"""

import re
from pathlib import PurePosixPath
from typing import Any

import fsspec
import pandas as pd
from kedro.io.core import AbstractDataset, DatasetError, get_filepath_str, get_protocol_and_path

from immune_face_defense.ingest import PAIR_COLUMNS, PairProtocol

HEADER = re.compile(r"^#\s*perturbed_side\s*=\s*(first|second)\s*$")


def format_protocol(protocol: PairProtocol) -> str:
    lines = [f"# perturbed_side={protocol.perturbed_side}"]
    for id_1, id_2, positive in protocol.pairs[PAIR_COLUMNS].itertuples(index=False):
        lines.append(f"{id_1} {id_2} {int(bool(positive))}")
    return "\n".join(lines) + "\n"


def parse_protocol(text: str) -> PairProtocol:
    """Parse the pairs file; a missing header means ``perturbed_side=first``."""
    side = "first"
    rows = []
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            match = HEADER.match(line)
            if match:
                side = match.group(1)
            continue
        fields = line.split()
        if len(fields) != 3 or fields[2] not in ("0", "1"):
            raise DatasetError(f"Line {number} is not 'id1 id2 {{0|1}}': {line!r}")
        rows.append((fields[0], fields[1], fields[2] == "1"))
    pairs = pd.DataFrame(rows, columns=PAIR_COLUMNS).astype({"IS_POSITIVE": bool})
    return PairProtocol(pairs=pairs, perturbed_side=side)


class PairProtocolDataset(AbstractDataset[PairProtocol, PairProtocol]):
    def __init__(self, filepath: str, fs_args: dict[str, Any] | None = None) -> None:
        protocol, path = get_protocol_and_path(filepath)
        self._protocol = protocol
        self._fs = fsspec.filesystem(protocol, **(fs_args or {}))
        self._filepath = PurePosixPath(path)

    def load(self) -> PairProtocol:
        with self._fs.open(get_filepath_str(self._filepath, self._protocol), "r") as stream:
            return parse_protocol(stream.read())

    def save(self, data: PairProtocol) -> None:
        path = get_filepath_str(self._filepath, self._protocol)
        self._fs.makedirs(str(self._filepath.parent), exist_ok=True)
        with self._fs.open(path, "w") as stream:
            stream.write(format_protocol(data))

    def _exists(self) -> bool:
        return self._fs.exists(get_filepath_str(self._filepath, self._protocol))

    def _describe(self) -> dict[str, Any]:
        return {"filepath": str(self._filepath), "protocol": self._protocol}
