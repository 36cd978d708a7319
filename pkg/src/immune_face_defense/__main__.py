"""immune-face-defense file for ensuring the package is executable
as `immune-face-defense` and `python -m immune_face_defense`
"""
import sys
from pathlib import Path
from typing import Any

from kedro.framework.project import configure_project


def main(*args, **kwargs) -> Any:
    package_name = Path(__file__).parent.name
    configure_project(package_name)

    interactive = hasattr(sys, "ps1")
    kwargs["standalone_mode"] = not interactive

    from immune_face_defense.cli import cli

    return cli(*args, **kwargs)


if __name__ == "__main__":
    main()
