"""Project hooks: parameter validation and per-run input manifests."""

import json
import logging
from pathlib import Path
from typing import Any

import fsspec
from kedro.framework.context import KedroContext
from kedro.framework.hooks import hook_impl
from kedro.io import DataCatalog
from kedro.pipeline import Pipeline

from immune_face_defense.config import validate_parameters
from immune_face_defense.storage import path_checksum

logger = logging.getLogger(__name__)

MANIFEST_DIR = Path("data") / "08_reporting" / "manifests"


class ValidationHooks:
    """Fail on an inconsistent configuration before any node runs."""

    @hook_impl
    def after_context_created(self, context: KedroContext) -> None:
        validate_parameters(context.params, project_path=context.project_path)


class RunManifestHooks:
    """Write ``data/08_reporting/manifests/<pipeline>.json`` naming the inputs of a run by checksum."""

    def __init__(self) -> None:
        self._project_path: Path | None = None
        self._inputs: list[str] = []

    @hook_impl
    def after_context_created(self, context: KedroContext) -> None:
        self._project_path = Path(context.project_path)

    @hook_impl
    def before_pipeline_run(
        self, run_params: dict[str, Any], pipeline: Pipeline, catalog: DataCatalog
    ) -> None:
        self._inputs = sorted(name for name in pipeline.inputs() if not _is_parameter(name))

    @hook_impl
    def after_pipeline_run(
        self, run_params: dict[str, Any], pipeline: Pipeline, catalog: DataCatalog
    ) -> None:
        if self._project_path is None:
            return
        inputs = {}
        for name in self._inputs:
            filepath = _dataset_filepath(catalog, name)
            inputs[name] = {
                "filepath": filepath,
                "sha256": None if filepath is None else path_checksum(filepath),
            }
        manifest = {
            "pipeline": _pipeline_label(run_params),
            "env": run_params.get("env"),
            "runtime_params": run_params.get("runtime_params") or {},
            "inputs": inputs,
            "outputs": sorted(name for name in pipeline.outputs() if not _is_parameter(name)),
        }
        directory = self._project_path / MANIFEST_DIR
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / f"{manifest['pipeline']}.json"
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str))
        logger.info("Run manifest written to %s", path)


def _is_parameter(name: str) -> bool:
    return name == "parameters" or name.startswith("params:")


def _pipeline_label(run_params: dict[str, Any]) -> str:
    names = run_params.get("pipeline_names") or run_params.get("pipeline_name")
    if not names:
        return "__default__"
    if isinstance(names, str):
        return names
    return "+".join(names)


def _dataset_filepath(catalog: DataCatalog, name: str) -> str | None:
    if name not in catalog:
        return None
    filepath = catalog.get(name)._describe().get("filepath")
    if filepath is None:
        return None
    protocol, _ = fsspec.core.split_protocol(str(filepath))
    return str(filepath) if protocol in (None, "file") else None
