"""Command line entry point.

One sub-command per experiment stage, each running the registered Kedro pipeline
of the same name::

    immune-face-defense fit-basis --env full_scale
    immune-face-defense train-defense --params trainer.k=20 --params run.name=k20

Exit codes: 0 on success, 1 when the configuration or an input path is invalid,
2 on any failure while running. ``run`` is Kedro's own run command, which
``kedro run`` picks up from this module.
"""

import logging
from collections.abc import Sequence
from pathlib import Path

import click
from kedro.framework.cli.project import run
from kedro.framework.project import pipelines
from kedro.framework.session import KedroSession
from kedro.framework.startup import bootstrap_project
from kedro.io import DataCatalog
from kedro.pipeline import Pipeline
from omegaconf import OmegaConf
from omegaconf.errors import OmegaConfBaseException
from pydantic import ValidationError

from immune_face_defense.errors import ConfigValidationError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_FAILURE = 2

CONTEXT_SETTINGS = {"help_option_names": ["-h", "--help"]}

COMMANDS = {
    "synthesize-corpus": "synthesize_corpus",
    "fit-basis": "fit_basis",
    "train-embedder": "train_embedder",
    "train-defense": "train_defense",
    "attack": "attack",
    "evaluate": "evaluate",
    "analyze": "analyze",
    "ablation-study": "ablation_study",
}

__all__ = ["cli", "run"]


def parse_params(params: Sequence[str]) -> dict:
    """``key.sub=value`` overrides as a nested dict.

    Raises:
        ConfigValidationError: On an entry that is not ``key=value``
    """
    for entry in params:
        if "=" not in entry:
            raise ConfigValidationError(f"Override '{entry}' is not of the form key=value")
    try:
        return OmegaConf.to_container(OmegaConf.from_dotlist(list(params)), resolve=True)
    except OmegaConfBaseException as exc:
        raise ConfigValidationError(f"Cannot parse overrides {list(params)}: {exc}") from exc


def check_inputs(pipeline: Pipeline, catalog: DataCatalog) -> None:
    """Every free dataset input must be registered and present on disk."""
    missing = [
        name
        for name in sorted(pipeline.inputs())
        if not (name == "parameters" or name.startswith("params:"))
        and (name not in catalog or not catalog.exists(name))
    ]
    if missing:
        raise ConfigValidationError(
            f"Missing inputs {missing}; run the pipelines producing them first"
        )


def execute(pipeline_name: str, env: str | None, params: Sequence[str], project_path: Path) -> int:
    """Run one registered pipeline and translate its outcome into an exit code."""
    try:
        runtime_params = parse_params(params)
        with KedroSession.create(
            project_path=project_path, env=env, runtime_params=runtime_params
        ) as session:
            context = session.load_context()
            check_inputs(pipelines[pipeline_name], context.catalog)
            session.run(pipeline_name=pipeline_name)
    except (ConfigValidationError, ValidationError) as exc:
        logger.error("Invalid configuration: %s", exc)
        return EXIT_INVALID
    except Exception:
        logger.exception("Pipeline '%s' failed", pipeline_name)
        return EXIT_FAILURE
    return EXIT_OK


@click.group(context_settings=CONTEXT_SETTINGS, name="immune-face-defense")
def cli() -> None:
    """Immune face defense experiments."""


def _make_command(command_name: str, pipeline_name: str) -> click.Command:
    @cli.command(command_name, help=f"Run the '{pipeline_name}' pipeline.")
    @click.option("--env", "-e", default=None, help="Kedro configuration environment, e.g. full_scale.")
    @click.option(
        "--params",
        "-p",
        multiple=True,
        help="Parameter override key.sub=value; repeat for several.",
    )
    @click.option(
        "--project-path",
        type=click.Path(file_okay=False, path_type=Path),
        default=Path.cwd,
        help="Kedro project root.",
    )
    @click.pass_context
    def command(ctx: click.Context, env: str | None, params: tuple[str, ...], project_path: Path):
        bootstrap_project(project_path)
        ctx.exit(execute(pipeline_name, env, params, project_path))

    return command


for _command_name, _pipeline_name in COMMANDS.items():
    _make_command(_command_name, _pipeline_name)

cli.add_command(run)
