"""The whole experiment on the test preset, wired through the registered pipelines."""

from pathlib import Path

import pytest
from kedro.config import OmegaConfigLoader
from kedro.io import DataCatalog, MemoryDataset
from kedro.runner import SequentialRunner

from immune_face_defense.config import validate_parameters
from immune_face_defense.ingest import synthesize_corpus
from immune_face_defense.pipeline_registry import register_pipelines

PROJECT_PATH = Path(__file__).resolve().parents[2]


def parameter_feeds(parameters: dict, prefix: str = "params:") -> dict:
    feeds = {}
    for key, value in parameters.items():
        feeds[f"{prefix}{key}"] = value
        if isinstance(value, dict):
            feeds.update(parameter_feeds(value, prefix=f"{prefix}{key}."))
    return feeds


@pytest.fixture
def parameters(tmp_path):
    loader = OmegaConfigLoader(
        conf_source=str(PROJECT_PATH / "conf"),
        base_env="base",
        default_run_env="local",
        env="test",
    )
    params = dict(loader["parameters"])
    params["run"] = {**params["run"], "checkpoint_dir": str(tmp_path / "full")}
    params["ablations"] = {
        name: {**run, "checkpoint_dir": str(tmp_path / name)}
        for name, run in params["ablations"].items()
    }
    # 0.08 keeps the attack directions above the EER resolution of 24 pairs
    params["attacks"] = {
        name: {**cfg, "noise_ratio": 0.08} if "noise_ratio" in cfg else cfg
        for name, cfg in params["attacks"].items()
    }
    validate_parameters(params, project_path=PROJECT_PATH)
    return params


@pytest.mark.slow
def test_default_pipeline(parameters):
    pipeline = register_pipelines()["__default__"]
    synthetic = parameters["corpus"]["synthetic"]
    corpus = synthesize_corpus(
        synthetic["n_identities"],
        synthetic["images_per_identity"],
        tuple(parameters["corpus"]["image_size"]),
        seed=synthetic["seed"],
    )
    datasets = {"face_corpus": MemoryDataset(corpus, copy_mode="assign")}
    for name, value in parameter_feeds(parameters).items():
        datasets[name] = MemoryDataset(value, copy_mode="assign")
    for name in pipeline.all_outputs():
        datasets[name] = MemoryDataset(copy_mode="assign")
    catalog = DataCatalog(datasets=datasets)

    SequentialRunner().run(pipeline, catalog)

    # Intermediate datasets are released once consumed; only free outputs remain.
    curves = catalog.load("eer_curves")
    assert set(curves["EXPERIMENT"]) == {
        f"{attack}_{label}"
        for attack in ("clean", "fgsm", "pgd", "adaptive")
        for label in ("undefended", "defended")
    }
    assert "clean_defended" in catalog.load("eval_table")
    assert len(catalog.load("antibody_analytics")) == 16
    summary = catalog.load("acceptance_summary")
    assert set(summary) >= {"defense_recovery", "adaptive_attack", "sticker", "antibody_trends"}
    assert 0.0 <= summary["defense_recovery"]["clean"] <= 1.0
    assert summary["sticker"]["defended"] is not None

    recovery = summary["defense_recovery"]
    assert recovery["attacked_defended"] < recovery["attacked"]
    adaptive = summary["adaptive_attack"]
    assert adaptive["adaptive_defended"] >= adaptive["pgd_defended"]
