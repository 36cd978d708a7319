import json
from types import SimpleNamespace

import pytest
from kedro.io import DataCatalog, MemoryDataset
from kedro.pipeline import Node, Pipeline

from immune_face_defense.datasets import PairProtocolDataset
from immune_face_defense.errors import ConfigValidationError
from immune_face_defense.hooks import MANIFEST_DIR, RunManifestHooks, ValidationHooks
from immune_face_defense.storage import path_checksum


def passthrough(protocol, faces, params):
    return protocol


class TestValidationHooks:
    def test_valid(self, tmp_path):
        context = SimpleNamespace(params={"eigenbasis": {"d_e": 16}}, project_path=tmp_path)
        ValidationHooks().after_context_created(context)

    def test_invalid(self, tmp_path):
        context = SimpleNamespace(params={"eigenbasis": {"d_e": 10**6}}, project_path=tmp_path)
        with pytest.raises(ConfigValidationError, match="exceeds"):
            ValidationHooks().after_context_created(context)


class TestRunManifestHooks:
    @pytest.fixture
    def run(self, tmp_path):
        pairs = tmp_path / "pairs.txt"
        pairs.write_text("# perturbed_side=first\na b 1\n")
        catalog = DataCatalog(
            datasets={
                "pair_protocol": PairProtocolDataset(str(pairs)),
                "holdout_faces": MemoryDataset([]),
            }
        )
        pipeline = Pipeline(
            [
                Node(
                    passthrough,
                    ["pair_protocol", "holdout_faces", "params:protocol"],
                    "echoed",
                    name="echo",
                )
            ]
        )
        hooks = RunManifestHooks()
        hooks.after_context_created(SimpleNamespace(project_path=tmp_path))
        run_params = {"pipeline_names": ["evaluate"], "env": "test", "runtime_params": {"a": 1}}
        hooks.before_pipeline_run(run_params, pipeline, catalog)
        hooks.after_pipeline_run(run_params, pipeline, catalog)
        return pairs

    def test_manifest(self, run, tmp_path):
        manifest = json.loads((tmp_path / MANIFEST_DIR / "evaluate.json").read_text())
        assert manifest["env"] == "test"
        assert manifest["runtime_params"] == {"a": 1}
        assert manifest["outputs"] == ["echoed"]
        assert set(manifest["inputs"]) == {"holdout_faces", "pair_protocol"}
        assert manifest["inputs"]["pair_protocol"]["sha256"] == path_checksum(str(run))
        assert manifest["inputs"]["holdout_faces"] == {"filepath": None, "sha256": None}

    def test_default_label(self, tmp_path):
        hooks = RunManifestHooks()
        hooks.after_context_created(SimpleNamespace(project_path=tmp_path))
        hooks.after_pipeline_run({}, Pipeline([]), DataCatalog())
        assert (tmp_path / MANIFEST_DIR / "__default__.json").exists()
