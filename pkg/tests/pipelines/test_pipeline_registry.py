import pytest

from immune_face_defense.cli import COMMANDS
from immune_face_defense.pipeline_registry import register_pipelines
from immune_face_defense.pipelines.ablation_study.pipeline import ABLATIONS, SWAP


@pytest.fixture(scope="module")
def pipelines():
    return register_pipelines()


def test_every_command_has_a_pipeline(pipelines):
    assert set(COMMANDS.values()) <= set(pipelines)


def test_default_runs_the_whole_experiment(pipelines):
    names = {node.name for node in pipelines["__default__"].nodes}
    assert {
        "split_faces",
        "fit_basis",
        "train_embedder",
        "train_defense",
        "generate_adaptive_pgd_set",
        "run_sticker_attack",
        "evaluate_defense",
        "evaluate_sticker",
        "analyze_antibodies",
        "summarise_acceptance",
    } <= names
    assert pipelines["__default__"].inputs() >= {"face_corpus", "params:trainer"}


def test_stage_pipelines_start_from_the_corpus(pipelines):
    for name in ("fit_basis", "train_embedder", "train_defense", "evaluate"):
        assert "face_corpus" in pipelines[name].inputs()
    assert pipelines["synthesize_corpus"].outputs() == {"face_corpus"}


def test_ablations_are_namespaced(pipelines):
    study = pipelines["ablation_study"]
    names = {node.name for node in study.nodes}
    for ablation in ABLATIONS:
        assert f"{ablation}.train_defense" in names
        assert f"params:ablations.{ablation}" in study.inputs()
    assert f"{SWAP}.train_embedder" in names
    assert "params:swap_embedder" in study.inputs()
    assert {"ablation_summary", "ablation_table"} <= study.outputs()


def test_ablations_reuse_the_full_adversarial_sets(pipelines):
    study = pipelines["ablation_study"]
    assert {"adversarial_fgsm", "adversarial_pgd", "eval_reports"} <= study.inputs()
    assert "no_ssat.adversarial_fgsm" not in study.all_outputs()
    assert "embedder_swap.adversarial_fgsm" in study.all_outputs()
