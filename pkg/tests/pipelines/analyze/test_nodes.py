import matplotlib.pyplot as plt
import pytest
import torch

from immune_face_defense.evaluation import ANALYTICS_COLUMNS
from immune_face_defense.ingest import stack_pixels
from immune_face_defense.pipelines.analyze.nodes import analyze_antibodies, summarise_acceptance
from immune_face_defense.training import records_to_frame, run_training


@pytest.fixture
def training_log(defense, train_faces, embedder, trainer_cfg, defense_cfg):
    corpus = torch.from_numpy(stack_pixels(train_faces)).to(torch.float32)
    _, records = run_training(defense, corpus, embedder, trainer_cfg, defense_cfg)
    return records_to_frame(records)


def test_analyze_antibodies(training_log):
    table, trends, figure = analyze_antibodies(
        training_log, {"warmup_steps": 2, "adversarial_steps": 2}, {"window": 1}
    )
    assert list(table.columns) == ANALYTICS_COLUMNS
    assert len(table) == 4
    assert set(trends["trends"]) >= {"cardinality_rises_in_warmup"}
    assert len(figure.axes) == 3
    plt.close(figure)


def test_summarise_acceptance_without_inputs():
    summary = summarise_acceptance({}, {"trends": {"a": True}}, {"defended": 0.9, "undefended": 0.2})
    assert summary["defense_recovery"]["passed"] is None
    assert summary["sticker"]["passed"] is True
    assert summary["antibody_trends"]["passed"] is True
