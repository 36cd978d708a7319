import pytest

from immune_face_defense.pipelines.train_defense.nodes import resolve_run, train_defense
from immune_face_defense.training import LOG_COLUMNS, restore_defense

DEFENSE = {"d_n": 8, "d_m": 4, "analyzer": "conv_small", "seed": 0}
TRAINER = {"k": 3, "batch_size": 2, "warmup_steps": 2, "adversarial_steps": 2, "log_every": 1}


def test_resolve_run_applies_overrides():
    run, defense_cfg, trainer_cfg = resolve_run(
        DEFENSE,
        TRAINER,
        {"name": "no_memory", "overrides": {"defense": {"use_memory": False}, "trainer": {"k": 5}}},
    )
    assert run.name == "no_memory"
    assert defense_cfg.use_memory is False
    assert defense_cfg.d_n == 8
    assert trainer_cfg.k == 5
    assert trainer_cfg.warmup_steps == 2


def test_resolve_run_rejects_unknown_override():
    with pytest.raises(ValueError):
        resolve_run(DEFENSE, TRAINER, {"overrides": {"trainer": {"clones": 5}}})


def test_train_defense(basis, train_faces, embedder, tmp_path):
    run = {"name": "full", "checkpoint_dir": str(tmp_path / "checkpoints")}
    trainer = {**TRAINER, "checkpoint_every": 2}
    checkpoint, log = train_defense(basis, train_faces, embedder, DEFENSE, trainer, run)
    assert list(log.columns) == LOG_COLUMNS
    assert log["STEP"].tolist() == [0, 1, 2, 3]
    assert set(log["PHASE"]) == {"warmup", "adversarial"}
    assert restore_defense(checkpoint, basis).step == 4
    assert any((tmp_path / "checkpoints").iterdir())
