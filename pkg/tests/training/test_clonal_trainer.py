import itertools
import math

import numpy as np
import pandas as pd
import pytest
import torch

from immune_face_defense.eigen import Antibody
from immune_face_defense.ingest import stack_pixels
from immune_face_defense.model import build_defense, make_siamese
from immune_face_defense.recognition import parameter_hash
from immune_face_defense.training import (
    LOG_COLUMNS,
    TrainerConfig,
    TrainLogRecord,
    clone_antibodies,
    log_likelihood,
    make_optimizer,
    mask_log_likelihood,
    records_to_frame,
    run_training,
    sample_clone_masks,
    score_function_loss,
    siamese_loss,
    step_seed,
    train_step,
)


@pytest.fixture
def corpus(train_faces):
    return torch.from_numpy(stack_pixels(train_faces))


def _batch(train_faces, n=2):
    return torch.from_numpy(stack_pixels(train_faces[:n])).float()


class TestSampling:
    def test_step_seed(self):
        assert step_seed(0, 5) == step_seed(0, 5)
        assert step_seed(0, 5) != step_seed(0, 6)
        assert step_seed(0, 5) != step_seed(1, 5)
        assert 0 <= step_seed(3, 9) < 2**32

    def test_clone_masks_follow_probabilities(self):
        f_e = torch.tensor([0.0, 1.0, 0.5], dtype=torch.float64)
        masks = sample_clone_masks(f_e, 400, torch.Generator().manual_seed(0))
        assert masks.shape == (400, 3)
        assert float(masks[:, 0].sum()) == 0.0
        assert float(masks[:, 1].sum()) == 400.0
        assert 120 < float(masks[:, 2].sum()) < 280

    def test_k_must_be_positive(self):
        with pytest.raises(ValueError):
            sample_clone_masks(torch.ones(2), 0, torch.Generator())

    def test_clone_antibodies_seeded(self):
        f_e = torch.full((6,), 0.5)
        assert clone_antibodies(f_e, 5, seed=1) == clone_antibodies(f_e, 5, seed=1)
        assert all(isinstance(antibody, Antibody) for antibody in clone_antibodies(f_e, 2, 0))


class TestLikelihood:
    def test_mask_log_likelihood(self):
        masks = torch.tensor([[1.0, 0.0], [0.0, 1.0]], dtype=torch.float64)
        f_e = torch.tensor([0.8, 0.3], dtype=torch.float64)
        expected = torch.tensor(
            [math.log(0.8) + math.log(0.7), math.log(0.2) + math.log(0.3)], dtype=torch.float64
        )
        torch.testing.assert_close(mask_log_likelihood(masks, f_e), expected)

    def test_log_likelihood_of_antibody(self):
        antibody = Antibody.from_indices([0], 2)
        assert log_likelihood(antibody, torch.tensor([0.8, 0.3])) == pytest.approx(
            math.log(0.8) + math.log(0.7), rel=1e-6
        )

    def test_log_likelihood_length_mismatch(self):
        with pytest.raises(ValueError, match="d_e=3"):
            log_likelihood(Antibody.full(3), torch.tensor([0.5, 0.5]))

    def test_saturated_probabilities_stay_finite(self):
        masks = torch.tensor([[1.0, 0.0]])
        value = mask_log_likelihood(masks, torch.tensor([0.0, 1.0], dtype=torch.float64))
        assert bool(torch.isfinite(value).all())


class TestScoreFunctionLoss:
    def test_equal_affinities_give_zero_gradient(self):
        logits = torch.zeros(5, dtype=torch.float64, requires_grad=True)
        masks = torch.bernoulli(torch.full((4, 5), 0.5), generator=torch.Generator().manual_seed(0))
        loss = score_function_loss(masks, torch.sigmoid(logits), torch.full((4,), 3.0))
        loss.backward()
        assert float(loss) == 0.0
        assert torch.count_nonzero(logits.grad) == 0

    def test_gradient_matches_enumeration(self):
        d_e = 8
        generator = torch.Generator().manual_seed(0)
        logits = torch.randn(d_e, generator=generator, dtype=torch.float64)
        all_masks = torch.tensor(
            list(itertools.product([0.0, 1.0], repeat=d_e)), dtype=torch.float64
        )
        table = torch.randn(len(all_masks), generator=generator, dtype=torch.float64)
        powers = 2 ** torch.arange(d_e - 1, -1, -1, dtype=torch.float64)

        exact_logits = logits.clone().requires_grad_(True)
        probabilities = torch.exp(mask_log_likelihood(all_masks, torch.sigmoid(exact_logits)))
        (probabilities * table).sum().backward()
        exact = exact_logits.grad

        k = 20000
        estimate_logits = logits.clone().requires_grad_(True)
        f_e = torch.sigmoid(estimate_logits)
        masks = sample_clone_masks(f_e, k, generator)
        affinities = table[(masks @ powers).long()]
        score_function_loss(masks, f_e, affinities).backward()
        estimate = -estimate_logits.grad

        cos = float(torch.dot(estimate, exact) / (estimate.norm() * exact.norm()))
        assert cos >= 0.9


class TestLogRecords:
    def test_row_round_trip(self):
        record = TrainLogRecord(3, "warmup", 1.0, 2.0, 0.1, math.nan, 0.2, 0.3, 0.4)
        row = record.to_row()
        assert list(row) == LOG_COLUMNS
        restored = TrainLogRecord.from_row(row)
        assert restored.step == 3
        assert math.isnan(restored.specificity_v)

    def test_frame(self):
        frame = records_to_frame([TrainLogRecord(0, "warmup", 1, 2, 0.1, 1, 0.2, 0.3, 0.4)])
        assert list(frame.columns) == LOG_COLUMNS
        assert len(frame) == 1
        assert records_to_frame([]).empty


class TestTrainStep:
    def test_warmup_step(self, defense, embedder, trainer_cfg, train_faces):
        siamese = make_siamese(defense, trainer_cfg.xi)
        optimizer = make_optimizer(defense, trainer_cfg)
        before = {name: p.clone() for name, p in defense.named_parameters()}
        items = defense.bank.items.clone()
        record = train_step(
            defense, siamese, _batch(train_faces), embedder, optimizer, trainer_cfg, seed=0
        )
        assert record.step == 0
        assert record.phase == "warmup"
        assert not record.aborted
        assert 0.0 <= record.p_mutation <= 0.5
        assert 0.0 <= record.mean_cardinality <= defense.head.d_e
        assert math.isfinite(record.specificity_v)
        assert any(not torch.equal(p, before[n]) for n, p in defense.named_parameters())
        changed_rows = (defense.bank.items != items).any(dim=1)
        assert 1 <= int(changed_rows.sum()) <= 2

    def test_adversarial_step_uses_perturbed_inputs(
        self, defense, embedder, trainer_cfg, train_faces
    ):
        defense.phase = "adversarial"
        siamese = make_siamese(defense, trainer_cfg.xi)
        optimizer = make_optimizer(defense, trainer_cfg)
        record = train_step(
            defense, siamese, _batch(train_faces), embedder, optimizer, trainer_cfg, seed=0
        )
        assert record.phase == "adversarial"
        assert math.isfinite(record.loss_mean)
        assert record.loss_max >= record.loss_mean

    def test_siamese_loss_range(self, defense, embedder, clean_image):
        siamese = make_siamese(defense, 0.9)
        image = clean_image.float()
        with torch.no_grad():
            loss = siamese_loss(siamese, embedder, embedder(image.unsqueeze(0))[0])(image)
        assert -1e-6 <= float(loss) <= 2.0 + 1e-6

    def test_non_finite_step_is_aborted(self, defense, embedder, trainer_cfg, train_faces, caplog):
        siamese = make_siamese(defense, trainer_cfg.xi)
        optimizer = make_optimizer(defense, trainer_cfg)
        with torch.no_grad():
            defense.head.affine.weight[0, 0] = float("nan")
        items = defense.bank.items.clone()
        analyzer = {name: p.clone() for name, p in defense.analyzer.named_parameters()}
        record = train_step(
            defense, siamese, _batch(train_faces), embedder, optimizer, trainer_cfg, seed=0
        )
        assert record.aborted
        assert "aborted" in caplog.text
        torch.testing.assert_close(defense.bank.items, items)
        for name, parameter in defense.analyzer.named_parameters():
            torch.testing.assert_close(parameter, analyzer[name])

    def test_late_non_finite_gradient_restores_memory(
        self, defense, embedder, trainer_cfg, train_faces, monkeypatch
    ):
        def nan_affinities(reconstructions, *args, **kwargs):
            return torch.full((reconstructions.shape[0],), float("nan"), dtype=reconstructions.dtype)

        monkeypatch.setattr(
            "immune_face_defense.training.clonal_trainer.affinity_scores", nan_affinities
        )
        siamese = make_siamese(defense, trainer_cfg.xi)
        optimizer = make_optimizer(defense, trainer_cfg)
        items = defense.bank.items.clone()
        head = {name: p.clone() for name, p in defense.head.named_parameters()}
        record = train_step(
            defense, siamese, _batch(train_faces), embedder, optimizer, trainer_cfg, seed=0
        )
        assert record.aborted
        torch.testing.assert_close(defense.bank.items, items, rtol=0, atol=0)
        for name, parameter in defense.head.named_parameters():
            torch.testing.assert_close(parameter, head[name], rtol=0, atol=0)


class TestRunTraining:
    def test_logs_every_step(self, defense, defense_cfg, embedder, trainer_cfg, corpus):
        frozen = parameter_hash(embedder)
        state, records = run_training(defense, corpus, embedder, trainer_cfg, defense_cfg)
        assert state.step == trainer_cfg.total_steps
        assert [r.step for r in records] == list(range(trainer_cfg.total_steps))
        assert [r.phase for r in records] == ["warmup"] * 2 + ["adversarial"] * 2
        assert parameter_hash(embedder) == frozen

    def test_without_ssat(self, defense, defense_cfg, embedder, trainer_cfg, corpus):
        cfg = trainer_cfg.model_copy(update={"use_ssat": False})
        _, records = run_training(defense, corpus, embedder, cfg, defense_cfg)
        assert not any(record.aborted for record in records)

    def test_empty_corpus(self, defense, defense_cfg, embedder, trainer_cfg):
        with pytest.raises(ValueError, match="non-empty"):
            run_training(defense, torch.zeros(0, 16, 16), embedder, trainer_cfg, defense_cfg)

    @pytest.mark.slow
    def test_warmup_lowers_reconstruction_error(self, defense, defense_cfg, embedder, corpus):
        cfg = TrainerConfig(
            k=8, phi=0.05, batch_size=4, warmup_steps=150, adversarial_steps=0, log_every=50, seed=0
        )
        _, records = run_training(defense, corpus, embedder, cfg, defense_cfg)
        recon = records_to_frame(records)["RECON_L2"].to_numpy()
        assert not any(record.aborted for record in records)
        assert recon[-20:].mean() < recon[:20].mean()

    def test_seeded(self, basis, defense_cfg, embedder, trainer_cfg, corpus):
        first, _ = run_training(
            build_defense(basis, defense_cfg, 0.9), corpus, embedder, trainer_cfg, defense_cfg
        )
        second, _ = run_training(
            build_defense(basis, defense_cfg, 0.9), corpus, embedder, trainer_cfg, defense_cfg
        )
        for name, value in first.state_dict().items():
            torch.testing.assert_close(value, second.state_dict()[name], rtol=0, atol=0)

    @pytest.mark.slow
    def test_resume_matches_uninterrupted_run(
        self, basis, defense_cfg, embedder, corpus, tmp_path
    ):
        cfg = TrainerConfig(
            k=3,
            batch_size=2,
            warmup_steps=2,
            adversarial_steps=4,
            checkpoint_every=3,
            log_every=1,
            epsilon=0.9,
            xi=0.9,
            seed=5,
        )
        uninterrupted, full_log = run_training(
            build_defense(basis, defense_cfg, cfg.epsilon),
            corpus,
            embedder,
            cfg,
            defense_cfg,
            checkpoint_dir=tmp_path / "a",
        )

        partial = cfg.model_copy(update={"adversarial_steps": 1})
        run_training(
            build_defense(basis, defense_cfg, cfg.epsilon),
            corpus,
            embedder,
            partial,
            defense_cfg,
            checkpoint_dir=tmp_path / "b",
        )
        resumed, resumed_log = run_training(
            build_defense(basis, defense_cfg, cfg.epsilon),
            corpus,
            embedder,
            cfg,
            defense_cfg,
            checkpoint_dir=tmp_path / "b",
        )

        assert resumed.step == uninterrupted.step == 6
        for name, value in uninterrupted.state_dict().items():
            torch.testing.assert_close(resumed.state_dict()[name], value, rtol=0, atol=0)
        pd.testing.assert_frame_equal(records_to_frame(resumed_log), records_to_frame(full_log))
        np.testing.assert_array_equal(
            [r.step for r in resumed_log], np.arange(cfg.total_steps)
        )
