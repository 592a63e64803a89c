import numpy as np
import pytest
from numpy.testing import assert_array_equal

from checkpoint import load_checkpoint
from config import PipelineConfig, SceneConfig
from dataset import ClipDataset, export_dataset, generate_dataset
from engine.tensor import precision
from metrics import read_metrics, read_pr_curve
from trainer import BEST_CHECKPOINT, LAST_CHECKPOINT, Trainer, evaluate_model


def make_trainer(config, dataset_dir, out_dir, with_val=True):
    train = ClipDataset.from_directory(dataset_dir, "train", config.frames)
    val = ClipDataset.from_directory(dataset_dir, "val", config.frames) if with_val else None
    return Trainer(config, train, val, out_dir)


def with_steps(config, max_steps, **optimizer):
    return config.model_copy(update={"optimizer": config.optimizer.model_copy(update={"max_steps": max_steps, **optimizer})})


def params(path):
    return {k: v for k, v in load_checkpoint(path).state.items() if k.startswith("param/")}


def test_zero_epochs_writes_initial_state(tiny_config, dataset_dir, tmp_path):
    config = tiny_config.model_copy(update={"optimizer": tiny_config.optimizer.model_copy(update={"epochs": 0})})
    result = make_trainer(config, dataset_dir, tmp_path / "run").run()
    assert result.step == 0
    assert (tmp_path / "run" / LAST_CHECKPOINT).exists()
    assert read_metrics(tmp_path / "run" / "metrics.json").history == []


def test_one_epoch_writes_artifacts(tiny_config, dataset_dir, tmp_path):
    trainer = make_trainer(tiny_config, dataset_dir, tmp_path / "run")
    result = trainer.run()
    assert result.step == trainer.steps_per_epoch == 5
    assert len(result.losses) == 5
    assert all(np.isfinite(loss) for _, loss in result.losses)
    out = tmp_path / "run"
    for name in (LAST_CHECKPOINT, BEST_CHECKPOINT, "metrics.json", "pr_curve.csv"):
        assert (out / name).exists(), name
    report = read_metrics(out / "metrics.json")
    assert [h.epoch for h in report.history] == [0]
    assert 0.0 <= report.map50 <= 1.0
    read_pr_curve(out / "pr_curve.csv")
    assert load_checkpoint(out / LAST_CHECKPOINT).step == 5


def test_zero_learning_rate_leaves_parameters_unchanged(tiny_config, dataset_dir, tmp_path):
    config = with_steps(tiny_config, 2, lr=0.0)
    trainer = make_trainer(config, dataset_dir, tmp_path / "run", with_val=False)
    before = {f"param/{k}": p.data.copy() for k, p in trainer.model.named_parameters()}
    trainer.run()
    after = params(tmp_path / "run" / LAST_CHECKPOINT)
    for key, value in before.items():
        assert_array_equal(after[key], value, err_msg=key)


def test_identical_runs_write_identical_metrics(tiny_config, dataset_dir, tmp_path):
    config = with_steps(tiny_config, 2)
    make_trainer(config, dataset_dir, tmp_path / "a").run()
    make_trainer(config, dataset_dir, tmp_path / "b").run()
    assert (tmp_path / "a" / "metrics.json").read_bytes() == (tmp_path / "b" / "metrics.json").read_bytes()


def test_resume_matches_uninterrupted_run(tiny_config, dataset_dir, tmp_path):
    make_trainer(with_steps(tiny_config, 2, lr_drop_at=1.0), dataset_dir, tmp_path / "full", with_val=False).run()
    make_trainer(with_steps(tiny_config, 1, lr_drop_at=1.0), dataset_dir, tmp_path / "half", with_val=False).run()
    resumed = make_trainer(with_steps(tiny_config, 2, lr_drop_at=1.0), dataset_dir, tmp_path / "resumed", with_val=False)
    resumed.resume(tmp_path / "half" / LAST_CHECKPOINT)
    assert resumed.step == 1
    resumed.run()
    full = params(tmp_path / "full" / LAST_CHECKPOINT)
    again = params(tmp_path / "resumed" / LAST_CHECKPOINT)
    for key in full:
        assert_array_equal(again[key], full[key], err_msg=key)


def test_evaluate_model_scores_every_frame(tiny_config, dataset_dir, tmp_path):
    trainer = make_trainer(tiny_config, dataset_dir, tmp_path / "run")
    with precision(tiny_config.precision):
        evaluation = evaluate_model(trainer.model, trainer.val_data, tiny_config)
    assert len(evaluation.detections) == len(trainer.val_data) == 3
    assert trainer.model.training


@pytest.mark.slow
def test_overfits_a_tiny_split(tiny_config, dataset_dir, tmp_path):
    config = with_steps(tiny_config, 60, weight_decay=0.0)
    result = make_trainer(config, dataset_dir, tmp_path / "run", with_val=False).run()
    losses = [loss for _, loss in result.losses]
    assert np.mean(losses[-5:]) < np.mean(losses[:5])


def synthetic_split(root, count, val_count, seed=0):
    scene = SceneConfig(target_mse=33.0, scr=3.0, seed=seed)
    export_dataset(generate_dataset(scene, count, workers=4), root, val_count=val_count)
    return root


@pytest.mark.slow
def test_overfit_preset_drops_loss_by_ninety_percent(tmp_path):
    config = PipelineConfig.preset("overfit")
    assert config.optimizer.max_steps == 300
    root = synthetic_split(tmp_path / "data", 8, 0)
    result = make_trainer(config, root, tmp_path / "run", with_val=False).run()
    losses = dict(result.losses)
    assert result.step == 300
    assert losses[300] <= 0.1 * losses[10]


@pytest.mark.slow
def test_desk_preset_detects_held_out_targets(tmp_path):
    config = PipelineConfig.preset("desk")
    root = synthetic_split(tmp_path / "data", 250, 50, seed=1)
    trainer = make_trainer(config, root, tmp_path / "run")
    assert len(trainer.val_data) == 50 * config.frames
    result = trainer.run()
    assert result.report.pr_at_best_f1.f1 >= 0.70
    assert result.report.map50 >= 0.65
