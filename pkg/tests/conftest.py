from pathlib import Path

import numpy as np
import pytest

from config import BackboneConfig, OptimizerConfig, PipelineConfig, SceneConfig
from dataset import export_dataset, generate_dataset
from engine.tensor import precision
from logs import configure_logging


@pytest.fixture(autouse=True, scope="session")
def quiet_logging():
    configure_logging("WARNING")


@pytest.fixture
def float64():
    with precision("float64"):
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config() -> PipelineConfig:
    return PipelineConfig(
        frames=2,
        input_size=(16, 16),
        backbone=BackboneConfig(widths=[4, 4, 8]),
        optimizer=OptimizerConfig(batch_size=2, epochs=1),
        log_every=1,
    )


@pytest.fixture
def tiny_scene() -> SceneConfig:
    return SceneConfig(
        height=16,
        width=16,
        frames=3,
        targets_min=1,
        targets_max=1,
        sigma_min=0.8,
        sigma_max=1.0,
        speed_min=0.5,
        speed_max=1.0,
        seed=7,
    )


@pytest.fixture
def dataset_dir(tmp_path: Path, tiny_scene: SceneConfig) -> Path:
    root = tmp_path / "data"
    export_dataset(generate_dataset(tiny_scene, 4, workers=2), root, val_count=1)
    return root
