import pytest
from pydantic import ValidationError

from config import PRESETS, PipelineConfig, SceneConfig, dump_config, load_config
from errors import ConfigError


def test_defaults():
    config = PipelineConfig()
    assert config.optimizer.lr == 0.01
    assert config.optimizer.momentum == 0.937
    assert config.optimizer.weight_decay == 5e-4
    assert config.optimizer.batch_size == 4
    assert config.optimizer.epochs == 50
    assert config.nms_iou == 0.65
    assert config.conf_thresh == 0.001
    assert config.frames == 5
    assert config.tau == 8.0
    assert config.ltem_layers == 1
    assert config.patch_size == 2
    assert config.feature_size == (8, 8)


def test_yaml_round_trip(tmp_path, tiny_config):
    path = dump_config(tiny_config, tmp_path / "run.yml")
    assert load_config(path) == tiny_config


def test_unknown_key_is_rejected():
    with pytest.raises(ValidationError):
        PipelineConfig.from_yaml("frames: 5\nframez: 3\n")
    with pytest.raises(ValidationError):
        PipelineConfig.from_yaml("optimizer:\n  learning_rate: 0.1\n")


def test_malformed_yaml():
    with pytest.raises(ConfigError):
        PipelineConfig.from_yaml("frames: [1, 2\n")
    with pytest.raises(ConfigError):
        PipelineConfig.from_yaml("- 1\n- 2\n")
    assert PipelineConfig.from_yaml("") == PipelineConfig()


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.yml")


@pytest.mark.parametrize("name", PRESETS)
def test_presets(name):
    assert isinstance(PipelineConfig.preset(name), PipelineConfig)


def test_desk_preset_and_unknown_preset():
    assert PipelineConfig.preset("desk").optimizer.epochs == 10
    with pytest.raises(ConfigError):
        PipelineConfig.preset("huge")


def test_input_must_divide_into_patches():
    with pytest.raises(ValidationError):
        PipelineConfig(input_size=(24, 24))
    assert PipelineConfig(input_size=(32, 48)).feature_size == (4, 6)


def test_backbone_needs_three_stages():
    with pytest.raises(ValidationError):
        PipelineConfig(backbone={"widths": [8, 16]})


def test_scene_consistency():
    with pytest.raises(ValidationError):
        SceneConfig(targets_min=3, targets_max=1)
    with pytest.raises(ValidationError):
        SceneConfig(height=20)
