import numpy as np
import pytest
from numpy.testing import assert_array_equal

from config import AblationConfig, PipelineConfig
from engine.tensor import Tensor
from errors import ShapeError
from model.hypertea import HyperTea


@pytest.fixture(scope="module")
def clip():
    return np.random.default_rng(0).random((1, 5, 1, 64, 64))


def test_full_model_emits_stride_eight_grid(clip):
    model = HyperTea().eval()
    pred = model(Tensor(clip))
    assert pred.grid == (8, 8)
    assert pred.objectness.shape == (1, 1, 8, 8)
    assert pred.regression.shape == (1, 4, 8, 8)


def test_same_seed_gives_identical_outputs(clip):
    a = HyperTea(frames=5, widths=(4, 4, 8), seed=3).eval()(Tensor(clip))
    b = HyperTea(frames=5, widths=(4, 4, 8), seed=3).eval()(Tensor(clip))
    assert_array_equal(a.objectness.data, b.objectness.data)
    assert_array_equal(a.regression.data, b.regression.data)


def test_rejects_wrong_frame_count_and_extent():
    model = HyperTea(frames=2, widths=(4, 4, 4))
    with pytest.raises(ShapeError):
        model(Tensor(np.zeros((1, 3, 1, 16, 16))))
    with pytest.raises(ShapeError):
        model(Tensor(np.zeros((1, 2, 1, 24, 16))))
    with pytest.raises(ShapeError):
        model(Tensor(np.zeros((1, 2, 3, 16, 16))))


def test_unbatched_clip_is_accepted():
    model = HyperTea(frames=2, widths=(4, 4, 4)).eval()
    assert model(Tensor(np.zeros((2, 1, 16, 16)))).grid == (2, 2)


@pytest.mark.parametrize("flags", [{"use_gtem": False}, {"use_ltem": False}, {"use_glta": False, "use_csam": False}])
def test_ablation_switches_keep_shapes(flags):
    model = HyperTea(frames=2, widths=(4, 4, 4), ablation=AblationConfig(**flags)).eval()
    features = model.features(Tensor(np.random.default_rng(1).random((1, 2, 1, 16, 16))))
    assert features.fused.shape == (1, 4, 2, 2)
    if not flags.get("use_gtem", True):
        assert features.global_temporal is features.spatial


def test_from_config_and_parameter_summary():
    config = PipelineConfig(frames=2, input_size=(16, 16), backbone={"widths": [4, 4, 8]})
    model = HyperTea.from_config(config)
    summary = model.parameter_summary()
    assert model.frames == 2
    assert set(summary) == {"backbone", "gtem", "ltem", "tam", "head", "total"}
    assert summary["total"] == sum(v for k, v in summary.items() if k != "total")
    assert all(v > 0 for v in summary.values())
