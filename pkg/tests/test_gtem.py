import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from engine.tensor import Tensor
from errors import ShapeError
from model.gtem import Aggregate, DirectionPreferredBlock, GlobalTemporalEnhancement


def test_aggregate_shapes(rng):
    agg = Aggregate(8, 5, rng).eval()
    assert agg.reduce.conv.weight.shape == (8, 40, 3, 3)
    assert agg(Tensor(rng.standard_normal((1, 5, 8, 4, 4)))).shape == (1, 8, 4, 4)


def test_aggregate_of_single_frame_is_two_conv_blocks(float64, rng):
    agg = Aggregate(3, 1, rng).eval()
    x = rng.standard_normal((1, 1, 3, 4, 4))
    expected = agg.refine(agg.reduce(Tensor(x[:, 0]))).data
    assert_array_equal(agg(Tensor(x)).data, expected)


def test_aggregate_rejects_wrong_frame_count(rng):
    with pytest.raises(ShapeError):
        Aggregate(2, 3, rng)(Tensor(np.zeros((1, 2, 2, 4, 4))))


def test_dpcb_with_zero_fusion_is_identity(float64, rng):
    block = DirectionPreferredBlock(3, rng).eval()
    block.fuse.weight.data[...] = 0.0
    block.fuse.bias.data[...] = 0.0
    x = rng.standard_normal((1, 3, 6, 6))
    assert_array_equal(block(Tensor(x)).data, x)


def test_dpcb_branch_shapes(rng):
    block = DirectionPreferredBlock(4, rng).eval()
    branches = block.branches(Tensor(rng.standard_normal((1, 4, 8, 8))))
    assert [b.shape for b in branches] == [(1, 4, 8, 8)] * 3
    assert block.fuse.weight.shape == (4, 12, 3, 3)


def test_horizontal_branch_prefers_horizontal_bar(float64, rng):
    block = DirectionPreferredBlock(1, rng).eval()
    # mirrored kernels: the vertical branch sees the transpose of what the horizontal one sees
    block.vertical.conv.weight.data = block.horizontal.conv.weight.data.transpose(0, 1, 3, 2).copy()
    block.horizontal.conv.weight.data = np.abs(block.horizontal.conv.weight.data)
    block.vertical.conv.weight.data = np.abs(block.vertical.conv.weight.data)
    bar = np.zeros((1, 1, 9, 9))
    bar[0, 0, 4, 1:8] = 1.0
    horizontal = block.horizontal(Tensor(bar)).data
    vertical = block.vertical(Tensor(bar)).data
    assert np.linalg.norm(horizontal) > np.linalg.norm(vertical)


def test_forward_preserves_shape(rng):
    net = GlobalTemporalEnhancement(4, 3, rng).eval()
    assert net(Tensor(rng.standard_normal((2, 3, 4, 4, 4)))).shape == (2, 3, 4, 4, 4)


def test_identical_frames_give_identical_outputs(float64, rng):
    net = GlobalTemporalEnhancement(4, 3, rng).eval()
    frame = rng.standard_normal((1, 1, 4, 4, 4))
    out = net(Tensor(np.repeat(frame, 3, axis=1))).data
    assert_allclose(out[:, 0], out[:, 1], rtol=1e-12, atol=1e-12)
    assert_allclose(out[:, 1], out[:, 2], rtol=1e-12, atol=1e-12)


def test_switches_bypass_dpcb_and_hcu(float64, rng):
    net = GlobalTemporalEnhancement(4, 2, rng, use_dpcb=False, use_hcu=False).eval()
    x = Tensor(rng.standard_normal((1, 2, 4, 4, 4)))
    assert_array_equal(net.global_context(x).data, net.aggregate(x).data)
