import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from engine.tensor import Tensor, amax, std
from errors import ShapeError
from model.tam import CSAM, GLTA, TemporalAlignment


def test_glta_shapes(rng):
    glta = GLTA(64, 2, rng)
    global_features = Tensor(rng.standard_normal((1, 5, 64, 8, 8)))
    local_features = Tensor(rng.standard_normal((1, 64, 8, 8)))
    attention = glta.attend(global_features, glta.embed_local(local_features))
    assert attention.weights.shape == (1, 16, 80)
    assert glta(global_features, local_features).shape == (1, 64, 8, 8)


def test_attention_rows_sum_to_one(float64, rng):
    glta = GLTA(4, 2, rng)
    g = Tensor(rng.standard_normal((2, 3, 4, 4, 4)))
    local = glta.embed_local(Tensor(rng.standard_normal((2, 4, 4, 4))))
    weights = glta.attend(g, local).weights.data
    assert_allclose(weights.sum(axis=-1), 1.0, atol=1e-6)


def test_single_key_returns_values(float64, rng):
    glta = GLTA(3, 2, rng)
    g = Tensor(rng.standard_normal((1, 1, 3, 2, 2)))
    local = glta.embed_local(Tensor(rng.standard_normal((1, 3, 2, 2))))
    attention = glta.attend(g, local)
    assert_array_equal(attention.weights.data, 1.0)
    assert_array_equal(attention.values.data, attention.v.data)


def test_glta_rejects_mismatched_inputs(rng):
    glta = GLTA(4, 2, rng)
    with pytest.raises(ShapeError):
        glta(Tensor(np.zeros((1, 2, 4, 4, 4))), Tensor(np.zeros((1, 4, 2, 2))))
    with pytest.raises(ShapeError):
        glta(Tensor(np.zeros((1, 2, 4, 3, 3))), Tensor(np.zeros((1, 4, 3, 3))))


def test_csam_constant_channels(float64, rng):
    csam = CSAM(2, rng)
    x = np.stack([np.full((3, 3), 1.5), np.full((3, 3), -2.0)])[None]
    parts = csam.forward_with_parts(Tensor(x))
    flat = Tensor(x).reshape(1, 2, 9)
    assert_array_equal(std(flat, axis=-1).data, [[0.0, 0.0]])
    assert_array_equal(amax(flat, axis=-1).data, [[1.5, -2.0]])
    assert parts.output.shape == (1, 2, 3, 3)


def test_csam_spatial_gate_is_bounded(float64, rng):
    csam = CSAM(3, rng)
    parts = csam.forward_with_parts(Tensor(rng.standard_normal((2, 3, 5, 5))))
    assert np.all(np.abs(parts.spatial_attended.data) <= np.abs(parts.spatial.data))
    assert np.all((parts.channel_gate.data > 0) & (parts.channel_gate.data < 1))


def test_csam_zero_channel_branch(float64, rng):
    csam = CSAM(3, rng)
    csam.fc.weight.data[...] = 0.0
    csam.fc.bias.data[...] = 0.0
    x = rng.standard_normal((1, 3, 4, 4))
    parts = csam.forward_with_parts(Tensor(x))
    assert_array_equal(parts.channel_gate.data, 0.5)
    assert_allclose(parts.output.data, 0.5 * parts.spatial_attended.data + x, atol=1e-9)


def test_csam_zero_parameters_is_identity(float64, rng):
    csam = CSAM(3, rng)
    for p in csam.parameters():
        p.data[...] = 0.0
    x = rng.standard_normal((1, 3, 4, 4))
    assert_array_equal(csam(Tensor(x)).data, x)


def test_tam_preserves_shape_and_is_deterministic(rng):
    tam = TemporalAlignment(4, 2, rng)
    g = Tensor(rng.standard_normal((1, 2, 4, 4, 4)))
    local = Tensor(rng.standard_normal((1, 4, 4, 4)))
    first = tam(g, local).data
    assert first.shape == (1, 4, 4, 4)
    assert_array_equal(first, tam(g, local).data)


def test_switched_off_alignment(float64, rng):
    tam = TemporalAlignment(4, 2, rng, use_glta=False, use_csam=False)
    g = Tensor(rng.standard_normal((1, 3, 4, 4, 4)))
    local = Tensor(rng.standard_normal((1, 4, 4, 4)))
    expected = tam.glta.norm(g[:, 2] + local).data
    assert_array_equal(tam(g, local).data, expected)
