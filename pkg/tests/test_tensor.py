import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from engine.tensor import (
    Tensor,
    amax,
    backward,
    chunk,
    concat,
    maximum,
    no_grad,
    precision,
    silu,
    stack,
    std,
)
from errors import NonFiniteError, ShapeError


def test_sum_gradient_is_all_ones(float64):
    p = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
    (grad,) = backward(p.sum(), [p])
    assert_array_equal(grad, np.ones((2, 3)))


def test_quadratic_gradient(float64):
    p = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    (grad,) = backward((p * p).sum(), [p])
    assert_array_equal(grad, [2.0, 4.0, 6.0])


def test_fan_out_accumulates(float64):
    x = Tensor([3.0], requires_grad=True)
    y = x * 2.0
    loss = (y * y + y).sum()  # 4x^2 + 2x
    (grad,) = backward(loss, [x])
    assert_allclose(grad, [8 * 3.0 + 2.0])


def test_broadcast_gradient_is_reduced(float64):
    a = Tensor(np.ones((2, 3)), requires_grad=True)
    b = Tensor(np.ones(3), requires_grad=True)
    ga, gb = backward((a * b).sum(), [a, b])
    assert ga.shape == (2, 3)
    assert_array_equal(gb, [2.0, 2.0, 2.0])


def test_unused_parameter_gets_zero_gradient(float64):
    a = Tensor([1.0], requires_grad=True)
    unused = Tensor([5.0, 6.0], requires_grad=True)
    _, g = backward((a * 3.0).sum(), [a, unused])
    assert_array_equal(g, [0.0, 0.0])


def test_backward_needs_scalar(float64):
    a = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(ShapeError):
        backward(a * 2.0)


def test_no_grad_records_nothing(float64):
    a = Tensor([1.0], requires_grad=True)
    with no_grad():
        out = a * 2.0
    assert not out.requires_grad
    assert out._parents == ()


def test_non_finite_forward_names_op(float64):
    with pytest.raises(NonFiniteError) as info:
        Tensor([0.0], requires_grad=True).log()
    assert info.value.op == "log"


def test_precision_context_sets_leaf_dtype():
    with precision("float32"):
        assert Tensor([1.0]).dtype == np.float32
    with precision("float64"):
        assert Tensor([1.0]).dtype == np.float64


def test_chunk_concat_round_trip(float64, rng):
    x = Tensor(rng.standard_normal((1, 8, 3, 3)))
    parts = chunk(x, 4, axis=1)
    assert [p.shape for p in parts] == [(1, 2, 3, 3)] * 4
    assert_array_equal(concat(parts, axis=1).data, x.data)


def test_chunk_requires_divisibility(float64):
    with pytest.raises(ShapeError):
        chunk(Tensor(np.zeros((1, 6, 2, 2))), 4, axis=1)


def test_concat_rejects_mismatched_shapes(float64):
    with pytest.raises(ShapeError):
        concat([Tensor(np.zeros((1, 2))), Tensor(np.zeros((2, 2)))], axis=1)


def test_stack_adds_axis(float64):
    out = stack([Tensor([1.0, 2.0]), Tensor([3.0, 4.0])], axis=0)
    assert out.shape == (2, 2)


def test_getitem_gradient_scatters(float64):
    x = Tensor(np.arange(5.0), requires_grad=True)
    (grad,) = backward(x[np.array([0, 0, 3])].sum(), [x])
    assert_array_equal(grad, [2.0, 0.0, 0.0, 1.0, 0.0])


def test_amax_routes_gradient_to_first_maximum(float64):
    x = Tensor([[1.0, 4.0, 4.0, 2.0]], requires_grad=True)
    out = amax(x, axis=-1)
    (grad,) = backward(out.sum(), [x])
    assert_array_equal(out.data, [4.0])
    assert_array_equal(grad, [[0.0, 1.0, 0.0, 0.0]])


def test_std_of_constant_is_zero_with_finite_gradient(float64):
    x = Tensor(np.full((2, 5), 3.0), requires_grad=True)
    out = std(x, axis=-1)
    (grad,) = backward(out.sum(), [x])
    assert_array_equal(out.data, [0.0, 0.0])
    assert_array_equal(grad, np.zeros((2, 5)))


def test_std_matches_numpy(float64, rng):
    data = rng.standard_normal((3, 7))
    assert_allclose(std(Tensor(data), axis=1).data, data.std(axis=1), rtol=1e-12)


def test_maximum_ties_go_to_first_argument(float64):
    a = Tensor([1.0, 2.0], requires_grad=True)
    b = Tensor([1.0, 3.0], requires_grad=True)
    ga, gb = backward(maximum(a, b).sum(), [a, b])
    assert_array_equal(ga, [1.0, 0.0])
    assert_array_equal(gb, [0.0, 1.0])


def test_silu_at_zero(float64):
    x = Tensor([0.0], requires_grad=True)
    (grad,) = backward(silu(x).sum(), [x])
    assert_allclose(grad, [0.5])
