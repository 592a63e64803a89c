import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from engine.layers import Linear
from engine.tensor import Tensor
from errors import NonFiniteError, ShapeError
from model.hypergraph import (
    HypergraphConv,
    build_hypergraph,
    dense_hcu_reference,
    dense_propagation_matrix,
    hcu_forward,
    hcu_tokens,
)
from oracles import dense_oracle, three_vertex_hypergraph


def identity_theta(channels: int) -> Linear:
    theta = Linear(channels, channels)
    theta.weight.data = np.eye(channels)
    theta.bias.data = np.zeros(channels)
    return theta


def zero_theta(channels: int) -> Linear:
    theta = Linear(channels, channels)
    theta.weight.data = np.zeros((channels, channels))
    theta.bias.data = np.zeros(channels)
    return theta


def test_three_vertex_fixture():
    hg = three_vertex_hypergraph()
    assert_array_equal(hg.dense_incidence(), [[1, 1, 0], [1, 1, 0], [0, 0, 1]])
    hg = build_hypergraph(np.array([[0.0], [1.0], [10.0]]), tau=2.0)
    assert_array_equal(hg.dense_incidence(), [[1, 1, 0], [1, 1, 0], [0, 0, 1]])
    assert_array_equal(hg.vertex_degree, [2, 2, 1])
    assert_array_equal(hg.edge_degree, [2, 2, 1])


def test_zero_tau_gives_identity_incidence(rng):
    hg = build_hypergraph(rng.standard_normal((6, 3)), tau=0.0)
    assert_array_equal(hg.dense_incidence(), np.eye(6))
    assert_array_equal(hg.vertex_degree, np.ones(6))


def test_infinite_tau_gives_complete_hypergraph(rng):
    hg = build_hypergraph(rng.standard_normal((5, 2)), tau=np.inf)
    assert_array_equal(hg.dense_incidence(), np.ones((5, 5)))
    assert_array_equal(hg.edge_degree, np.full(5, 5))


def test_permutation_equivariance(rng):
    x = rng.standard_normal((12, 4))
    base = build_hypergraph(x, tau=2.0).dense_incidence()
    for _ in range(20):
        perm = rng.permutation(12)
        permuted = build_hypergraph(x[perm], tau=2.0).dense_incidence()
        assert_array_equal(permuted, base[np.ix_(perm, perm)])


def test_hcu_output_follows_vertex_permutation(float64, rng):
    # sparse sums run in a different order after permuting, so equality holds to rounding
    theta = Linear(6, 6, rng)
    x = rng.standard_normal((40, 6))
    base = hcu_forward(Tensor(x), build_hypergraph(x, tau=3.0), theta).data
    for _ in range(20):
        perm = rng.permutation(40)
        out = hcu_forward(Tensor(x[perm]), build_hypergraph(x[perm], tau=3.0), theta).data
        assert_allclose(out, base[perm], rtol=0, atol=1e-12)


def test_rejects_bad_inputs():
    with pytest.raises(ShapeError):
        build_hypergraph(np.zeros(4))
    with pytest.raises(ValueError):
        build_hypergraph(np.zeros((2, 2)), tau=-1.0)
    with pytest.raises(NonFiniteError):
        build_hypergraph(np.array([[np.nan, 0.0]]))


def test_propagation_rows_sum_to_one(rng):
    hg = build_hypergraph(rng.standard_normal((30, 3)), tau=1.5)
    p = dense_propagation_matrix(hg.dense_incidence())
    assert_allclose(p.sum(axis=1), 1.0, atol=1e-10)


def test_zero_theta_is_residual_identity(float64, rng):
    x = Tensor(rng.standard_normal((7, 3)))
    hg = build_hypergraph(x.data, tau=1.0)
    assert_array_equal(hcu_forward(x, hg, zero_theta(3)).data, x.data)


def test_single_vertex(float64, rng):
    theta = Linear(2, 2, rng)
    x = rng.standard_normal((1, 2))
    hg = build_hypergraph(x, tau=1.0)
    expected = x + x @ theta.weight.data + theta.bias.data
    assert_allclose(hcu_forward(Tensor(x), hg, theta).data, expected, atol=1e-12)


def test_three_vertex_identity_theta(float64):
    x = np.array([[0.0], [1.0], [10.0]])
    hg = build_hypergraph(x, tau=2.0)
    assert_allclose(hg.propagate(x), [[0.5], [0.5], [10.0]])
    assert_allclose(hcu_forward(Tensor(x), hg, identity_theta(1)).data, [[0.5], [1.5], [20.0]])


def test_constant_map_doubles(float64):
    x = Tensor(np.full((1, 3, 2, 2), 1.5))
    assert_allclose(hcu_tokens(x, 8.0, identity_theta(3)).data, 3.0, atol=1e-12)


def test_tokens_shape_round_trip(float64, rng):
    layer = HypergraphConv(3, rng)
    assert layer.tokens(Tensor(rng.standard_normal((2, 3, 2, 2)))).shape == (2, 3, 2, 2)


def test_tokens_match_dense_oracle(float64, rng):
    layer = HypergraphConv(3, rng, tau=8.0)
    grid = rng.standard_normal((1, 3, 4, 4))
    out = layer.tokens(Tensor(grid)).data
    vertices = grid.reshape(3, 16).T
    hg = build_hypergraph(vertices, 8.0)
    expected = dense_hcu_reference(vertices, hg.dense_incidence(), layer.theta.weight.data, layer.theta.bias.data)
    assert_allclose(out.reshape(3, 16).T, expected, atol=1e-10)


def test_sparse_matches_dense_on_random_instances(float64):
    report = dense_oracle(instances=100, seed=5)
    assert report.passed, report.summary()


def test_incidence_dump(tmp_path, rng):
    path = build_hypergraph(rng.standard_normal((3, 2)), tau=0.0).dump(tmp_path / "hg.txt")
    text = path.read_text()
    assert text.startswith("# hypergraph N=3 M=3")
    assert "# Dv" in text
