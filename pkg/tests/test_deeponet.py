import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfdeeponet import ad_core as ad
from mfdeeponet.deeponet import (MLPStack, ModifiedDeepONet, StandardDeepONet, init_params, modified_forward,
                                 standard_forward)


def _zero(params):
    return {k: np.zeros_like(v) for k, v in params.items()}


def test_init_is_deterministic():
    net = ModifiedDeepONet(4, 2, 6, 3)
    a, b = init_params(net, 7), init_params(net, 7)
    assert a.keys() == b.keys()
    assert all(np.array_equal(a[k], b[k]) for k in a)


def test_glorot_bound_and_zero_biases():
    net = StandardDeepONet.build(5, 3, 8, 2)
    params = init_params(net, 0)
    for k, v in params.items():
        if ".W" in k:
            n_out, n_in = v.shape
            assert np.abs(v).max() <= np.sqrt(6.0 / (n_in + n_out))
        else:
            assert not v.any()


def test_zero_width_layer_rejected():
    with pytest.raises(ValueError):
        MLPStack((3, 0, 2))


def test_param_count_matches_closed_form():
    net = ModifiedDeepONet(4, 2, 6, 3)
    assert net.param_count() == sum(v.size for v in init_params(net, 0).values())
    std = StandardDeepONet.build(5, 3, 8, 2)
    assert std.param_count() == (5 * 8 + 8 + 8 * 8 + 8) + (3 * 8 + 8 + 8 * 8 + 8)


def test_standard_zero_params_gives_zero():
    net = StandardDeepONet.build(2, 2, 3, 2)
    assert standard_forward(net, _zero(init_params(net, 0)), [1.0, 2.0], [3.0, 4.0]) == 0.0


def test_standard_identity_nets_give_dot_product():
    net = StandardDeepONet.build(2, 2, 2, 1)
    params = {"branch.W1": np.eye(2), "branch.b1": np.zeros(2), "trunk.W1": np.eye(2), "trunk.b1": np.zeros(2)}
    assert standard_forward(net, params, [1.0, 2.0], [3.0, 4.0]) == 11.0


def test_standard_two_layer_matches_matrix_arithmetic():
    net = StandardDeepONet.build(3, 2, 4, 2)
    rng = np.random.default_rng(3)
    params = {k: rng.normal(size=v.shape) for k, v in init_params(net, 0).items()}
    b, x = rng.normal(size=3), rng.normal(size=2)
    hb = params["branch.W2"] @ (params["branch.W1"] @ b + params["branch.b1"]) + params["branch.b2"]
    ht = params["trunk.W2"] @ (params["trunk.W1"] @ x + params["trunk.b1"]) + params["trunk.b2"]
    assert abs(standard_forward(net, params, b, x) - hb @ ht) < 1e-12


def test_dimension_mismatch_raises():
    net = StandardDeepONet.build(2, 1, 3, 1)
    with pytest.raises(ad.ShapeError):
        standard_forward(net, init_params(net, 0), [1.0, 2.0, 3.0], [0.5])


@settings(max_examples=30, deadline=None)
@given(alpha=st.floats(-2, 2), seed=st.integers(0, 1000))
def test_linear_standard_net_superposition(alpha, seed):
    net = StandardDeepONet.build(3, 1, 4, 2)
    rng = np.random.default_rng(seed)
    params = init_params(net, seed)
    b1, b2, x = rng.normal(size=3), rng.normal(size=3), rng.normal(size=1)
    lhs = standard_forward(net, params, alpha * b1 + (1 - alpha) * b2, x)
    rhs = alpha * standard_forward(net, params, b1, x) + (1 - alpha) * standard_forward(net, params, b2, x)
    assert abs(lhs - rhs) < 1e-10 * max(1.0, abs(lhs))


def test_modified_zero_params_gives_zero():
    net = ModifiedDeepONet(3, 1, 4, 3)
    assert modified_forward(net, _zero(init_params(net, 0)), [1.0, 2.0, 3.0], [0.5]) == 0.0


def test_modified_zero_encoders_reduce_to_last_biases():
    net = ModifiedDeepONet(3, 1, 4, 3)
    rng = np.random.default_rng(1)
    params = {k: rng.normal(size=v.shape) for k, v in init_params(net, 0).items()}
    for k in ("enc_u.W", "enc_u.b", "enc_x.W", "enc_x.b"):
        params[k] = np.zeros_like(params[k])
    expected = params["branch.b3"] @ params["trunk.b3"]
    assert abs(modified_forward(net, params, rng.normal(size=3), [0.3]) - expected) < 1e-12


def _modified_by_hand(p, u, x, depth, final):
    U = np.tanh(p["enc_u.W"] @ u + p["enc_u.b"])
    V = np.tanh(p["enc_x.W"] @ x + p["enc_x.b"])
    hu, hx = u, x
    for l in range(1, depth):
        zu = np.tanh(p[f"branch.W{l}"] @ hu + p[f"branch.b{l}"])
        zx = np.tanh(p[f"trunk.W{l}"] @ hx + p[f"trunk.b{l}"])
        hu = (1 - zu) * U + zu * V
        hx = (1 - zx) * U + zx * V
    bu = p[f"branch.W{depth}"] @ hu + p[f"branch.b{depth}"]
    bx = p[f"trunk.W{depth}"] @ hx + p[f"trunk.b{depth}"]
    if final:
        bu, bx = np.tanh(bu), np.tanh(bx)
    return bu @ bx


@pytest.mark.parametrize("final", [False, True])
def test_modified_matches_hand_evaluation(final):
    net = ModifiedDeepONet(2, 1, 3, 2, final_activation=final)
    rng = np.random.default_rng(11)
    params = {k: rng.normal(size=v.shape) for k, v in init_params(net, 0).items()}
    u, x = rng.normal(size=2), np.array([0.4])
    assert abs(modified_forward(net, params, u, x) - _modified_by_hand(params, u, x, 2, final)) < 1e-12


def test_modified_jets_are_finite_and_match_fd():
    net = ModifiedDeepONet(3, 2, 5, 3)
    params = init_params(net, 4)
    u = np.array([[0.2, -0.5, 1.0]])
    pts = np.array([[0.3, 0.7]])
    jet = net.forward(params, u, ad.seed_coords(pts[None], (0, 1), (0,)))
    cj = ad.jet_to_coordjet(jet, (0, 1), (0,))
    f = lambda p: modified_forward(net, params, u[0], p)  # noqa: E731
    h = 1e-5
    for ax in (0, 1):
        e = np.eye(2)[ax] * h
        fd = (f(pts[0] + e) - f(pts[0] - e)) / (2 * h)
        assert abs(cj.d[ax].value.item() - fd) < 1e-4 * max(1.0, abs(fd))
    e = np.array([1e-4, 0.0])
    fdd = (f(pts[0] + e) - 2 * f(pts[0]) + f(pts[0] - e)) / 1e-8
    assert abs(cj.dd[0].value.item() - fdd) < 1e-4 * max(1.0, abs(fdd))


def test_vector_output_components():
    net = ModifiedDeepONet(2, 1, 3, 2, n_out=2)
    params = init_params(net, 0)
    out = net.forward(params, np.ones((4, 2)), np.linspace(0, 1, 5)[:, None])
    assert out.shape == (4, 5, 2)
