import numpy as np
import pytest

from mfdeeponet import ad_core as ad
from mfdeeponet.losses import (ConditionSet, LossWeights, PhysicsBatch, ResidualSpec, combine_terms, l2_reg, loss_bc,
                               loss_condition, loss_data_driven, loss_hf_data, loss_ic, loss_lf, loss_noncomposite,
                               loss_physics, loss_physics_informed, loss_single, mse, periodic_pairs)
from mfdeeponet.multifidelity import CompositeModel, FidelityDataset, NonCompositeModel


def _zero(params, prefix=""):
    return {k: (np.zeros_like(v) if k.startswith(prefix) else v) for k, v in params.items()}


def _tiny():
    q = np.linspace(0, 1, 3)[:, None]
    m = CompositeModel.build(2, 2, 1, q, lf=(2, 4), nonlinear=(2, 3), linear=(1, 2))
    lf = FidelityDataset("low", np.array([0.0, 1.0]), np.array([[0.2, 0.5], [1.0, -1.0]]), q,
                         np.array([[1.0, 2.0, 3.0], [0.0, -1.0, 0.5]]))
    hf = FidelityDataset("high", np.array([0.0, 1.0]), np.array([[0.3, 0.1]]), q[:2], np.array([[1.0, 1.0]]),
                         inputs_lf=np.array([[0.3, 0.1]]))
    return m, lf, hf


def test_mse_examples():
    assert mse([1.0, 2.0], [1.0, 2.0]).value == 0.0
    assert mse([[1.0, 3.0]], [[1.0, 2.0]]).value == 0.5


def test_loss_lf_matches_double_sum():
    m, lf, _ = _tiny()
    p = m.init_params(0)
    pred = m.lf_predict(p, lf.inputs, lf.queries).value.value[..., 0]
    brute = sum((lf.outputs[j, k, 0] - pred[j, k]) ** 2 for j in range(2) for k in range(3)) / 6
    assert abs(loss_lf(m, p, lf).value - brute) < 1e-12


def test_loss_hf_zero_nets_unit_targets():
    m, _, hf = _tiny()
    assert loss_hf_data(m, _zero(m.init_params(0)), hf).value == 1.0


def test_l2_reg_examples():
    assert l2_reg({"s.W1": np.zeros((2, 2)), "s.b1": np.zeros(2)}, "s").value == 0.0
    assert l2_reg({"s.W1": np.array([[3.0]]), "s.b1": np.array([4.0])}, "s").value == 25.0
    rng = np.random.default_rng(0)
    p = {"nl/branch.W1": rng.normal(size=(3, 4)), "nl/branch.b1": rng.normal(size=3),
         "nl/trunk.W1": rng.normal(size=(3, 1))}
    explicit = np.sum(p["nl/branch.W1"] ** 2) + np.sum(p["nl/branch.b1"] ** 2)
    assert abs(l2_reg(p, "nl/branch").value - explicit) < 1e-12
    with pytest.raises(KeyError):
        l2_reg(p, "lf/branch")


def test_weighted_sum_hand_case():
    terms = {k: ad.constant(v) for k, v in zip(("hf", "lf", "reg_nl", "reg_lf"), (0.5, 0.25, 2.0, 3.0))}
    total, parts = combine_terms(terms, {"hf": 0.1, "lf": 1.0, "reg_nl": 0.1, "reg_lf": 0.001})
    assert abs(total.value - 0.503) < 1e-12
    assert abs(sum(parts.values()) - total.value) < 1e-12


def test_unit_weights_sum_components():
    terms = {k: ad.constant(float(i + 1)) for i, k in enumerate(("physics", "lf", "reg_nl", "reg_lf", "ic", "bc"))}
    total, _ = combine_terms(terms, dict.fromkeys(terms, 1.0))
    assert total.value == 21.0


def test_data_driven_zero_weights_and_breakdown():
    m, lf, hf = _tiny()
    p = m.init_params(1)
    total, parts = loss_data_driven(m, p, lf, hf, LossWeights(0, 0, 0, 0))
    assert total.value == 0.0
    w = LossWeights(0.1, 1.0, 0.1, 1e-3)
    total, parts = loss_data_driven(m, p, lf, hf, w)
    assert abs(sum(parts.values()) - total.value) < 1e-12
    assert abs(parts["hf"] - 0.1 * loss_hf_data(m, p, hf).value) < 1e-12


def test_data_losses_scale_quadratically():
    m, lf, _ = _tiny()
    p = m.init_params(2)
    p_scaled = dict(p)
    p_scaled["lf/trunk.W2"] = 3.0 * p["lf/trunk.W2"]
    p_scaled["lf/trunk.b2"] = 3.0 * p["lf/trunk.b2"]
    lf3 = FidelityDataset("low", lf.sensors, lf.inputs, lf.queries, 3.0 * lf.outputs)
    assert abs(loss_lf(m, p_scaled, lf3).value - 9.0 * loss_lf(m, p, lf).value) < 1e-10


def test_negative_weight_rejected():
    with pytest.raises(ValueError):
        LossWeights(l1=-1.0)


def _poly(kind):
    # predictors on (x, t) seeded jets
    def predict(xj):
        x = xj.linear(np.array([[1.0, 0.0]]))
        t = xj.linear(np.array([[0.0, 1.0]]))
        return {"const": x * 0.0 + 2.5, "x": x, "xt": x * t}[kind]
    return predict


def test_burgers_residual_polynomials():
    pts = np.array([[0.3, 0.2], [0.7, 0.9]])
    spec = ResidualSpec("burgers", nu=0.01)
    for kind, expected in (("const", [0.0, 0.0]), ("x", [0.3, 0.7]), ("xt", pts[:, 0] + pts[:, 0] * pts[:, 1] ** 2)):
        cj = ad.jet_to_coordjet(_poly(kind)(ad.seed_coords(pts[None], spec.first, spec.second)), spec.first,
                                spec.second)
        assert np.allclose(spec(cj, pts).value[0], expected, atol=1e-14)


def test_burgers_residual_matches_fd_for_network():
    m = CompositeModel.build(3, 2, 2, np.array([[0.5, 0.5]]), lf=(2, 4), nonlinear=(2, 4), linear=(1, 3))
    p = m.init_params(3)
    u_lf, u_hf = np.array([[0.1, 0.4, -0.2]]), np.array([[0.3, 0.0]])
    pts = np.random.default_rng(0).uniform(size=(5, 2))
    spec = ResidualSpec("burgers", nu=0.05)
    predict = lambda q: m.hf_predict(p, u_lf, u_hf, q)  # noqa: E731
    cj = ad.jet_to_coordjet(predict(ad.seed_coords(pts[None], spec.first, spec.second)), spec.first, spec.second)
    res = spec(cj, pts).value[0]
    f = lambda q: predict(q).value.value[0, :, 0]  # noqa: E731
    h, hh = 1e-5, 1e-4
    ex, et = np.array([h, 0]), np.array([0, h])
    s = f(pts)
    s_x = (f(pts + ex) - f(pts - ex)) / (2 * h)
    s_t = (f(pts + et) - f(pts - et)) / (2 * h)
    s_xx = (f(pts + [hh, 0]) - 2 * s + f(pts - [hh, 0])) / hh ** 2
    fd = s_t + s * s_x - 0.05 * s_xx
    assert np.max(np.abs(res - fd) / np.maximum(np.abs(fd), 1e-3)) < 1e-3


def test_ode_residual_examples():
    spec = ResidualSpec("ode_sin")
    zero = lambda xj: xj.linear(np.array([[0.0]]))  # noqa: E731
    pts = np.array([[0.0], [0.125]])
    cj = ad.jet_to_coordjet(zero(ad.seed_coords(pts[None], spec.first)), spec.first, ())
    r = spec(cj, pts, np.array([0.0])).value[0]
    assert abs(r[0]) < 1e-15 and abs(r[1] - 4 * np.pi) < 1e-12


def test_ode_exact_solution_has_zero_physics_loss():
    # cos(4 pi x + a) via cos(z) = sin(z + pi/2)
    a = 0.7

    def exact(xj):
        return xj.linear(np.array([[4 * np.pi]]), np.array([a + np.pi / 2])).sin()

    pts = np.linspace(0, 1, 11)[:, None]
    loss = loss_physics(exact, pts, ResidualSpec("ode_sin"), np.array([a]))
    assert loss.value < 1e-24


def test_l1_norm_single_point():
    pts = np.array([[0.125]])
    zero = lambda xj: xj.linear(np.array([[0.0]]))  # noqa: E731
    spec = ResidualSpec("ode_sin")
    # residual is 4 pi; flip the sign through a = pi
    assert abs(loss_physics(zero, pts, spec, np.array([np.pi]), norm="l1").value - 4 * np.pi) < 1e-12
    with pytest.raises(ValueError):
        loss_physics(zero, pts, spec, np.array([0.0]), norm="huber")


def test_periodic_bc_zero_for_periodic_feature():
    def predict(xj):
        return xj.linear(np.array([[2 * np.pi, 0.0]])).sin() * 1.5

    cond = periodic_pairs(np.linspace(0, 1, 7))
    assert loss_bc(predict, cond).value < 1e-28


def test_periodic_bc_penalises_slope_mismatch():
    cond = periodic_pairs(np.array([0.0, 0.5]))
    # s = x^2: values 0 vs 1, slopes 0 vs 2
    predict = lambda xj: xj.linear(np.array([[1.0, 0.0]])) * xj.linear(np.array([[1.0, 0.0]]))  # noqa: E731
    assert abs(loss_bc(predict, cond).value - (1.0 + 4.0)) < 1e-12


def test_ic_zero_predictor_unit_target():
    pts = np.column_stack([np.linspace(0, 1, 101), np.zeros(101)])
    cond = ConditionSet("value", pts, np.ones((1, 101)))
    zero = lambda xj: xj.linear(np.array([[0.0, 0.0]]))  # noqa: E731
    assert loss_ic(zero, cond).value == 1.0


def test_condition_mixed_hand_case():
    pts = np.array([[0.2, 0.0], [0.6, 0.0]])
    targets = np.array([[1.0, -1.0]])
    predict = lambda xj: xj.linear(np.array([[2.0, 0.0]]))  # noqa: E731
    brute = ((0.4 - 1.0) ** 2 + (1.2 + 1.0) ** 2) / 2
    assert abs(loss_condition(predict, ConditionSet("value", pts, targets)).value - brute) < 1e-12


def test_physics_informed_zero_weights():
    m, lf, _ = _tiny()
    batch = PhysicsBatch(np.array([[0.3, 0.1]]), np.array([[0.3, 0.1]]), np.array([[0.2], [0.7]]),
                         {"bc": ConditionSet("value", np.array([[0.0]]), np.array([[1.0]]))}, np.array([0.5]))
    total, _ = loss_physics_informed(m, m.init_params(0), lf, batch, ResidualSpec("ode_sin"),
                                     LossWeights(0, 0, 0, 0, 0, 0))
    assert total.value == 0.0
    total, parts = loss_physics_informed(m, m.init_params(0), lf, batch, ResidualSpec("ode_sin"),
                                         LossWeights(1, 1, 1, 1, 0, 1))
    assert set(parts) >= {"physics", "lf", "bc", "reg_nl", "reg_lf"}
    assert abs(sum(parts.values()) - total.value) < 1e-12


def test_noncomposite_loss_cases():
    q = np.linspace(0, 1, 3)[:, None]
    m = NonCompositeModel.build(2, 1, q, nonlinear=(2, 3), linear=(1, 2))
    p = m.init_params(0)
    hf = FidelityDataset("high", np.array([0.0, 1.0]), np.array([[0.3, 0.1]]), q, np.array([[1.0, 0.5, 0.0]]))
    oracle = lambda pts: np.ones((1, len(pts), 1))  # noqa: E731
    total, _ = loss_noncomposite(m, p, oracle, hf, LossWeights(l1=0.0, l3=1.0))
    assert abs(total.value - l2_reg(p, "nl/branch").value) < 1e-12
    pred = m.hf_predict(p, oracle, hf.inputs, hf.queries).value.value[0, :, 0]
    total, _ = loss_noncomposite(m, p, oracle, hf, LossWeights(l1=1.0, l3=0.0))
    assert abs(total.value - np.mean((pred - hf.outputs[0, :, 0]) ** 2)) < 1e-12


def test_single_fidelity_loss_matches_brute_force():
    from mfdeeponet.deeponet import ModifiedDeepONet
    net = ModifiedDeepONet(2, 1, 4, 2)
    p = net.init_params(0, "sf/")
    _, _, hf = _tiny()
    pred = net.forward(p, hf.inputs, hf.queries, prefix="sf/").value.value[..., 0]
    assert abs(loss_single(net, p, hf).value - np.mean((pred - hf.outputs[..., 0]) ** 2)) < 1e-12
