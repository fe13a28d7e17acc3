import numpy as np
import pytest

from slimnet import (ConfigError, DataError, NumericalError, RegularizerSpec,
                     ShapeError, accuracy, finite_diff_check, gradcheck_battery,
                     gradients, init_network, loss, loss_grad, mlp_specs)
from slimnet.gradients import _battery_instance, normalize_loss_kind
from slimnet.regularizers import build_masks, reg_value


def test_normalize_loss_kind():
    assert normalize_loss_kind("mse") == "mean_squared_error"
    assert normalize_loss_kind("ce") == "softmax_cross_entropy"
    assert normalize_loss_kind("cross_entropy") == "softmax_cross_entropy"
    assert normalize_loss_kind("mean_squared_error") == "mean_squared_error"
    with pytest.raises(ConfigError):
        normalize_loss_kind("hinge")


def test_mse_hand_value():
    pred = np.array([[1.0, 2.0], [3.0, 4.0]])
    target = np.array([[0.0, 2.0], [3.0, 0.0]])
    assert loss(pred, target, "mse") == (1.0 + 0.0 + 0.0 + 16.0) / 4.0


def test_mse_accepts_flat_targets():
    pred = np.array([[1.0], [2.0]])
    assert loss(pred, np.array([1.0, 0.0]), "mse") == 2.0


def test_mse_shape_mismatch():
    with pytest.raises(ShapeError):
        loss(np.zeros((2, 2)), np.zeros((3, 2)), "mse")


def test_cross_entropy_uniform_logits():
    # equal logits: -log(1/K)
    pred = np.zeros((4, 3))
    assert abs(loss(pred, np.array([0, 1, 2, 0]), "ce") - np.log(3.0)) < 1e-15


def test_cross_entropy_is_shift_stable():
    pred = np.array([[1e4, 1e4 - 5.0]])
    val = loss(pred, np.array([0]), "ce")
    assert np.isfinite(val)
    assert abs(val - np.log(1.0 + np.exp(-5.0))) < 1e-12


def test_cross_entropy_label_validation():
    pred = np.zeros((2, 3))
    with pytest.raises(DataError):
        loss(pred, np.array([0, 3]), "ce")
    with pytest.raises(DataError):
        loss(pred, np.array([0.5, 1.0]), "ce")
    with pytest.raises(ShapeError):
        loss(pred, np.array([[0], [1]]), "ce")
    # integral floats are accepted
    assert np.isfinite(loss(pred, np.array([0.0, 2.0]), "ce"))


def test_mse_grad_closed_form():
    pred = np.array([[1.0, -1.0], [0.5, 2.0]])
    target = np.zeros((2, 2))
    g = loss_grad(pred, target, "mse")
    assert np.array_equal(g, 2.0 * pred / 4.0)


def test_cross_entropy_grad_rows_sum_to_zero():
    pred = np.random.default_rng(0).normal(size=(5, 4))
    labels = np.array([0, 1, 2, 3, 1])
    g = loss_grad(pred, labels, "ce")
    assert np.abs(g.sum(axis=1)).max() < 1e-15
    assert (g[np.arange(5), labels] < 0).all()


def test_accuracy():
    pred = np.array([[0.9, 0.1], [0.2, 0.8], [0.6, 0.4]])
    assert accuracy(pred, np.array([0, 1, 1])) == pytest.approx(2.0 / 3.0)


def test_single_layer_least_squares_gradient():
    # pred = xW + b, MSE: dW = 2 x^T (pred - t) / size, db = column sums
    params = init_network(mlp_specs([3, 2], batch_norm=False), 4)
    rng = np.random.default_rng(1)
    x = rng.normal(size=(6, 3))
    t = rng.normal(size=(6, 2))
    obj, grads = gradients(params, (x, t), "mse")
    pred = x @ params.layers[0].w + params.layers[0].b
    resid = 2.0 * (pred - t) / pred.size
    assert np.allclose(grads["w0"], x.T @ resid, rtol=0, atol=1e-15)
    assert np.allclose(grads["b0"], resid.sum(axis=0), rtol=0, atol=1e-15)
    assert obj == loss(pred, t, "mse")


def test_dead_relu_units_get_zero_gradients():
    params = init_network(mlp_specs([1, 2, 1], batch_norm=False), 0)
    params.layers[0].w[:] = [[1.0, -1.0]]
    params.layers[0].b[:] = [0.0, -100.0]  # unit 1 never activates
    x = np.random.default_rng(2).uniform(0.1, 1.0, size=(8, 1))
    _, grads = gradients(params, (x, np.zeros(8)), "mse")
    assert np.array_equal(grads["w0"][:, 1], [0.0])
    assert grads["b0"][1] == 0.0
    assert grads["w0"][0, 0] != 0.0


def test_objective_decomposes_exactly():
    params = init_network(mlp_specs([3, 4, 2], batch_norm=True), 6)
    rng = np.random.default_rng(3)
    x = rng.normal(size=(10, 3))
    t = rng.normal(size=(10, 2))
    reg = RegularizerSpec(kind="sparse_group_lasso", lam=0.01, alpha=0.3)
    obj, _ = gradients(params, (x, t), "mse", reg)
    from slimnet.model import forward
    pred, _ = forward(params, x, mode="train")
    assert obj == loss(pred, t, "mse") + reg.lam * reg_value(params, reg)


def test_gradients_empty_batch():
    params = init_network(mlp_specs([2, 2]), 0)
    with pytest.raises(ConfigError):
        gradients(params, (np.zeros((0, 2)), np.zeros(0)), "mse")


def test_gradients_update_running_side_effect():
    params = init_network(mlp_specs([2, 3, 1], batch_norm=True), 1)
    x = np.random.default_rng(4).normal(size=(8, 2))
    before = params.layers[0].running_mean.copy()
    gradients(params, (x, np.zeros(8)), "mse", update_running=False)
    assert np.array_equal(params.layers[0].running_mean, before)
    gradients(params, (x, np.zeros(8)), "mse", update_running=True)
    assert not np.array_equal(params.layers[0].running_mean, before)


def test_non_finite_activations_raise():
    params = init_network(mlp_specs([2, 3, 1]), 0)
    params.layers[0].w[0, 0] = np.nan
    with pytest.raises(NumericalError):
        gradients(params, (np.ones((4, 2)), np.zeros(4)), "mse")


def test_finite_diff_check_rejects_bad_h():
    params = init_network(mlp_specs([2, 2]), 0)
    with pytest.raises(ConfigError):
        finite_diff_check(params, (np.ones((3, 2)), np.zeros(3)), "mse", h=0.0)


def test_finite_diff_agreement_linear_network():
    # per-coordinate quadratic objective: no truncation error, so only
    # subtraction roundoff (~1e-11/|grad|) separates the two estimates
    params = init_network(mlp_specs([3, 2], batch_norm=False), 8)
    rng = np.random.default_rng(5)
    x = rng.normal(size=(6, 3))
    t = rng.normal(size=(6, 2))
    err = finite_diff_check(params, (x, t), "mse", h=1e-5)
    assert err < 1e-7


def test_finite_diff_error_scales_quadratically_in_h():
    # central differences have O(h^2) truncation error; two decades of h
    # should move the worst error by roughly four orders of magnitude
    params, x, masks = _battery_instance(99, True, "group_lasso", "prefix",
                                         [3, 5, 4, 2], batch=6)
    t = np.random.default_rng(6).normal(size=(6, 2))
    reg = RegularizerSpec(kind="group_lasso", lam=0.05)
    coarse = finite_diff_check(params, (x, t), "mse", reg, masks, h=3e-4)
    fine = finite_diff_check(params, (x, t), "mse", reg, masks, h=3e-6)
    assert fine < 1e-5
    assert 30.0 < coarse / fine < 3e6


def test_partial_masks_zero_rows_drop_out_of_the_objective():
    params, x, masks = _battery_instance(7, False, "partial_gl", "prefix",
                                         [3, 5, 4, 2], batch=6)
    t = np.random.default_rng(7).normal(size=(6, 2))
    reg = RegularizerSpec(kind="partial_gl", lam=0.05)
    err = finite_diff_check(params, (x, t), "mse", reg, masks, h=1e-5)
    assert err < 1e-5


def test_gradcheck_battery_small_slice():
    records = gradcheck_battery(n_configs=4, h=1e-5, seed=2024)
    assert len(records) == 4
    kinds = [r["kind"] for r in records]
    assert kinds == ["none", "l1", "l2", "group_lasso"]
    assert all(r["max_rel_error"] <= 1e-5 for r in records)
    assert {r["loss"] for r in records} == {"mean_squared_error",
                                            "softmax_cross_entropy"}


def test_battery_instances_are_reproducible():
    a = _battery_instance(3, True, "partial_sgl", "seeded_random", [3, 5, 4, 2], 6)
    b = _battery_instance(3, True, "partial_sgl", "seeded_random", [3, 5, 4, 2], 6)
    assert np.array_equal(a[0].layers[0].w, b[0].layers[0].w)
    assert np.array_equal(a[1], b[1])
    assert all(np.array_equal(x.bits, y.bits)
               for x, y in zip(a[2].layers, b[2].layers))
