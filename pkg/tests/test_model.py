import numpy as np
import pytest

from slimnet import (ConfigError, DegenerateBatchError, LayerParams, LayerSpec,
                     NetworkParams, ShapeError, forward, init_network,
                     mlp_specs, permute_hidden, recalibrate_bn)
from slimnet.model import BN_EPS, BN_MOMENTUM, zero_like_grads


def linear_net(*mats, biases=None):
    """Identity-activation network with the given weight matrices."""
    specs, layers = [], []
    for i, w in enumerate(mats):
        w = np.asarray(w, dtype=np.float64)
        b = np.zeros(w.shape[1]) if biases is None else np.asarray(biases[i], dtype=np.float64)
        specs.append(LayerSpec(w.shape[0], w.shape[1], activation="identity"))
        layers.append(LayerParams(w.copy(), b.copy()))
    return NetworkParams(specs, layers)


def test_mlp_specs_shapes_and_activations():
    specs = mlp_specs([3, 4, 2], batch_norm=True)
    assert [(s.in_dim, s.out_dim) for s in specs] == [(3, 4), (4, 2)]
    assert specs[0].activation == "relu" and specs[0].batch_norm
    assert specs[1].activation == "identity" and not specs[1].batch_norm


def test_mlp_specs_no_bn():
    specs = mlp_specs([5, 6, 6, 1], batch_norm=False)
    assert not any(s.batch_norm for s in specs)
    with pytest.raises(ConfigError):
        mlp_specs([4])


def test_layer_spec_validation():
    with pytest.raises(ConfigError):
        LayerSpec(3, 0)
    with pytest.raises(ConfigError):
        LayerSpec(3, 2, activation="tanh")


def test_init_network_is_seeded():
    specs = mlp_specs([4, 8, 2])
    a = init_network(specs, 42)
    b = init_network(specs, 42)
    for (_, x), (_, y) in zip(a.trainable(), b.trainable()):
        assert np.array_equal(x, y)
    c = init_network(specs, 43)
    assert not np.array_equal(a.layers[0].w, c.layers[0].w)


def test_init_network_layout():
    params = init_network(mlp_specs([3, 5, 2], batch_norm=True), 0)
    assert params.layers[0].w.shape == (3, 5)
    assert np.array_equal(params.layers[0].b, np.zeros(5))
    assert np.array_equal(params.layers[0].gamma, np.ones(5))
    assert np.array_equal(params.layers[0].delta, np.zeros(5))
    assert np.array_equal(params.layers[0].running_mean, np.zeros(5))
    assert np.array_equal(params.layers[0].running_var, np.ones(5))
    assert params.layers[1].gamma is None
    assert params.dims == [3, 5, 2]


def test_init_network_std_scaling():
    # fixed init_std controls the spread; default is sqrt(2/fan_in)
    specs = mlp_specs([100, 80, 1], batch_norm=False)
    fixed = init_network(specs, 1, init_std=0.5)
    assert abs(fixed.layers[0].w.std() - 0.5) < 0.05
    he = init_network(specs, 1)
    assert abs(he.layers[0].w.std() - np.sqrt(2.0 / 100)) < 0.02


def test_init_network_validation():
    with pytest.raises(ConfigError):
        init_network([], 0)
    with pytest.raises(ConfigError):
        init_network([LayerSpec(2, 3), LayerSpec(4, 1)], 0)
    with pytest.raises(ConfigError):
        init_network(mlp_specs([2, 2]), 0, init_std=0.0)


def test_forward_linear_layer_exact():
    w = np.array([[1.0, -2.0], [0.5, 3.0]])
    b = np.array([0.25, -1.0])
    net = linear_net(w, biases=[b])
    x = np.array([[1.0, 2.0], [-3.0, 0.5]])
    out, trace = forward(net, x)
    assert np.array_equal(out, x @ w + b)
    assert np.array_equal(trace.output, out)


def test_forward_relu_clamps():
    specs = [LayerSpec(1, 2, activation="relu")]
    net = NetworkParams(specs, [LayerParams(np.array([[1.0, -1.0]]), np.zeros(2))])
    out, _ = forward(net, np.array([[2.0], [-3.0]]))
    assert np.array_equal(out, [[2.0, 0.0], [0.0, 3.0]])


def test_forward_train_batch_norm_standardizes():
    params = init_network(mlp_specs([3, 6, 2], batch_norm=True), 5)
    x = np.random.default_rng(0).normal(size=(64, 3))
    _, trace = forward(params, x, mode="train")
    h = trace.layers[0].act_in  # gamma=1, delta=0 at init
    assert np.abs(h.mean(axis=0)).max() < 1e-12
    assert np.abs(h.var(axis=0) - 1.0).max() < 1e-3  # off by var/(var+eps)


def test_forward_train_updates_running_stats_once():
    params = init_network(mlp_specs([2, 4, 1], batch_norm=True), 3)
    x = np.random.default_rng(1).normal(size=(16, 2))
    z = x @ params.layers[0].w
    _, _ = forward(params, x, mode="train", update_running=True)
    expect_mean = (1.0 - BN_MOMENTUM) * z.mean(axis=0)
    expect_var = BN_MOMENTUM * 1.0 + (1.0 - BN_MOMENTUM) * z.var(axis=0)
    assert np.allclose(params.layers[0].running_mean, expect_mean, rtol=0, atol=1e-15)
    assert np.allclose(params.layers[0].running_var, expect_var, rtol=0, atol=1e-15)


def test_forward_eval_does_not_mutate():
    params = init_network(mlp_specs([2, 4, 1], batch_norm=True), 3)
    params.layers[0].running_mean[:] = [0.3, -0.1, 0.0, 2.0]
    before = params.layers[0].running_mean.copy()
    forward(params, np.random.default_rng(2).normal(size=(8, 2)), mode="eval")
    assert np.array_equal(params.layers[0].running_mean, before)


def test_forward_eval_uses_running_stats():
    params = init_network(mlp_specs([2, 3, 1], batch_norm=True), 0)
    p = params.layers[0]
    p.running_mean[:] = [1.0, -2.0, 0.5]
    p.running_var[:] = [4.0, 1.0, 0.25]
    x = np.array([[0.7, -1.2]])
    out, trace = forward(params, x, mode="eval")
    z = x @ p.w
    xhat = (z - p.running_mean) / np.sqrt(p.running_var + BN_EPS)
    assert np.allclose(trace.layers[0].act_in, xhat, rtol=0, atol=1e-15)


def test_forward_bn_layer_ignores_bias():
    params = init_network(mlp_specs([2, 4, 1], batch_norm=True), 3)
    x = np.random.default_rng(3).normal(size=(8, 2))
    base, _ = forward(params, x, mode="train")
    params.layers[0].b[:] = 100.0  # mean subtraction would cancel it anyway
    shifted, _ = forward(params, x, mode="train")
    assert np.array_equal(base, shifted)


def test_forward_validation():
    params = init_network(mlp_specs([2, 3, 1], batch_norm=True), 0)
    with pytest.raises(ConfigError):
        forward(params, np.zeros((2, 2)), mode="predict")
    with pytest.raises(ShapeError):
        forward(params, np.zeros((2, 5)))
    with pytest.raises(DegenerateBatchError):
        forward(params, np.zeros((1, 2)), mode="train")
    with pytest.raises(ConfigError):
        forward(params, np.zeros((4, 2)), mode="eval", update_running=True)


def test_single_row_eval_is_fine_with_bn():
    params = init_network(mlp_specs([2, 3, 1], batch_norm=True), 0)
    out, _ = forward(params, np.zeros((1, 2)), mode="eval")
    assert out.shape == (1, 1)


def test_recalibrate_bn_pins_running_stats_to_batch_stats():
    params = init_network(mlp_specs([3, 5, 4, 1], batch_norm=True), 7)
    x = np.random.default_rng(4).normal(size=(50, 3))
    # corrupt the running estimates, then recalibrate
    for p in params.layers[:-1]:
        p.running_mean[:] = 9.0
        p.running_var[:] = 9.0
    recalibrate_bn(params, x)
    _, trace = forward(params, x, mode="train")
    for p, lt in zip(params.layers[:-1], trace.layers[:-1]):
        assert np.array_equal(p.running_mean, lt.bn_mu)
        assert np.array_equal(p.running_var, lt.bn_var)


def test_recalibrate_bn_idempotent():
    params = init_network(mlp_specs([2, 4, 1], batch_norm=True), 1)
    x = np.random.default_rng(5).normal(size=(32, 2))
    recalibrate_bn(params, x)
    mean1 = params.layers[0].running_mean.copy()
    var1 = params.layers[0].running_var.copy()
    recalibrate_bn(params, x)
    assert np.array_equal(params.layers[0].running_mean, mean1)
    assert np.array_equal(params.layers[0].running_var, var1)


def test_recalibrate_bn_noop_without_bn():
    params = init_network(mlp_specs([2, 4, 1], batch_norm=False), 1)
    w_before = params.layers[0].w.copy()
    out = recalibrate_bn(params, np.zeros((4, 2)))
    assert out is params
    assert np.array_equal(params.layers[0].w, w_before)


@pytest.mark.parametrize("batch_norm", [False, True])
def test_permute_hidden_preserves_function(batch_norm):
    params = init_network(mlp_specs([3, 6, 5, 2], batch_norm=batch_norm), 11)
    x = np.random.default_rng(6).normal(size=(12, 3))
    base, _ = forward(params, x, mode="eval")
    for layer, width in ((1, 6), (2, 5)):
        perm = np.random.default_rng(layer).permutation(width)
        permuted = permute_hidden(params, layer, perm)
        out, _ = forward(permuted, x, mode="eval")
        assert np.max(np.abs(out - base)) < 1e-12


def test_permute_hidden_moves_rows_and_columns_together():
    params = init_network(mlp_specs([2, 3, 1], batch_norm=True), 2)
    perm = np.array([2, 0, 1])
    permuted = permute_hidden(params, 1, perm)
    assert np.array_equal(permuted.layers[0].w, params.layers[0].w[:, perm])
    assert np.array_equal(permuted.layers[0].gamma, params.layers[0].gamma[perm])
    assert np.array_equal(permuted.layers[1].w, params.layers[1].w[perm, :])
    # original untouched
    assert permuted.layers[0].w is not params.layers[0].w


def test_permute_hidden_identity_is_exact():
    params = init_network(mlp_specs([2, 4, 1]), 3)
    x = np.random.default_rng(7).normal(size=(6, 2))
    base, _ = forward(params, x, mode="eval")
    out, _ = forward(permute_hidden(params, 1, np.arange(4)), x, mode="eval")
    assert np.array_equal(out, base)


def test_permute_hidden_validation():
    params = init_network(mlp_specs([2, 3, 1]), 0)
    with pytest.raises(ConfigError):
        permute_hidden(params, 0, np.arange(2))
    with pytest.raises(ConfigError):
        permute_hidden(params, 2, np.arange(1))
    with pytest.raises(ConfigError):
        permute_hidden(params, 1, np.array([0, 0, 2]))


def test_trainable_keys_and_zero_grads():
    params = init_network(mlp_specs([3, 4, 2], batch_norm=True), 0)
    keys = [k for k, _ in params.trainable()]
    assert keys == ["w0", "b0", "gamma0", "delta0", "w1", "b1"]
    grads = zero_like_grads(params)
    assert set(grads) == set(keys)
    assert all(not g.any() for g in grads.values())
    assert grads["w0"].shape == (3, 4)


def test_network_copy_is_deep():
    params = init_network(mlp_specs([2, 3, 1], batch_norm=True), 0)
    dup = params.copy()
    dup.layers[0].w[0, 0] += 1.0
    assert params.layers[0].w[0, 0] != dup.layers[0].w[0, 0]
