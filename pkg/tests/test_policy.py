import json
import math

import numpy as np
import pytest

from tacnog.policy import (
    ExpiredHorizon,
    PolicyNetwork,
    TrainConfig,
    TrainConfigError,
    WeightsFormatError,
    feedback_control,
    from_dict,
    load_weights,
    loss_and_grads,
    net_forward,
    save_weights,
    split_mask,
    to_dict,
    train,
)

STRAIGHT = np.array([0.0, 1.5, -math.pi / 2])


def random_net(seed=0):
    net = PolicyNetwork.init(1.5, seed=seed)
    r = np.random.default_rng(seed)
    net.layers = [(W, r.normal(size=b.shape)) for W, b in net.layers]
    net.in_shift = r.normal(size=3)
    net.in_scale = r.uniform(0.5, 2, 3)
    net.out_shift, net.out_scale = 0.3, 2.5
    return net


def test_zero_weight_network_outputs_shift():
    net = PolicyNetwork.init(1.5)
    net.layers = [(np.zeros_like(W), np.zeros_like(b)) for W, b in net.layers]
    net.out_shift = 0.7
    zs = np.random.default_rng(1).normal(size=(20, 3))
    assert np.all(net(zs) == 0.7)


def test_forward_is_finite_for_extreme_inputs():
    net = random_net()
    zs = np.array([[1e300, -1e300, 1e5], [0, 0, 0], [-1e10, 5, -3]])
    assert np.all(np.isfinite(net(zs)))


def test_gradients_match_central_differences():
    net = random_net(3)
    r = np.random.default_rng(4)
    A, y = r.normal(size=(10, 3)), r.normal(size=10)
    _, grads = loss_and_grads(net, A, y)
    eps = 1e-6
    for k, (gW, gb) in enumerate(grads):
        for arr, g in ((net.layers[k][0], gW), (net.layers[k][1], gb)):
            num = np.empty_like(arr)
            for idx in np.ndindex(arr.shape):
                old = arr[idx]
                arr[idx] = old + eps
                lp = loss_and_grads(net, A, y)[0]
                arr[idx] = old - eps
                lm = loss_and_grads(net, A, y)[0]
                arr[idx] = old
                num[idx] = (lp - lm) / (2 * eps)
            assert np.linalg.norm(g - num) <= 1e-5 * max(np.linalg.norm(num), 1e-12)


def test_constant_dataset_is_fit():
    Z = np.tile(STRAIGHT, (100, 1))
    U = np.zeros(100)
    Q = np.column_stack([np.zeros(100), np.linspace(-10, 10, 100), np.zeros(100)])
    net, hist = train(Z, U, Q, TrainConfig(epochs=200, batch_size=16, seed=0))
    assert hist.val_rmse < 1e-3
    assert abs(net_forward(net, STRAIGHT)) < 1e-3


def _toy(n=2000, seed=0):
    r = np.random.default_rng(seed)
    Z = np.column_stack([r.uniform(-1, 1, n), r.uniform(0, 1.5, n), r.uniform(-2.5, -0.5, n)])
    U = np.sin(2 * Z[:, 0]) + 0.5 * Z[:, 1] * np.cos(Z[:, 2])
    return Z, U, r.normal(size=(n, 3))


@pytest.mark.parametrize("opt", ["momentum", "adam"])
def test_smooth_target_is_learned(opt):
    Z, U, Q = _toy()
    lr = 0.05 if opt == "momentum" else 0.005
    net, hist = train(Z, U, Q, TrainConfig(epochs=150, batch_size=64, lr=lr, optimizer=opt))
    assert hist.val_rmse < 0.1 * hist.val_control_std
    assert all(b1 >= b2 for b1, b2 in zip(hist.best_val_loss, hist.best_val_loss[1:]))


def test_training_is_deterministic():
    Z, U, Q = _toy(600)
    cfg = TrainConfig(epochs=5, batch_size=32, seed=7)
    a, _ = train(Z, U, Q, cfg)
    b, _ = train(Z, U, Q, cfg)
    assert json.dumps(to_dict(a)) == json.dumps(to_dict(b))


def test_split_is_order_independent():
    Q = np.random.default_rng(0).normal(size=(5000, 3))
    m = split_mask(Q, 0.1)
    perm = np.random.default_rng(1).permutation(5000)
    assert np.array_equal(split_mask(Q[perm], 0.1), m[perm])
    assert 0.08 < m.mean() < 0.12


def test_config_errors():
    with pytest.raises(TrainConfigError):
        TrainConfig(epochs=0)
    with pytest.raises(TrainConfigError):
        TrainConfig(val_fraction=1.0)
    Z, U, Q = _toy(50)
    with pytest.raises(TrainConfigError, match="batch size"):
        train(Z, U, Q, TrainConfig(batch_size=256))
    with pytest.raises(TrainConfigError):
        train(np.empty((0, 3)), np.empty(0), np.empty((0, 3)))


def test_weights_round_trip_is_bit_exact(tmp_path):
    net = random_net(5)
    p = tmp_path / "w.json"
    save_weights(net, p)
    back = load_weights(p)
    zs = np.random.default_rng(6).normal(size=(100, 3)) * 3
    assert np.array_equal(net(zs), back(zs))
    for (W1, b1), (W2, b2) in zip(net.layers, back.layers):
        assert np.array_equal(W1, W2) and np.array_equal(b1, b2)


def test_tampered_weights_are_rejected(tmp_path):
    d = to_dict(random_net())
    d["arch"] = [3, 21, 20, 1]
    with pytest.raises(WeightsFormatError):
        from_dict(d)
    d = to_dict(random_net())
    d["layers"][1]["W"] = d["layers"][1]["W"][:-1]
    with pytest.raises(WeightsFormatError):
        from_dict(d)
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(WeightsFormatError):
        load_weights(p)


def test_feedback_scaling_wrapper():
    net = random_net(8)
    z = np.array([0.2, 0.9, -1.3])
    assert feedback_control(net, 1.5, z) == net_forward(net, z)
    t_g = 0.6
    lam = 1.5 / t_g
    assert feedback_control(net, t_g, z) == pytest.approx(
        lam * net_forward(net, [lam * z[0], lam * z[1], z[2]]), rel=1e-15
    )
    with pytest.raises(ExpiredHorizon):
        feedback_control(net, 0.0, z)


def test_input_angle_is_wrapped():
    net = random_net(9)
    z = np.array([0.1, 0.5, -1.0])
    assert net_forward(net, z) == pytest.approx(net_forward(net, z + [0, 0, 4 * math.pi]), abs=1e-12)
