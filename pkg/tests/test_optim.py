import numpy as np
import pytest

from bnmf.network import init_network
from bnmf.optim import Adam, Momentum, Sgd, make_optimizer


def tiny_net():
    return init_network([3, 2], 0.5, 0.0, seed=1)


def zero_grads(net):
    return [[np.zeros_like(m), np.zeros_like(b)] for m, b in net.layers]


def test_sgd_step_is_scaled_gradient():
    net = tiny_net()
    before = net.layers[0][0].copy()
    grads = zero_grads(net)
    grads[0][0][:] = 0.25
    Sgd(lr=0.1).step(net, grads)
    assert np.allclose(net.layers[0][0], before - 0.1 * 0.25, atol=1e-15)


def test_projection_clips_means_into_open_interval():
    net = tiny_net()
    grads = zero_grads(net)
    grads[0][0][:] = -100.0  # pushes means far past +1
    Sgd(lr=1.0).step(net, grads)
    assert np.all(net.layers[0][0] == 1.0 - net.clip_eps)


def test_biases_not_projected():
    net = tiny_net()
    grads = zero_grads(net)
    grads[0][1][:] = -5.0
    Sgd(lr=1.0).step(net, grads)
    assert np.allclose(net.layers[0][1], 5.0)


def test_momentum_accumulates_velocity():
    net = tiny_net()
    net.layers[0][0][:] = 0.0
    opt = Momentum(lr=0.1, mu=0.9)
    g = zero_grads(net)
    g[0][0][:] = 1.0
    opt.step(net, g)
    first = net.layers[0][0].copy()
    assert np.allclose(first, -0.1)
    opt.step(net, g)
    # second velocity = 0.9 * 1 + 1 = 1.9
    assert np.allclose(net.layers[0][0], first - 0.1 * 1.9)


@pytest.mark.parametrize("scale", [1e-6, 1.0, 1e6])
def test_adam_first_step_magnitude_is_learning_rate(scale):
    # bias correction makes the first update lr * g / (|g| + eps) ~ lr
    net = tiny_net()
    net.layers[0][0][:] = 0.0
    g = zero_grads(net)
    g[0][0][:] = scale
    Adam(lr=2e-4).step(net, g)
    assert np.allclose(np.abs(net.layers[0][0]), 2e-4, rtol=1e-2)


def test_make_optimizer_validation():
    assert isinstance(make_optimizer("SGD", 0.1), Sgd)
    assert isinstance(make_optimizer("momentum", 0.1), Momentum)
    assert isinstance(make_optimizer("adam", 0.1), Adam)
    with pytest.raises(ValueError):
        make_optimizer("adagrad", 0.1)
    with pytest.raises(ValueError):
        make_optimizer("sgd", -0.1)
