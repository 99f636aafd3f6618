"""First-order optimizers with mean-projection for the surrogate network.

After every parameter update the weight means are projected back into
[-(1 - clip_eps), 1 - clip_eps]; the normalisers then stay strictly
positive no matter what the gradients do.
"""

from __future__ import annotations

import numpy as np

from .network import SurrogateNetwork


def _project(net: SurrogateNetwork) -> None:
    hi = 1.0 - net.clip_eps
    for m, _ in net.layers:
        np.clip(m, -hi, hi, out=m)


class Sgd:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, net: SurrogateNetwork, grads) -> None:
        for (m, b), (d_m, d_b) in zip(net.layers, grads):
            m -= self.lr * d_m
            b -= self.lr * d_b
        _project(net)


class Momentum:
    def __init__(self, lr: float, mu: float = 0.9):
        self.lr = lr
        self.mu = mu
        self._v = None

    def step(self, net: SurrogateNetwork, grads) -> None:
        if self._v is None:
            self._v = [[np.zeros_like(g) for g in layer] for layer in grads]
        for (m, b), (d_m, d_b), vel in zip(net.layers, grads, self._v):
            vel[0] = self.mu * vel[0] + d_m
            vel[1] = self.mu * vel[1] + d_b
            m -= self.lr * vel[0]
            b -= self.lr * vel[1]
        _project(net)


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = None
        self._v = None

    def step(self, net: SurrogateNetwork, grads) -> None:
        if self._m is None:
            self._m = [[np.zeros_like(g) for g in layer] for layer in grads]
            self._v = [[np.zeros_like(g) for g in layer] for layer in grads]
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for (m, b), grad, mom, var in zip(net.layers, grads, self._m, self._v):
            for i, (p, g) in enumerate(((m, grad[0]), (b, grad[1]))):
                mom[i] = self.beta1 * mom[i] + (1.0 - self.beta1) * g
                var[i] = self.beta2 * var[i] + (1.0 - self.beta2) * g * g
                p -= self.lr * (mom[i] / bc1) / (np.sqrt(var[i] / bc2) + self.eps)
        _project(net)


OPTIMIZERS = {"sgd": Sgd, "momentum": Momentum, "adam": Adam}


def make_optimizer(name: str, lr: float):
    if lr < 0:
        raise ValueError(f"learning rate must be >= 0, got {lr}")
    try:
        return OPTIMIZERS[name.lower()](lr)
    except KeyError:
        raise ValueError(f"unknown optimizer {name!r}; choose from {sorted(OPTIMIZERS)}")
