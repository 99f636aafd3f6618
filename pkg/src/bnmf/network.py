"""Trainable deterministic surrogate of a stochastic binary network.

Parameters are the means M of the binary weights (kept strictly inside
[-1, 1] by projection) and real biases b. The forward pass normalises
every pre-activation by the square root of its mean-field variance; the
backward pass differentiates through both the mean path and the variance
path, which is what distinguishes this model from a plain tanh network.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .ensemble import MEAN_INITS, DegenerateInputError, _draw_means

CLIP_EPS = 1e-6  # keeps every Sigma strictly positive and gradients finite

CHECKPOINT_MAGIC = b"BNMF"
CHECKPOINT_VERSION = 1


@dataclass
class SurrogateNetwork:
    """Layers of (M: out x in mean matrix, b: out bias vector)."""

    layers: list[list[np.ndarray]]
    gain: float = 1.0
    clip_eps: float = CLIP_EPS

    @property
    def widths(self) -> list[int]:
        return [self.layers[0][0].shape[1]] + [m.shape[0] for m, _ in self.layers]

    @property
    def depth(self) -> int:
        return len(self.layers)

    def copy(self) -> "SurrogateNetwork":
        return SurrogateNetwork([[m.copy(), b.copy()] for m, b in self.layers],
                                gain=self.gain, clip_eps=self.clip_eps)

    def astype(self, dtype) -> "SurrogateNetwork":
        return SurrogateNetwork(
            [[m.astype(dtype), b.astype(dtype)] for m, b in self.layers],
            gain=self.gain, clip_eps=self.clip_eps)


@dataclass
class ForwardCache:
    """Per-layer intermediates needed for the exact backward pass."""

    x_in: list[np.ndarray] = field(default_factory=list)
    hbar: list[np.ndarray] = field(default_factory=list)
    sigma: list[np.ndarray] = field(default_factory=list)
    h: list[np.ndarray] = field(default_factory=list)
    logits: np.ndarray | None = None


def init_network(widths, sigma_m2: float, sigma_b2: float,
                 mean_init: str = "symmetric_bernoulli", seed: int = 0,
                 gain: float = 1.0) -> SurrogateNetwork:
    """Random network: means per mean_init, biases N(0, fan_in * sigma_b2)."""
    if not 0.0 <= sigma_m2 < 1.0:
        raise ValueError(f"sigma_m2 must be in [0, 1), got {sigma_m2}")
    if sigma_b2 < 0.0:
        raise ValueError(f"sigma_b2 must be >= 0, got {sigma_b2}")
    if mean_init not in MEAN_INITS:
        raise ValueError(f"mean_init must be one of {MEAN_INITS}")
    widths = [int(w) for w in widths]
    if len(widths) < 2:
        raise ValueError("widths must list at least input and output dimensions")
    layers = []
    for layer, (fan_in, fan_out) in enumerate(zip(widths, widths[1:])):
        wgen = rng.stream(seed, layer, rng.ROLE_WEIGHTS)
        m = _draw_means(wgen, (fan_out, fan_in), sigma_m2, mean_init)
        np.clip(m, -(1.0 - CLIP_EPS), 1.0 - CLIP_EPS, out=m)
        bgen = rng.stream(seed, layer, rng.ROLE_BIASES)
        b = bgen.normal(0.0, np.sqrt(fan_in * sigma_b2), fan_out)
        layers.append([m, b])
    return SurrogateNetwork(layers=layers, gain=gain)


def forward(net: SurrogateNetwork, x_batch: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    """Logits and cache for a batch of inputs in [-1, 1].

    Hidden layers apply h = hbar / sqrt(Sigma) then psi(h) = tanh(gain h);
    the output layer returns gain * h as logits. The first layer uses the
    deterministic-input normaliser sum_j x_j^2 (1 - M_ij^2), all later
    layers sum_j (1 - M_ij^2 psi^2).
    """
    x_batch = np.atleast_2d(x_batch)
    if x_batch.shape[1] != net.layers[0][0].shape[1]:
        raise ValueError("input dimension does not match the first layer")
    if np.max(np.abs(x_batch)) > 1.0 + 1e-9:
        raise ValueError("inputs must lie in [-1, 1]")
    cache = ForwardCache()
    x = x_batch
    h = None
    for layer, (m, b) in enumerate(net.layers):
        if layer == 0:
            sigma = x ** 2 @ (1.0 - m ** 2).T
        else:
            x = np.tanh(net.gain * h)
            sigma = m.shape[1] - x ** 2 @ (m ** 2).T
        if np.any(sigma <= 0.0):
            bad = int(np.argwhere(sigma.min(axis=1) <= 0.0)[0][0])
            raise DegenerateInputError(
                f"non-positive field variance at layer {layer} (sample {bad})")
        hbar = x @ m.T + b
        h = hbar / np.sqrt(sigma)
        cache.x_in.append(x)
        cache.hbar.append(hbar)
        cache.sigma.append(sigma)
        cache.h.append(h)
    cache.logits = net.gain * h
    return cache.logits, cache


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> float:
    z = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    return float(np.mean(lse - z[np.arange(len(labels)), labels]))


def loss_and_grad(net: SurrogateNetwork, x_batch: np.ndarray,
                  labels: np.ndarray, include_variance_grads: bool = True):
    """Mean softmax cross-entropy and its exact parameter gradients.

    Gradients follow every path of the forward computation, including the
    dependence of each normaliser Sigma on M and on the previous layer's
    activations. include_variance_grads=False severs the Sigma paths
    (diagnostic only; used to demonstrate that they matter).
    """
    labels = np.asarray(labels)
    logits, cache = forward(net, x_batch)
    if np.any(labels < 0) or np.any(labels >= logits.shape[1]):
        raise ValueError("labels out of range for the output layer")
    loss = cross_entropy(logits, labels)

    batch = logits.shape[0]
    g_logits = _softmax(logits)
    g_logits[np.arange(batch), labels] -= 1.0
    g_logits /= batch

    grads: list[list[np.ndarray]] = [None] * net.depth
    g_h = net.gain * g_logits
    for layer in range(net.depth - 1, -1, -1):
        m, _ = net.layers[layer]
        x = cache.x_in[layer]
        sigma = cache.sigma[layer]
        h = cache.h[layer]
        inv_root = 1.0 / np.sqrt(sigma)

        g_hbar = g_h * inv_root
        d_m = g_hbar.T @ x
        d_b = g_hbar.sum(axis=0)
        g_x = g_hbar @ m

        if include_variance_grads:
            g_sigma = -0.5 * g_h * h / sigma
            # dSigma/dM_ij = -2 M_ij x_j^2 for both normaliser variants
            d_m += -2.0 * m * (g_sigma.T @ x ** 2)
            if layer > 0:
                g_x += -2.0 * x * (g_sigma @ m ** 2)
        grads[layer] = [d_m, d_b]

        if layer > 0:
            # x = tanh(gain * h_prev)
            g_h = g_x * net.gain * (1.0 - x * x)
    return loss, grads


@dataclass(frozen=True)
class GradcheckReport:
    max_rel_error: float
    worst: tuple[int, str, tuple]
    passed: bool

    def __str__(self):
        layer, name, idx = self.worst
        return (f"gradcheck {'passed' if self.passed else 'FAILED'}: "
                f"max relative error {self.max_rel_error:.3e} "
                f"at layer {layer} {name}{list(idx)}")


def gradcheck(net: SurrogateNetwork, x_batch: np.ndarray, labels: np.ndarray,
              epsilon: float = 1e-5, tolerance: float = 1e-4,
              include_variance_grads: bool = True) -> GradcheckReport:
    """Compare analytic gradients against central finite differences."""
    if epsilon <= 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    _, grads = loss_and_grad(net, x_batch, labels,
                             include_variance_grads=include_variance_grads)
    worst = (0, "M", (0, 0))
    max_rel = 0.0
    for layer, (m, b) in enumerate(net.layers):
        for name, arr, grad in (("M", m, grads[layer][0]), ("b", b, grads[layer][1])):
            for idx in np.ndindex(arr.shape):
                orig = arr[idx]
                arr[idx] = orig + epsilon
                up = cross_entropy(forward(net, x_batch)[0], labels)
                arr[idx] = orig - epsilon
                down = cross_entropy(forward(net, x_batch)[0], labels)
                arr[idx] = orig
                numeric = (up - down) / (2.0 * epsilon)
                analytic = grad[idx]
                rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-10)
                if rel > max_rel:
                    max_rel = rel
                    worst = (layer, name, idx)
    return GradcheckReport(max_rel_error=max_rel, worst=worst,
                           passed=max_rel < tolerance)


def binarize_predictions(net: SurrogateNetwork, x_batch: np.ndarray) -> np.ndarray:
    """Predictions of the hard {+-1} network: sign weights, sign activations.

    Binary activations make the mean-field normaliser vanish, so it is
    dropped entirely; biases are kept as-is. Used to check what the
    surrogate has actually taught the underlying binary network.
    """
    a = np.atleast_2d(x_batch)
    z = None
    for m, b in net.layers:
        w = np.where(m >= 0.0, 1.0, -1.0)
        z = a @ w.T + b
        a = np.where(z >= 0.0, 1.0, -1.0)
    return np.argmax(z, axis=1)


def binarize_and_eval(net: SurrogateNetwork, inputs: np.ndarray,
                      labels: np.ndarray) -> float:
    """Accuracy of the sign-binarized network."""
    pred = binarize_predictions(net, inputs)
    return float(np.mean(pred == np.asarray(labels)))


def save_checkpoint(net: SurrogateNetwork, path: str) -> None:
    """Little-endian binary: magic, version u32, layer count u32,
    per-layer (out u32, in u32), then per-layer f64 row-major M and b."""
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, net.depth))
        for m, _ in net.layers:
            fh.write(struct.pack("<II", m.shape[0], m.shape[1]))
        for m, b in net.layers:
            fh.write(np.ascontiguousarray(m, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_checkpoint(path: str, gain: float = 1.0) -> SurrogateNetwork:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"bad checkpoint magic {data[:4]!r}")
    version, n_layers = struct.unpack_from("<II", data, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    offset = 12
    dims = []
    for _ in range(n_layers):
        out_dim, in_dim = struct.unpack_from("<II", data, offset)
        dims.append((out_dim, in_dim))
        offset += 8
    layers = []
    for out_dim, in_dim in dims:
        m = np.frombuffer(data, dtype="<f8", count=out_dim * in_dim,
                          offset=offset).reshape(out_dim, in_dim).copy()
        offset += out_dim * in_dim * 8
        b = np.frombuffer(data, dtype="<f8", count=out_dim, offset=offset).copy()
        offset += out_dim * 8
        layers.append([m, b])
    if offset != len(data):
        raise ValueError("checkpoint payload size mismatch")
    return SurrogateNetwork(layers=layers, gain=gain)
