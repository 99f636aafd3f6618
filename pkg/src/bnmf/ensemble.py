"""Monte-Carlo validation of the mean-field theory on finite random networks.

Builds width-N random surrogate networks, propagates concrete input
pairs, and measures per-layer field variances and correlations across
realizations for comparison against the theory recursions. Also
estimates the mean squared singular value of single-layer Jacobians
(which approaches the correlation-map slope chi as width grows) and
samples true stochastic-binary pre-activation fields to check the
Gaussian approximation directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng
from .quadrature import QuadratureRule, default_rule
from .theory import MfParams, RecursionTrace, chi, fixed_point_q, iterate_theory

MEAN_INITS = ("symmetric_bernoulli", "clipped_gaussian")


class DegenerateInputError(ValueError):
    """Normaliser Sigma_ii <= 0, e.g. an all-zero input to the first layer."""


@dataclass(frozen=True)
class EnsembleConfig:
    width: int
    depth: int
    n_realizations: int
    params: MfParams
    mean_init: str = "symmetric_bernoulli"
    q0_aa: float = 1.0
    q0_bb: float = 1.0
    c0_ab: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.width < 1 or self.depth < 1 or self.n_realizations < 1:
            raise ValueError("width, depth and n_realizations must be >= 1")
        if abs(self.c0_ab) > 1.0:
            raise ValueError(f"|c0_ab| must be <= 1, got {self.c0_ab}")
        if self.q0_aa < 0 or self.q0_bb < 0:
            raise ValueError("input variances must be >= 0")
        if self.mean_init not in MEAN_INITS:
            raise ValueError(f"mean_init must be one of {MEAN_INITS}")


@dataclass
class RandomNetwork:
    """Layers of (mean matrix M in [-1,1]^{out x in}, bias vector b)."""

    layers: list[tuple[np.ndarray, np.ndarray]]
    gain: float = 1.0

    @property
    def depth(self) -> int:
        return len(self.layers)


@dataclass(frozen=True)
class EnsembleStats:
    """Per-layer empirical moments across realizations plus the theory trace."""

    q_aa_mean: np.ndarray
    q_aa_std: np.ndarray
    q_bb_mean: np.ndarray
    q_bb_std: np.ndarray
    c_ab_mean: np.ndarray
    c_ab_std: np.ndarray
    theory: RecursionTrace
    config: EnsembleConfig = field(repr=False)

    @property
    def n_layers(self) -> int:
        return len(self.q_aa_mean)


def _draw_means(gen: np.random.Generator, shape, sigma_m2: float,
                mean_init: str) -> np.ndarray:
    sigma_m = np.sqrt(sigma_m2)
    if mean_init == "symmetric_bernoulli":
        return np.where(gen.random(shape) < 0.5, sigma_m, -sigma_m)
    return np.clip(gen.normal(0.0, sigma_m, shape), -1.0, 1.0)


def sample_network(config: EnsembleConfig, realization_index: int) -> RandomNetwork:
    """Random square network, fully determined by (seed, realization_index)."""
    n = config.width
    p = config.params
    layers = []
    for layer in range(config.depth):
        wgen = rng.stream(config.seed, realization_index, layer, rng.ROLE_WEIGHTS)
        m = _draw_means(wgen, (n, n), p.sigma_m2, config.mean_init)
        bgen = rng.stream(config.seed, realization_index, layer, rng.ROLE_BIASES)
        b = bgen.normal(0.0, np.sqrt(n * p.sigma_b2), n)
        layers.append((m, b))
    return RandomNetwork(layers=layers, gain=p.kappa)


def generate_input_pair(dim: int, q0_aa: float, q0_bb: float, c0_ab: float,
                        seed) -> tuple[np.ndarray, np.ndarray]:
    """Two vectors whose empirical second moments are exact.

    Gram-Schmidt on two Gaussian draws followed by rescaling gives
    x_a.x_a/dim == q0_aa, x_b.x_b/dim == q0_bb and
    x_a.x_b/dim == c0_ab sqrt(q0_aa q0_bb), all to machine precision.
    `seed` may be an integer or a numpy Generator.
    """
    if dim < 2:
        raise ValueError(f"dim must be >= 2, got {dim}")
    if abs(c0_ab) > 1.0:
        raise ValueError(f"|c0_ab| must be <= 1, got {c0_ab}")
    gen = seed if isinstance(seed, np.random.Generator) else rng.stream(seed, rng.ROLE_INPUT)
    e1 = gen.standard_normal(dim)
    e1 /= np.linalg.norm(e1)
    g2 = gen.standard_normal(dim)
    e2 = g2 - (g2 @ e1) * e1
    e2 /= np.linalg.norm(e2)
    x_a = np.sqrt(dim * q0_aa) * e1
    x_b = np.sqrt(dim * q0_bb) * (c0_ab * e1 + np.sqrt(1.0 - c0_ab ** 2) * e2)
    return x_a, x_b


def _propagate(net: RandomNetwork, x0: np.ndarray) -> list[np.ndarray]:
    """Normalised fields for each layer; x0 has shape (batch, dim)."""
    fields = []
    h = None
    for layer, (m, b) in enumerate(net.layers):
        if layer == 0:
            x = x0
            sigma = x ** 2 @ (1.0 - m ** 2).T  # deterministic inputs
        else:
            x = np.tanh(net.gain * h)
            sigma = m.shape[1] - x ** 2 @ (m ** 2).T
        if np.any(sigma <= 0.0):
            raise DegenerateInputError(
                f"non-positive field variance at layer {layer}")
        h = (x @ m.T + b) / np.sqrt(sigma)
        fields.append(h)
    return fields


def forward_fields(net: RandomNetwork, x0: np.ndarray) -> list[np.ndarray]:
    """Per-layer pre-activation field vectors for a single input vector.

    The first layer treats the input as deterministic (normaliser
    sum_j x_j^2 (1 - M_ij^2)); hidden layers use the stochastic-neuron
    normaliser sum_j (1 - M_ij^2 psi^2(h_j)).
    """
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.shape != (net.layers[0][0].shape[1],):
        raise ValueError("x0 dimension does not match the first layer")
    return [h[0] for h in _propagate(net, x0[None, :])]


def empirical_moments(fields_a: list[np.ndarray],
                      fields_b: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-layer (q_aa, q_bb, c_ab) from two propagated field sequences."""
    if len(fields_a) != len(fields_b):
        raise ValueError("field sequences must have equal length")
    q_aa, q_bb, c_ab = [], [], []
    for ha, hb in zip(fields_a, fields_b):
        if ha.shape != hb.shape:
            raise ValueError("field shapes must match")
        qa = float(ha @ ha) / ha.size
        qb = float(hb @ hb) / hb.size
        if qa == 0.0 or qb == 0.0:
            raise ValueError("zero empirical field variance; correlation undefined")
        q_aa.append(qa)
        q_bb.append(qb)
        c_ab.append(float(ha @ hb) / ha.size / np.sqrt(qa * qb))
    return np.array(q_aa), np.array(q_bb), np.array(c_ab)


def ensemble_theory_trace(config: EnsembleConfig,
                          rule: QuadratureRule | None = None) -> RecursionTrace:
    """Theory trace matching the simulator's deterministic-input first layer."""
    return iterate_theory(config.params, config.q0_aa, config.q0_bb,
                          config.c0_ab, config.depth, rule,
                          deterministic_input=True)


def run_ensemble(config: EnsembleConfig,
                 rule: QuadratureRule | None = None) -> EnsembleStats:
    """Propagate an input pair through n_realizations random networks."""
    depth, n = config.depth, config.width
    shape = (config.n_realizations, depth + 1)
    q_aa = np.empty(shape)
    q_bb = np.empty(shape)
    c_ab = np.empty(shape)
    for r in range(config.n_realizations):
        gen = rng.stream(config.seed, r, 0, rng.ROLE_INPUT)
        x_a, x_b = generate_input_pair(n, config.q0_aa, config.q0_bb,
                                       config.c0_ab, gen)
        net = sample_network(config, r)
        try:
            fields = _propagate(net, np.stack([x_a, x_b]))
        except DegenerateInputError as exc:
            raise DegenerateInputError(f"realization {r}: {exc}") from exc
        fa = [h[0] for h in fields]
        fb = [h[1] for h in fields]
        qa, qb, c = empirical_moments(fa, fb)
        q_aa[r] = np.concatenate([[config.q0_aa], qa])
        q_bb[r] = np.concatenate([[config.q0_bb], qb])
        c_ab[r] = np.concatenate([[config.c0_ab], c])

    ddof = 1 if config.n_realizations > 1 else 0
    def std(a):
        return a.std(axis=0, ddof=ddof) if config.n_realizations > 1 else np.zeros(a.shape[1])

    return EnsembleStats(
        q_aa_mean=q_aa.mean(axis=0), q_aa_std=std(q_aa),
        q_bb_mean=q_bb.mean(axis=0), q_bb_std=std(q_bb),
        c_ab_mean=c_ab.mean(axis=0), c_ab_std=std(c_ab),
        theory=ensemble_theory_trace(config, rule),
        config=config,
    )


def single_layer_jacobian(net: RandomNetwork, layer_index: int,
                          h_prev: np.ndarray) -> np.ndarray:
    """Analytic Jacobian d h^l / d h^{l-1} at previous-layer fields h_prev.

    For hidden layers (layer_index >= 1) the field is
    h_i = hbar_i / sqrt(Sigma_ii) with x_j = psi(h_prev_j), so

        J_ij = psi'(h_prev_j) [ M_ij / sqrt(Sigma_ii)
                                + M_ij^2 psi(h_prev_j) hbar_i / Sigma_ii^{3/2} ]

    where the second term comes from differentiating the normaliser.
    """
    if layer_index < 1:
        raise ValueError("layer_index must be >= 1 (hidden layers)")
    m, b = net.layers[layer_index]
    h_prev = np.asarray(h_prev, dtype=np.float64)
    x = np.tanh(net.gain * h_prev)
    dx = net.gain * (1.0 - x * x)
    sigma = m.shape[1] - (m ** 2) @ (x ** 2)
    if np.any(sigma <= 0.0):
        raise DegenerateInputError(
            f"non-positive field variance at layer {layer_index}")
    hbar = m @ x + b
    lead = m / np.sqrt(sigma)[:, None]
    corr = (m ** 2) * (hbar / sigma ** 1.5)[:, None] * x[None, :]
    return (lead + corr) * dx[None, :]


def jacobian_msv(net: RandomNetwork, layer_index: int, h_prev: np.ndarray,
                 n_probes: int, seed: int) -> float:
    """Monte-Carlo mean of ||J u||^2 / ||u||^2 over random unit probes.

    Gaussian probes normalised to unit length are isotropic, so this is
    an unbiased estimator of trace(J^T J) / N.
    """
    if n_probes < 1:
        raise ValueError(f"n_probes must be >= 1, got {n_probes}")
    j = single_layer_jacobian(net, layer_index, h_prev)
    gen = rng.stream(seed, rng.ROLE_PROBES)
    u = gen.standard_normal((n_probes, j.shape[1]))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    return float(np.mean(np.sum((u @ j.T) ** 2, axis=1)))


def msv_width_sweep(params: MfParams, widths, n_networks: int = 20,
                    n_probes: int = 64, seed: int = 0,
                    rule: QuadratureRule | None = None) -> list[dict]:
    """Ensemble-averaged Jacobian MSV against theory chi across widths.

    Networks are sampled at the variance fixed point: previous-layer
    fields are drawn i.i.d. N(0, q*), matching the expectation in which
    the MSV -> chi(c=1) claim holds as width grows.
    """
    rule = rule or default_rule()
    q_star = fixed_point_q(params, rule)
    chi_theory = chi(1.0, q_star, params, rule)
    rows = []
    for width in widths:
        vals = np.empty(n_networks)
        for k in range(n_networks):
            config = EnsembleConfig(width=width, depth=2, n_realizations=1,
                                    params=params, seed=seed + 1000 * k)
            net = sample_network(config, k)
            fgen = rng.stream(seed, k, width, rng.ROLE_FIELDS)
            h_prev = fgen.normal(0.0, np.sqrt(q_star), width)
            vals[k] = jacobian_msv(net, 1, h_prev, n_probes, seed + 7 * k)
        rows.append({
            "width": int(width),
            "chi_theory": chi_theory,
            "msv_mean": float(vals.mean()),
            "msv_std": float(vals.std(ddof=1)) if n_networks > 1 else 0.0,
            "n_networks": n_networks,
        })
    return rows


def stochastic_binary_field_sample(m_row: np.ndarray, x_mean: np.ndarray,
                                   b: float, n_samples: int,
                                   seed: int) -> np.ndarray:
    """Samples of the true stochastic-binary pre-activation sum_j S_j x_j + b.

    S_j and x_j are independent {+-1} Bernoulli variables with means
    m_row[j] and x_mean[j]. The sample mean approaches sum_j m_j xbar_j + b
    and the variance sum_j (1 - m_j^2 xbar_j^2); with saturated weights
    (|m_j| = 1) the weights contribute no noise and the variance becomes
    sum_j (1 - xbar_j^2), so the Gaussian field picture survives even at
    sigma_m2 -> 1.
    """
    m_row = np.asarray(m_row, dtype=np.float64)
    x_mean = np.asarray(x_mean, dtype=np.float64)
    if np.any(np.abs(m_row) > 1.0) or np.any(np.abs(x_mean) > 1.0):
        raise ValueError("means must lie in [-1, 1]")
    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")
    gen = rng.stream(seed, rng.ROLE_BINARY_SAMPLES)
    p_s = 0.5 * (1.0 + m_row)
    p_x = 0.5 * (1.0 + x_mean)
    out = np.empty(n_samples)
    chunk = max(1, min(n_samples, 4_000_000 // max(1, m_row.size)))
    for start in range(0, n_samples, chunk):
        size = min(chunk, n_samples - start)
        s = np.where(gen.random((size, m_row.size)) < p_s, 1.0, -1.0)
        x = np.where(gen.random((size, x_mean.size)) < p_x, 1.0, -1.0)
        out[start:start + size] = (s * x).sum(axis=1) + b
    return out
