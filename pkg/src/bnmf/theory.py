"""Layer-to-layer mean-field maps for Gaussian-binary surrogate networks.

A stochastic binary network (weights and neurons in {+-1}, weight means
M_ij trainable) admits a deterministic surrogate whose pre-activation
fields are variance-normalised:

    h^l = (M^l x^{l-1} + b^l) / sqrt(diag Sigma^l),
    Sigma^l_ii = sum_j (1 - M_ij^2 psi^2(h^{l-1}_j)),   x^l = psi(h^l),

with psi(h) = tanh(kappa h). Over random initialisations
(M_ij zero-mean with variance sigma_m2, b ~ N(0, fan_in * sigma_b2)),
the per-layer field variance q and cross-pattern correlation c obey
scalar recursions; this module evaluates those maps, their fixed points
q*, c*, the correlation-map slope chi, and the depth scales xi_q, xi_c
that bound how far signals (and hence gradients) survive in depth.

The equivalent maps for a standard continuous tanh network are included
as a baseline: there criticality is a curve in (sigma_w2, sigma_b2),
whereas the surrogate's correlation depth scale diverges only as
sigma_m2 -> 1, i.e. when the weight means saturate to +-1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .quadrature import (
    QuadratureRule,
    default_rule,
    gaussian_expect,
    gaussian_expect_pair,
)

# Gain of the probit approximation to the logistic-sigmoid Gaussian
# integral; optional here (kappa=1 reproduces the plain-tanh recursions).
PROBIT_GAIN = math.sqrt(8.0 / math.pi)

# A linearised multiplier this close to 1 reports an infinite depth scale.
_CRITICAL_TOL = 1e-12


class FixedPointError(RuntimeError):
    """Fixed-point iteration failed to converge."""

    def __init__(self, message: str, last: float, residual: float):
        super().__init__(f"{message} (last iterate {last:.6g}, residual {residual:.3g})")
        self.last = last
        self.residual = residual


@dataclass(frozen=True)
class MfParams:
    """Initialisation hyperparameters for the surrogate theory maps.

    sigma_m2: variance of the weight means, in [0, 1) since |M_ij| <= 1.
    sigma_b2: bias variance scale (biases are N(0, fan_in * sigma_b2)).
    kappa:    activation gain, psi(h) = tanh(kappa * h).
    """

    sigma_m2: float
    sigma_b2: float
    kappa: float = 1.0
    activation: str = "tanh"

    def __post_init__(self):
        if not 0.0 <= self.sigma_m2 < 1.0:
            raise ValueError(f"sigma_m2 must be in [0, 1), got {self.sigma_m2}")
        if self.sigma_b2 < 0.0:
            raise ValueError(f"sigma_b2 must be >= 0, got {self.sigma_b2}")
        if self.kappa <= 0.0:
            raise ValueError(f"kappa must be > 0, got {self.kappa}")
        if self.activation != "tanh":
            raise ValueError(f"unsupported activation {self.activation!r}")


@dataclass(frozen=True)
class RecursionTrace:
    """Per-layer (q_aa, q_bb, c_ab), entry 0 being the inputs."""

    q_aa: np.ndarray
    q_bb: np.ndarray
    c_ab: np.ndarray

    @property
    def depth(self) -> int:
        return len(self.q_aa) - 1


@dataclass(frozen=True)
class DepthScales:
    """Fixed points and e-folding depth scales at one hyperparameter point."""

    q_star: float
    c_star: float
    chi_cstar: float
    chi1: float
    xi_q: float
    xi_c: float


def _act(kappa):
    return lambda h: np.tanh(kappa * h)


def _act_d1(kappa):
    def d1(h):
        t = np.tanh(kappa * h)
        return kappa * (1.0 - t * t)
    return d1


def _act_d2(kappa):
    def d2(h):
        t = np.tanh(kappa * h)
        return -2.0 * kappa * kappa * t * (1.0 - t * t)
    return d2


def e_phi2(q: float, params: MfParams, rule: QuadratureRule | None = None) -> float:
    """E[psi^2(sqrt(q) z)] under the standard Gaussian; in [0, 1)."""
    if q < 0:
        raise ValueError(f"variance must be >= 0, got {q}")
    rule = rule or default_rule()
    f = _act(params.kappa)
    return gaussian_expect(lambda h: f(h) ** 2, q, rule)


def variance_map(q_prev: float, params: MfParams,
                 rule: QuadratureRule | None = None) -> float:
    """One variance step: q -> (sigma_m2 E[psi^2] + sigma_b2) / (1 - sigma_m2 E[psi^2]).

    The denominator is the self-averaged normaliser of the surrogate field
    and is strictly positive because sigma_m2 < 1 and E[psi^2] < 1.
    """
    a = params.sigma_m2 * e_phi2(q_prev, params, rule)
    return (a + params.sigma_b2) / (1.0 - a)


def _corr_expect(c: float, q_a: float, q_b: float, params: MfParams,
                 rule: QuadratureRule) -> float:
    f = _act(params.kappa)
    return gaussian_expect_pair(f, f, q_a, q_b, c, rule)


def _corr_step(c_prev: float, q_a_prev: float, q_b_prev: float,
               q_a_cur: float, q_b_cur: float, params: MfParams,
               rule: QuadratureRule) -> float:
    """General correlation step; collapses to the symmetric form at q_aa = q_bb."""
    if q_a_cur <= 0.0 or q_b_cur <= 0.0:
        return 0.0  # zero-variance fields carry no correlation
    e = _corr_expect(c_prev, q_a_prev, q_b_prev, params, rule)
    num = (params.sigma_m2 * e + params.sigma_b2) / (1.0 + params.sigma_b2)
    pref = math.sqrt((1.0 + q_a_cur) * (1.0 + q_b_cur) / (q_a_cur * q_b_cur))
    return num * pref


def correlation_map(c_prev: float, q_star: float, params: MfParams,
                    rule: QuadratureRule | None = None) -> float:
    """One correlation step at the variance fixed point q*.

    c -> ((1 + q*) / q*) (sigma_m2 E[psi(u_a) psi(u_b)] + sigma_b2) / (1 + sigma_b2)

    with u_a = sqrt(q*) z1 and u_b = sqrt(q*) (c z1 + sqrt(1 - c^2) z2).
    c = 1 is always a fixed point: at q* the prefactor equals
    1 / (1 - sigma_m2 E[psi^2]), which cancels the numerator exactly.
    """
    if q_star <= 0.0:
        raise ValueError(f"q_star must be > 0, got {q_star}")
    if abs(c_prev) > 1.0 + 1e-12:
        raise ValueError(f"|c_prev| must be <= 1, got {c_prev}")
    rule = rule or default_rule()
    return _corr_step(c_prev, q_star, q_star, q_star, q_star, params, rule)


def chi(c: float, q_star: float, params: MfParams,
        rule: QuadratureRule | None = None) -> float:
    """Slope of the correlation map at correlation c and variance q*.

    chi = ((1 + q*) / (1 + sigma_b2)) sigma_m2 E[psi'(u_a) psi'(u_b)]

    (the derivative of the 2-D Gaussian expectation with respect to c,
    by Price's theorem). chi at the stable fixed point c* controls the
    correlation depth scale; chi = 1 marks criticality.
    """
    if q_star <= 0.0:
        raise ValueError(f"q_star must be > 0, got {q_star}")
    if abs(c) > 1.0 + 1e-12:
        raise ValueError(f"|c| must be <= 1, got {c}")
    rule = rule or default_rule()
    d1 = _act_d1(params.kappa)
    e = gaussian_expect_pair(d1, d1, q_star, q_star, c, rule)
    return (1.0 + q_star) / (1.0 + params.sigma_b2) * params.sigma_m2 * e


def chi1_variance_slope(q_star: float, params: MfParams,
                        rule: QuadratureRule | None = None) -> float:
    """Derivative of variance_map at q*, the multiplier of q-perturbations.

    With F(q) = E[psi^2(sqrt(q) z)], Stein's lemma gives
    F'(q) = E[psi'^2] + E[psi psi''], so

        d variance_map / dq = sigma_m2 F'(q) (1 + sigma_b2) / (1 - sigma_m2 F(q))^2.

    Evaluated generally (not only at the fixed point); at q* it determines
    xi_q = -1 / log of this multiplier.
    """
    if q_star < 0.0:
        raise ValueError(f"q_star must be >= 0, got {q_star}")
    rule = rule or default_rule()
    k = params.kappa
    f, d1, d2 = _act(k), _act_d1(k), _act_d2(k)
    e_d1sq = gaussian_expect(lambda h: d1(h) ** 2, q_star, rule)
    e_fd2 = gaussian_expect(lambda h: f(h) * d2(h), q_star, rule)
    a = params.sigma_m2 * e_phi2(q_star, params, rule)
    return params.sigma_m2 * (e_d1sq + e_fd2) * (1.0 + params.sigma_b2) / (1.0 - a) ** 2


def fixed_point_q(params: MfParams, rule: QuadratureRule | None = None,
                  tol: float = 1e-12, max_iter: int = 10_000,
                  q0: float = 1.0) -> float:
    """Fixed point q* of the variance map, by damped iteration.

    Falls back to bisection on variance_map(q) - q if the iteration fails
    to bring the residual under tol within max_iter steps.
    """
    if tol <= 0:
        raise ValueError(f"tol must be > 0, got {tol}")
    rule = rule or default_rule()
    q = max(float(q0), 0.0)
    for _ in range(max_iter):
        v = variance_map(q, params, rule)
        if abs(v - q) < tol:
            return _polish_fixed_point(q, params, rule)
        q = q + 0.5 * (v - q)

    # bisection fallback: the map is bounded above, so a bracket exists
    hi = (params.sigma_m2 + params.sigma_b2) / (1.0 - params.sigma_m2) + 1.0
    lo = 0.0
    g_lo = variance_map(lo, params, rule) - lo
    g_hi = variance_map(hi, params, rule) - hi
    if g_lo == 0.0:
        return lo
    if g_lo > 0 > g_hi:
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            g_mid = variance_map(mid, params, rule) - mid
            if abs(g_mid) < tol:
                return mid
            if g_mid > 0:
                lo = mid
            else:
                hi = mid
    residual = abs(variance_map(q, params, rule) - q)
    raise FixedPointError("variance fixed point did not converge", q, residual)


def _polish_fixed_point(q: float, params: MfParams, rule: QuadratureRule) -> float:
    """Drive the residual to its floating-point floor with undamped steps.

    Downstream identities (e.g. correlation_map(1, q*) == 1) amplify any
    q* error by O(1/q*), so the fixed point is refined well past the
    nominal tolerance; the contraction makes each step strictly better
    until rounding noise takes over.
    """
    best, best_res = q, abs(variance_map(q, params, rule) - q)
    for _ in range(80):
        q = variance_map(q, params, rule)
        res = abs(variance_map(q, params, rule) - q)
        if res < best_res:
            best, best_res = q, res
        else:
            break
    return best


def find_c_star(q_star: float, params: MfParams,
                rule: QuadratureRule | None = None,
                tol: float = 1e-12, max_iter: int = 5_000) -> float:
    """Stable fixed point of the correlation map at q*.

    Iterates from c0 = 0.5 and c0 = 0.99; a trajectory crawling into the
    boundary is classified as c* = 1 when chi(c=1) < 1 (the boundary fixed
    point is then attracting, and convexity of the map in c rules out any
    interior fixed point above the start).
    """
    rule = rule or default_rule()
    chi_at_1 = chi(1.0, q_star, params, rule)
    results = []
    for c0 in (0.5, 0.99):
        c = c0
        converged = False
        for _ in range(max_iter):
            c_next = correlation_map(c, q_star, params, rule)
            if abs(c_next - c) < tol:
                c = c_next
                converged = True
                break
            c = c_next
            if c > 1.0 - 1e-9 and chi_at_1 < 1.0:
                c = 1.0
                converged = True
                break
        if not converged:
            if chi_at_1 < 1.0 and c > c0:
                c = 1.0  # monotone ascent toward the attracting boundary
            else:
                raise FixedPointError(
                    "correlation fixed point did not converge", c,
                    abs(correlation_map(c, q_star, params, rule) - c))
        if chi_at_1 < 1.0 and 1.0 - c < 1e-6:
            c = 1.0  # iterates stalled by quadrature noise at the boundary
        results.append(c)
    if abs(results[0] - results[1]) > 1e-6:
        raise FixedPointError(
            "correlation fixed point depends on the starting point",
            results[1], abs(results[0] - results[1]))
    return results[1]


def _scale_from_multiplier(m: float) -> float:
    """Depth scale -1/log m; +inf at criticality, 0 for a flat map."""
    if m >= 1.0 - _CRITICAL_TOL:
        return math.inf
    if m <= 0.0:
        return 0.0
    return -1.0 / math.log(m)


def depth_scales(params: MfParams, rule: QuadratureRule | None = None,
                 tol: float = 1e-12) -> DepthScales:
    """Fixed points, slopes and depth scales for one hyperparameter point."""
    rule = rule or default_rule()
    q_star = fixed_point_q(params, rule, tol=tol)
    q_mult = chi1_variance_slope(q_star, params, rule)
    if q_star <= 0.0:
        # degenerate corner (sigma_b2 = 0, weak means): fields die out and
        # the correlation map linearises to slope sigma_m2 * kappa^2
        slope = params.sigma_m2 * params.kappa ** 2
        return DepthScales(q_star=q_star, c_star=0.0, chi_cstar=slope,
                           chi1=slope, xi_q=_scale_from_multiplier(q_mult),
                           xi_c=_scale_from_multiplier(slope))
    c_star = find_c_star(q_star, params, rule, tol=tol)
    chi_cstar = chi(c_star, q_star, params, rule)
    chi1 = chi(1.0, q_star, params, rule)
    return DepthScales(
        q_star=q_star,
        c_star=c_star,
        chi_cstar=chi_cstar,
        chi1=chi1,
        xi_q=_scale_from_multiplier(q_mult),
        xi_c=_scale_from_multiplier(chi_cstar),
    )


def first_layer_moments(q0_aa: float, q0_bb: float, c0: float,
                        params: MfParams) -> tuple[float, float, float]:
    """Field moments after a layer fed with deterministic inputs.

    With fixed inputs x (only the weights and biases random) the
    normaliser is sum_j x_j^2 (1 - M_ij^2), which self-averages to
    q0 (1 - sigma_m2) per unit width, giving

        q1 = (sigma_m2 q0 + sigma_b2) / (q0 (1 - sigma_m2))
        c1 = (sigma_m2 c0 sqrt(q0_aa q0_bb) + sigma_b2)
             / sqrt((sigma_m2 q0_aa + sigma_b2) (sigma_m2 q0_bb + sigma_b2)).
    """
    if q0_aa <= 0.0 or q0_bb <= 0.0:
        raise ValueError("deterministic-input layer requires q0 > 0")
    sm2, sb2 = params.sigma_m2, params.sigma_b2
    q1_aa = (sm2 * q0_aa + sb2) / (q0_aa * (1.0 - sm2))
    q1_bb = (sm2 * q0_bb + sb2) / (q0_bb * (1.0 - sm2))
    num = sm2 * c0 * math.sqrt(q0_aa * q0_bb) + sb2
    den = math.sqrt((sm2 * q0_aa + sb2) * (sm2 * q0_bb + sb2))
    c1 = num / den if den > 0.0 else 0.0
    return q1_aa, q1_bb, c1


def iterate_theory(params: MfParams, q0_aa: float, q0_bb: float, c0: float,
                   depth: int, rule: QuadratureRule | None = None,
                   deterministic_input: bool = False) -> RecursionTrace:
    """Iterate the variance and correlation maps for `depth` layers.

    Returns a trace of length depth + 1 starting at the inputs. Each step
    applies the variance map to both patterns, then the correlation step
    with the pre-step variances inside the expectation and the post-step
    variances in the normalising prefactor. With deterministic_input=True
    the first step instead uses the fixed-input moment formulas, matching
    a simulated network fed with concrete input vectors.
    """
    if depth < 0:
        raise ValueError(f"depth must be >= 0, got {depth}")
    if q0_aa < 0 or q0_bb < 0:
        raise ValueError("input variances must be >= 0")
    if abs(c0) > 1.0 + 1e-12:
        raise ValueError(f"|c0| must be <= 1, got {c0}")
    rule = rule or default_rule()
    q_aa, q_bb, c_ab = [float(q0_aa)], [float(q0_bb)], [float(c0)]
    for layer in range(depth):
        if layer == 0 and deterministic_input:
            qa, qb, c = first_layer_moments(q_aa[-1], q_bb[-1], c_ab[-1], params)
        else:
            qa = variance_map(q_aa[-1], params, rule)
            qb = variance_map(q_bb[-1], params, rule)
            c = _corr_step(c_ab[-1], q_aa[-1], q_bb[-1], qa, qb, params, rule)
        q_aa.append(qa)
        q_bb.append(qb)
        c_ab.append(c)
    return RecursionTrace(q_aa=np.array(q_aa), q_bb=np.array(q_bb),
                          c_ab=np.array(c_ab))


# ---------------------------------------------------------------------------
# Continuous tanh baseline (no field normalisation, no gain)
# ---------------------------------------------------------------------------

def continuous_variance_map(q_prev: float, sigma_w2: float, sigma_b2: float,
                            rule: QuadratureRule | None = None) -> float:
    """q -> sigma_w2 E[tanh^2(sqrt(q) z)] + sigma_b2."""
    if q_prev < 0:
        raise ValueError(f"variance must be >= 0, got {q_prev}")
    rule = rule or default_rule()
    return sigma_w2 * gaussian_expect(lambda h: np.tanh(h) ** 2, q_prev, rule) + sigma_b2


def continuous_correlation_map(c_prev: float, q_star: float, sigma_w2: float,
                               sigma_b2: float,
                               rule: QuadratureRule | None = None) -> float:
    """c -> (sigma_w2 E[tanh(u_a) tanh(u_b)] + sigma_b2) / q* at the fixed point."""
    if q_star <= 0.0:
        raise ValueError(f"q_star must be > 0, got {q_star}")
    if abs(c_prev) > 1.0 + 1e-12:
        raise ValueError(f"|c_prev| must be <= 1, got {c_prev}")
    rule = rule or default_rule()
    e = gaussian_expect_pair(np.tanh, np.tanh, q_star, q_star, c_prev, rule)
    return (sigma_w2 * e + sigma_b2) / q_star


def continuous_chi(c: float, q_star: float, sigma_w2: float, sigma_b2: float,
                   rule: QuadratureRule | None = None) -> float:
    """Slope of the continuous correlation map: sigma_w2 E[tanh'(u_a) tanh'(u_b)]."""
    if q_star < 0.0:
        raise ValueError(f"q_star must be >= 0, got {q_star}")
    if abs(c) > 1.0 + 1e-12:
        raise ValueError(f"|c| must be <= 1, got {c}")
    rule = rule or default_rule()
    d1 = lambda h: 1.0 - np.tanh(h) ** 2
    e = gaussian_expect_pair(d1, d1, q_star, q_star, c, rule)
    return sigma_w2 * e


def continuous_fixed_point_q(sigma_w2: float, sigma_b2: float,
                             rule: QuadratureRule | None = None,
                             tol: float = 1e-12, max_iter: int = 10_000,
                             q0: float = 1.0) -> float:
    """Fixed point of the continuous variance map, by damped iteration."""
    rule = rule or default_rule()
    q = max(float(q0), 0.0)
    for _ in range(max_iter):
        v = continuous_variance_map(q, sigma_w2, sigma_b2, rule)
        if abs(v - q) < tol:
            return q
        q = q + 0.5 * (v - q)
    raise FixedPointError("continuous variance fixed point did not converge",
                          q, abs(continuous_variance_map(q, sigma_w2, sigma_b2, rule) - q))
