import math

import numpy as np
import pytest

from bnmf.quadrature import default_rule, gauss_hermite_rule
from bnmf.theory import (
    FixedPointError,
    MfParams,
    chi,
    chi1_variance_slope,
    continuous_chi,
    continuous_correlation_map,
    continuous_fixed_point_q,
    continuous_variance_map,
    correlation_map,
    depth_scales,
    e_phi2,
    find_c_star,
    first_layer_moments,
    fixed_point_q,
    iterate_theory,
    variance_map,
)

from test_quadrature import trapezoid_gauss_expect


PROBIT = math.sqrt(8 / math.pi)


# ---------------------------------------------------------------------------
# e_phi2
# ---------------------------------------------------------------------------

def test_e_phi2_zero_variance():
    assert e_phi2(0.0, MfParams(0.5, 0.0)) == 0.0


def test_e_phi2_saturates_toward_one():
    val = e_phi2(1e6, MfParams(0.5, 0.0))
    assert 0.99 < val < 1.0


def test_e_phi2_against_trapezoid_oracle_with_probit_gain():
    p = MfParams(0.5, 0.0, kappa=PROBIT)
    oracle = trapezoid_gauss_expect(lambda z: np.tanh(PROBIT * z) ** 2)
    assert e_phi2(1.0, p) == pytest.approx(oracle, abs=1e-12)


def test_e_phi2_monotone_in_variance():
    p = MfParams(0.7, 0.0)
    qs = np.concatenate([np.linspace(0, 2, 40), np.geomspace(2, 200, 20)])
    vals = [e_phi2(float(q), p) for q in qs]
    assert all(b >= a for a, b in zip(vals, vals[1:]))
    assert all(0.0 <= v < 1.0 for v in vals)


def test_e_phi2_rejects_negative_variance():
    with pytest.raises(ValueError):
        e_phi2(-0.1, MfParams(0.5, 0.0))


# ---------------------------------------------------------------------------
# variance map
# ---------------------------------------------------------------------------

def test_variance_map_dies_without_signal_or_bias():
    p = MfParams(0.0, 0.0)
    for q in (0.0, 0.5, 7.0):
        assert variance_map(q, p) == 0.0


def test_variance_map_pure_bias():
    p = MfParams(0.0, 0.5)
    for q in (0.0, 1.0, 100.0):
        assert variance_map(q, p) == pytest.approx(0.5, abs=1e-15)


def test_variance_map_matches_composed_oracle():
    # independent oracle: trapezoid expectation fed through the closed form
    p = MfParams(0.5, 1e-3)
    e = trapezoid_gauss_expect(lambda z: np.tanh(z) ** 2)
    want = (0.5 * e + 1e-3) / (1 - 0.5 * e)
    assert variance_map(1.0, p) == pytest.approx(want, rel=1e-11)


def test_variance_map_monotone_in_previous_variance():
    p = MfParams(0.8, 1e-3)
    qs = np.linspace(0, 30, 200)
    vals = [variance_map(float(q), p) for q in qs]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


# ---------------------------------------------------------------------------
# correlation map
# ---------------------------------------------------------------------------

def test_correlation_map_unit_correlation_is_fixed_point():
    p = MfParams(0.5, 1e-3)
    q_star = fixed_point_q(p)
    assert abs(correlation_map(1.0, q_star, p) - 1.0) < 1e-10


def test_correlation_map_pure_bias_fields_fully_correlated():
    p = MfParams(0.0, 0.3)
    q_star = fixed_point_q(p)  # = sigma_b2 for a constant map
    assert q_star == pytest.approx(0.3, abs=1e-12)
    for c in (-1.0, -0.2, 0.0, 0.7):
        assert correlation_map(c, q_star, p) == pytest.approx(1.0, abs=1e-12)


def test_correlation_map_matches_dense_tensor_oracle():
    # oracle: raw 256x256 tensor-product Gauss-Hermite quadrature
    p = MfParams(0.5, 1e-3)
    q_star = fixed_point_q(p)
    c = 0.5
    rule = gauss_hermite_rule(256)
    z1 = rule.nodes[:, None]
    z2 = rule.nodes[None, :]
    w2d = rule.weights[:, None] * rule.weights[None, :]
    ua = np.sqrt(q_star) * z1
    ub = np.sqrt(q_star) * (c * z1 + np.sqrt(1 - c * c) * z2)
    e = float(np.sum(w2d * np.tanh(ua) * np.tanh(ub)))
    want = (1 + q_star) / q_star * (0.5 * e + 1e-3) / (1 + 1e-3)
    assert correlation_map(c, q_star, p) == pytest.approx(want, rel=1e-10)


def test_correlation_map_rejects_bad_arguments():
    p = MfParams(0.5, 1e-3)
    with pytest.raises(ValueError):
        correlation_map(0.5, 0.0, p)
    with pytest.raises(ValueError):
        correlation_map(0.5, -1.0, p)
    with pytest.raises(ValueError):
        correlation_map(1.5, 1.0, p)


def test_correlation_map_stays_in_unit_interval():
    # Cauchy-Schwarz bound, checked on a grid of c values and parameters
    cs = np.linspace(-1, 1, 101)
    for sm2 in (0.05, 0.3, 0.6, 0.95):
        for sb2 in (1e-5, 1e-3, 1e-2, 1e-1, 0.5):
            p = MfParams(sm2, sb2)
            q_star = fixed_point_q(p)
            for c in cs:
                out = correlation_map(float(c), q_star, p)
                assert -1.0 - 1e-12 <= out <= 1.0 + 1e-12


# ---------------------------------------------------------------------------
# chi and the variance slope
# ---------------------------------------------------------------------------

def test_chi_vanishes_without_weight_variance():
    p = MfParams(0.0, 0.3)
    assert chi(0.5, fixed_point_q(p), p) == 0.0


def test_chi_matches_one_sided_difference_at_unit_correlation():
    p = MfParams(0.5, 1e-3)
    q_star = fixed_point_q(p)
    eps = 1e-5
    fd = (correlation_map(1.0, q_star, p)
          - correlation_map(1.0 - eps, q_star, p)) / eps
    assert chi(1.0, q_star, p) == pytest.approx(fd, rel=1e-4)


def test_chi_near_saturated_means_stays_subcritical():
    p = MfParams(0.99, 1e-3)
    q_star = fixed_point_q(p)
    val = chi(1.0, q_star, p)
    assert 0.9 < val < 1.0


def test_variance_slope_matches_finite_difference_at_fixed_point():
    for sm2 in (0.2, 0.5, 0.99):
        p = MfParams(sm2, 1e-3)
        q_star = fixed_point_q(p)
        eps = 1e-6 * max(q_star, 1e-3)
        fd = (variance_map(q_star + eps, p) - variance_map(q_star - eps, p)) / (2 * eps)
        assert chi1_variance_slope(q_star, p) == pytest.approx(fd, rel=1e-4)


def test_variance_slope_trivial_cases():
    p0 = MfParams(0.0, 0.3)
    assert chi1_variance_slope(fixed_point_q(p0), p0) == 0.0
    p = MfParams(0.5, 1e-3)
    slope = chi1_variance_slope(fixed_point_q(p), p)
    assert 0.0 < slope < 1.0  # stable fixed point


# ---------------------------------------------------------------------------
# fixed points
# ---------------------------------------------------------------------------

def test_fixed_point_constant_map():
    assert fixed_point_q(MfParams(0.0, 0.3)) == pytest.approx(0.3, abs=1e-12)


def test_fixed_point_matches_bisection_oracle():
    p = MfParams(0.5, 1e-3)
    lo, hi = 0.0, 10.0
    for _ in range(200):  # independent bisection on variance_map(q) - q
        mid = 0.5 * (lo + hi)
        if variance_map(mid, p) - mid > 0:
            lo = mid
        else:
            hi = mid
    assert fixed_point_q(p) == pytest.approx(0.5 * (lo + hi), abs=1e-10)


def test_fixed_point_start_independent():
    p = MfParams(0.7, 1e-2)
    vals = [fixed_point_q(p, q0=q0) for q0 in (0.01, 1.0, 100.0)]
    assert max(vals) - min(vals) < 1e-9


def test_fixed_point_error_carries_diagnostics():
    err = FixedPointError("no luck", last=0.5, residual=1e-3)
    assert err.last == 0.5
    assert err.residual == 1e-3
    assert "0.5" in str(err)


def test_fixed_point_rejects_bad_tolerance():
    with pytest.raises(ValueError):
        fixed_point_q(MfParams(0.5, 1e-3), tol=0.0)


# ---------------------------------------------------------------------------
# depth scales
# ---------------------------------------------------------------------------

def test_correlation_depth_scale_grows_with_mean_variance():
    xis = [depth_scales(MfParams(sm2, 1e-3)).xi_c for sm2 in (0.2, 0.5, 0.99)]
    assert xis[0] < xis[1] < xis[2]
    assert all(math.isfinite(x) for x in xis)


def test_zero_mean_variance_gives_minimal_correlation_scale():
    ds = depth_scales(MfParams(0.0, 1e-3))
    assert ds.xi_c == 0.0  # chi = 0: correlations forgotten immediately
    assert ds.chi_cstar == 0.0


def test_near_critical_point_classified_stable_at_unit_correlation():
    # damped iteration alone cannot settle this corner; the bisection
    # fallback and the boundary classification have to take over
    ds = depth_scales(MfParams(0.9999, 1e-5))
    assert ds.c_star == 1.0
    assert ds.chi_cstar < 1.0
    assert ds.xi_c > 100.0 and math.isfinite(ds.xi_c)


def test_ordered_phase_fixed_point_is_unit_correlation():
    for sm2 in (0.2, 0.5, 0.95):
        p = MfParams(sm2, 1e-3)
        q_star = fixed_point_q(p)
        assert find_c_star(q_star, p) == 1.0


def test_variance_depth_scale_matches_iteration_decay():
    p = MfParams(0.5, 1e-3)
    ds = depth_scales(p)
    q_star = fixed_point_q(p)
    q, devs = 2.0, []
    for _ in range(120):
        q = variance_map(q, p)
        devs.append(abs(q - q_star))
    devs = np.array(devs)
    mask = (devs > 1e-12) & (devs < 1e-2 * q_star)
    slope = np.polyfit(np.arange(1, 121)[mask], np.log(devs[mask]), 1)[0]
    assert -1.0 / slope == pytest.approx(ds.xi_q, rel=0.05)


def test_infinite_scale_reported_at_criticality():
    from bnmf.theory import _scale_from_multiplier
    assert _scale_from_multiplier(1.0) == math.inf
    assert _scale_from_multiplier(1.0 - 1e-13) == math.inf
    assert _scale_from_multiplier(0.0) == 0.0


# ---------------------------------------------------------------------------
# trace iteration
# ---------------------------------------------------------------------------

def test_iterate_depth_zero_echoes_inputs():
    trace = iterate_theory(MfParams(0.5, 1e-3), 2.0, 1.0, 0.3, 0)
    assert trace.depth == 0
    assert trace.q_aa[0] == 2.0 and trace.q_bb[0] == 1.0 and trace.c_ab[0] == 0.3


def test_iterate_preserves_unit_correlation_every_layer():
    trace = iterate_theory(MfParams(0.5, 1e-3), 2.0, 2.0, 1.0, 12)
    assert np.all(np.abs(trace.c_ab - 1.0) < 1e-12)


def test_iterate_variance_converges_within_expected_depth():
    # deviation from q* should shrink like exp(-depth / xi_q)
    p = MfParams(0.2, 1e-3)
    ds = depth_scales(p)
    q_star = fixed_point_q(p)
    depth = max(4, int(math.ceil(6 * ds.xi_q)))
    trace = iterate_theory(p, 2.0, 2.0, 0.5, depth)
    initial = abs(2.0 - q_star)
    assert abs(trace.q_aa[-1] - q_star) < 3.0 * initial * math.exp(-depth / ds.xi_q)


def test_iterate_rejects_invalid_inputs():
    p = MfParams(0.5, 1e-3)
    with pytest.raises(ValueError):
        iterate_theory(p, -1.0, 1.0, 0.5, 3)
    with pytest.raises(ValueError):
        iterate_theory(p, 1.0, 1.0, 1.5, 3)


def test_first_layer_moments_preserve_degenerate_correlations():
    p = MfParams(0.5, 1e-3)
    _, _, c1 = first_layer_moments(1.0, 1.0, 1.0, p)
    assert c1 == pytest.approx(1.0, abs=1e-15)
    p0 = MfParams(0.0, 0.1)
    _, _, c1 = first_layer_moments(1.0, 1.0, 0.2, p0)
    assert c1 == pytest.approx(1.0, abs=1e-15)  # pure bias: fully correlated


# ---------------------------------------------------------------------------
# continuous baseline
# ---------------------------------------------------------------------------

def test_continuous_variance_pure_bias():
    assert continuous_variance_map(3.0, 0.0, 0.4) == pytest.approx(0.4, abs=1e-15)


def test_continuous_unit_correlation_fixed_point():
    q_star = continuous_fixed_point_q(1.5, 0.1)
    assert continuous_correlation_map(1.0, q_star, 1.5, 0.1) == pytest.approx(1.0, abs=1e-10)


def test_continuous_chi_linearises_to_weight_variance():
    # at sigma_b2 = 0 and subcritical sigma_w2 the fixed point is q* = 0
    # and tanh'(0) = 1, so chi = sigma_w2 exactly
    q_star = continuous_fixed_point_q(0.8, 0.0, q0=0.5)
    assert q_star == pytest.approx(0.0, abs=1e-9)
    assert continuous_chi(1.0, 0.0, 0.8, 0.0) == pytest.approx(0.8, abs=1e-12)


def test_continuous_ordered_chaotic_boundary():
    # classic boundary: at sigma_b2 = 0, q* stays 0 and chi = sigma_w2,
    # so sigma_w2 = 1 is critical: below ordered, above chaotic
    assert continuous_chi(1.0, 0.0, 0.99, 0.0) < 1.0
    q_star = continuous_fixed_point_q(1.3, 0.0, q0=1.0)
    assert q_star > 0.0
    assert continuous_chi(1.0, q_star, 1.3, 0.0) > 1.0


# ---------------------------------------------------------------------------
# quadrature consistency across the maps
# ---------------------------------------------------------------------------

def test_doubling_default_nodes_changes_nothing():
    base = default_rule()
    double = gauss_hermite_rule(2 * base.n_nodes)
    for sm2, sb2 in ((0.2, 1e-3), (0.5, 1e-3), (0.99, 1e-1)):
        p = MfParams(sm2, sb2)
        q_star = fixed_point_q(p, base)
        for q in (0.01, q_star, 5.0, 120.0):
            assert abs(variance_map(q, p, base) - variance_map(q, p, double)) < 1e-8
        for c in (-0.7, 0.0, 0.5, 1.0):
            assert abs(correlation_map(c, q_star, p, base)
                       - correlation_map(c, q_star, p, double)) < 1e-8
            assert abs(chi(c, q_star, p, base) - chi(c, q_star, p, double)) < 1e-8


def test_sabotaged_coarse_rule_is_detected_by_consistency_check():
    # injecting an n=2 rule must fail the doubling check loudly
    coarse = gauss_hermite_rule(2)
    double = gauss_hermite_rule(4)
    p = MfParams(0.5, 1e-3)
    diff = abs(variance_map(1.0, p, coarse) - variance_map(1.0, p, double))
    assert diff > 1e-8
