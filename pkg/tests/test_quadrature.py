import numpy as np
import pytest

from bnmf.quadrature import (
    default_rule,
    field_nodes,
    gauss_hermite_rule,
    gaussian_expect,
    gaussian_expect_pair,
)


def trapezoid_gauss_expect(f, lo=-10.0, hi=10.0, step=1e-4):
    """Independent reference: trapezoid integration of f against the Gaussian."""
    z = np.arange(lo, hi + step / 2, step)
    return float(np.trapezoid(f(z) * np.exp(-0.5 * z * z) / np.sqrt(2 * np.pi), z))


def test_rejects_fewer_than_two_nodes():
    with pytest.raises(ValueError):
        gauss_hermite_rule(1)


@pytest.mark.parametrize("n", [2, 64, 129])
def test_weights_normalised_for_gaussian_measure(n):
    rule = gauss_hermite_rule(n)
    assert abs(np.sum(rule.weights) - 1.0) < 1e-12
    assert abs(np.sum(rule.weights * rule.nodes ** 2) - 1.0) < 1e-10


def test_two_nodes_integrate_z_squared_exactly():
    rule = gauss_hermite_rule(2)
    assert rule.integrate(lambda z: z ** 2) == pytest.approx(1.0, abs=1e-14)


def test_degree_exactness_fourth_moment():
    # E[z^4] = 3 needs degree-4 exactness: n=3 suffices, n=2 must miss it
    assert gauss_hermite_rule(3).integrate(lambda z: z ** 4) == pytest.approx(3.0, abs=1e-12)
    assert gauss_hermite_rule(2).integrate(lambda z: z ** 4) != pytest.approx(3.0, abs=1e-3)


def test_tanh_squared_matches_trapezoid_oracle():
    # evaluated through gaussian_expect, which guards the resolution the
    # raw 64-node rule lacks for this integrand
    oracle = trapezoid_gauss_expect(lambda z: np.tanh(z) ** 2)
    rule = gauss_hermite_rule(64)
    got = gaussian_expect(lambda u: np.tanh(u) ** 2, 1.0, rule)
    assert got == pytest.approx(oracle, abs=1e-10)


def test_odd_integrand_vanishes():
    rule = gauss_hermite_rule(64)
    assert abs(rule.integrate(lambda z: z)) < 1e-14


def test_gaussian_expect_broad_fields_match_oracle():
    # a fixed rule cannot resolve tanh features at large q; the evaluator must
    rule = default_rule()
    for q in (0.5, 4.0, 99.0, 1e4):
        oracle = trapezoid_gauss_expect(lambda z: np.tanh(np.sqrt(q) * z) ** 2,
                                        lo=-12, hi=12)
        got = gaussian_expect(lambda u: np.tanh(u) ** 2, q, rule)
        assert got == pytest.approx(oracle, abs=5e-12), f"q={q}"


def test_gaussian_expect_zero_variance_is_point_evaluation():
    rule = default_rule()
    assert gaussian_expect(lambda u: np.cos(u), 0.0, rule) == pytest.approx(1.0, abs=1e-15)


def test_pair_expectation_factorises_at_zero_correlation():
    rule = default_rule()
    f = lambda u: np.tanh(u) ** 2
    got = gaussian_expect_pair(f, f, 1.3, 0.7, 0.0, rule)
    want = gaussian_expect(f, 1.3, rule) * gaussian_expect(f, 0.7, rule)
    assert got == pytest.approx(want, abs=1e-13)


def test_pair_expectation_collapses_at_full_correlation():
    rule = default_rule()
    got = gaussian_expect_pair(np.tanh, np.tanh, 2.0, 2.0, 1.0, rule)
    want = gaussian_expect(lambda u: np.tanh(u) ** 2, 2.0, rule)
    assert got == pytest.approx(want, abs=1e-13)
    anti = gaussian_expect_pair(np.tanh, np.tanh, 2.0, 2.0, -1.0, rule)
    assert anti == pytest.approx(-want, abs=1e-13)


def test_field_nodes_inherit_base_rule_resolution():
    # a deliberately coarse rule must stay coarse in the refined regime,
    # so consistency checks can still catch it
    coarse = gauss_hermite_rule(2)
    fine = gauss_hermite_rule(129)
    q = 50.0
    f = lambda u: np.tanh(u) ** 2
    oracle = trapezoid_gauss_expect(lambda z: f(np.sqrt(q) * z), lo=-12, hi=12)
    coarse_err = abs(gaussian_expect(f, q, coarse) - oracle)
    fine_err = abs(gaussian_expect(f, q, fine) - oracle)
    assert fine_err < 1e-11
    assert coarse_err > 1e-6


def test_field_nodes_direct_for_narrow_fields():
    rule = default_rule()
    z, w = field_nodes(0.5, rule)
    assert z is rule.nodes and w is rule.weights
