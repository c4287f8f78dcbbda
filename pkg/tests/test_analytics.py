import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ironclad import analytics as an
from ironclad.errors import DegenerateParameterError, DomainError, NoRootError
from ironclad.params import ProtocolParams, derive_rates, pow1m

DESK = ProtocolParams(p=0.5, rho=0.0, delta=1, q=0.5, theta=2.0)


def stationary(P):
    """Stationary vector by solving (P^T - I) pi = 0 with sum(pi) = 1."""
    n = P.shape[0]
    A = np.vstack([P.T - np.eye(n), np.ones(n)])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    return np.linalg.lstsq(A, b, rcond=None)[0]


def test_desk_example_exact_values():
    m = an.embedded_chain(derive_rates(DESK), DESK.delta)
    assert m.pi == pytest.approx([9 / 14, 3 / 14, 2 / 14], abs=1e-15)
    assert m.alpha == pytest.approx(87 / 256, rel=1e-15)
    assert an.tolerance_ratio_exact(DESK) == pytest.approx(0.453125, rel=1e-15)
    assert an.improvement_ratio(DESK) == pytest.approx(1.8125, rel=1e-15)
    assert m.mu == pytest.approx([2.25, 2.25, 2.5])


def test_desk_pattern_stats_by_hand():
    # p_h = 0.5, q_h = q_H = 0.25, delta = 1
    s = an.pattern_stats(derive_rates(DESK), 1)
    assert s.prob == pytest.approx((0.125, 0.125, 0.0625, 0.1875))
    assert s.exp_len == pytest.approx((1.0, 3.0, 1.0, 3.0))


@settings(max_examples=150, deadline=None)
@given(
    rate=st.floats(1e-4, 30.0),
    delta=st.integers(1, 10_000),
    q=st.floats(0.001, 0.999),
    theta=st.floats(1.0, 1000.0),
)
def test_chain_identities(rate, delta, q, theta):
    # rate = p_h * delta; far beyond ~300 the convergence probabilities underflow
    p_h = min(rate / delta, 0.9)
    params = ProtocolParams(p=p_h, rho=0.0, delta=delta, q=q, theta=theta)
    r = derive_rates(params)
    s = an.pattern_stats(r, delta)
    assert sum(s.prob) == pytest.approx(p_h, rel=1e-12)
    assert s.exp_len[1] == s.exp_len[3] == pytest.approx(1 / p_h + delta)
    assert all(0.0 <= x <= 1.0 for x in s.prob)
    assert all(x >= 1.0 - 1e-9 for x in s.exp_len)
    m = an.embedded_chain(r, delta)
    assert np.abs(m.P.sum(axis=1) - 1).max() < 1e-12
    assert np.abs(m.pi @ m.P - m.pi).max() < 1e-12
    assert m.P[2, 1] == 0.0 and m.l[2, 1] == 0.0
    assert m.alpha > 0.0


@pytest.mark.parametrize("x,n", [(0.3, 5), (0.01, 40), (1e-9, 1000), (0.9, 3), (1e-12, 10**6)])
def test_truncated_geometric_mean_by_summation(x, n):
    k = np.arange(1, n + 1, dtype=float)
    w = x * (1 - x) ** (k - 1)
    assert an.truncated_geometric_mean(x, n) == pytest.approx((k * w).sum() / w.sum(), rel=1e-9)


def test_truncated_geometric_mean_at_huge_delta():
    # ~(1 - e^-1 - e^-1)/(p(1 - e^-1)) at x*n = 1
    got = an.truncated_geometric_mean(1e-13, 10**13)
    want = (1 / 1e-13) * (1 - 2 * math.exp(-1)) / (1 - math.exp(-1))
    assert got == pytest.approx(want, rel=1e-6)


def test_stationary_vector_matches_linear_solve():
    rng = np.random.default_rng(0)
    for _ in range(50):
        params = ProtocolParams(p=10 ** rng.uniform(-5, -0.3), rho=0.0, delta=int(rng.integers(1, 2000)), q=rng.uniform(0.01, 0.99), theta=2.0)
        m = an.embedded_chain(derive_rates(params), params.delta)
        assert m.pi == pytest.approx(stationary(m.P), abs=1e-12)


def test_alpha_q_zero_is_nakamoto():
    for p_h, delta in [(0.1, 3), (1e-13, 10**13), (0.5, 1)]:
        params = ProtocolParams(p=p_h, rho=0.0, delta=delta, q=0.0, theta=500.0)
        assert an.consensus_rate_alpha(params) == pytest.approx(p_h * pow1m(p_h, 2 * delta), rel=1e-12)


def test_tolerance_ratio_q_one_is_nakamoto():
    base = ProtocolParams(p=0.05, rho=0.0, delta=7, q=0.0, theta=40.0)
    assert an.tolerance_ratio_exact(base.replace(q=1.0)) == pytest.approx(an.tolerance_ratio_exact(base), rel=1e-12)
    assert an.tolerance_ratio_from_alpha(base.replace(q=1.0)) == pytest.approx(an.tolerance_ratio_exact(base), rel=1e-12)


def test_alpha_matches_tolerance_expression():
    rng = np.random.default_rng(1)
    for _ in range(200):
        delta = int(rng.integers(1, 10_000))
        p = min(10 ** rng.uniform(-3, 1.3) / delta, 0.9)
        params = ProtocolParams(p=p, rho=0.0, delta=delta, q=rng.uniform(0.0, 1.0), theta=rng.uniform(1, 1000))
        r = derive_rates(params)
        assert an.consensus_rate_alpha(params) == pytest.approx(r.p_h * r.w_bar * an.tolerance_ratio_exact(params), rel=1e-9)


def test_degenerate_chain_raises():
    r = derive_rates(ProtocolParams(p=0.5, rho=0.0, delta=1, q=0.5, theta=2.0))
    with pytest.raises(DegenerateParameterError):
        an.embedded_chain(r.__class__(**{**r.__dict__, "p_h": 0.0, "q_h": 0.0, "q_H": 0.0}), 1)


def test_approximation_is_a_lower_bound_for_large_theta():
    params = ProtocolParams(p=1e-13, rho=0.0, delta=10**13, q=0.03, theta=500.0)
    assert an.tolerance_ratio_approx(params) <= an.tolerance_ratio_exact(params)
    with pytest.raises(DomainError):
        an.tolerance_ratio_approx(params.replace(theta=1.0))
    with pytest.raises(DomainError):
        an.tolerance_ratio_approx(params.replace(q=0.0))


def test_tolerance_ratio_unimodal_in_q():
    qs = np.unique(np.concatenate([np.logspace(-6, -1, 300), np.linspace(0.1, 0.999, 300)]))
    vals = np.array([an._tolerance_exact(1e-13, 10**13, q, 500.0) for q in qs])
    k = int(np.argmax(vals))
    assert 0 < k < len(qs) - 1
    assert np.all(np.diff(vals[: k + 1]) > 0)
    assert np.all(np.diff(vals[k:]) < 0)


def test_optimal_q_closed_properties():
    thetas = [100, 200, 500, 1000, 2000, 5000]
    qs = [an.optimal_q_closed(t, 1e-13, 10**13) for t in thetas]
    assert all(a > b for a, b in zip(qs, qs[1:]))
    for t, q in zip(thetas, qs):
        assert abs(an.optimal_q_quadratic_residual(q, t, 1e-13, 10**13)) < 1e-10
    with pytest.raises(DomainError):
        an.optimal_q_closed(1.0, 1e-13, 10**13)


def test_optimal_q_numeric_is_a_maximum():
    q = an.optimal_q_numeric(1e-13, 10**13, 500.0)
    assert q == pytest.approx(0.028309, abs=2e-6)
    f = lambda x: an._tolerance_exact(1e-13, 10**13, x, 500.0)
    assert f(q) >= f(q * 1.01) and f(q) >= f(q * 0.99)


def test_theta_lower_bound_reference_value():
    assert an.theta_lower_bound(1e-13, 10**13, 1e-12, 1e-10) == pytest.approx(51.8, abs=0.1)
    with pytest.raises(DomainError):
        an.theta_lower_bound(1e-13, 10**13, 0.01, 0.0)


def test_theta_lower_bound_controls_the_chernoff_tail():
    th = an.theta_lower_bound(1e-13, 10**13, 0.02, 1e-6)
    assert an.sigma4_regular_tail_bound(1e-13, 10**13, 0.02, th) <= 1e-6


def test_improvement_ratio_is_relative_tolerance():
    for theta in (10.0, 100.0, 500.0):
        params = ProtocolParams(p=1e-13, rho=0.0, delta=10**13, q=0.03, theta=theta)
        ratio = an.tolerance_ratio_exact(params) / an.tolerance_ratio_exact(params.replace(q=0.0))
        assert an.improvement_ratio(params) == pytest.approx(ratio, rel=1e-12)


def test_liveness_rates():
    params = ProtocolParams(p=0.1, rho=0.25, delta=4, q=0.0, theta=1.0)
    assert an.chain_growth_rate(params) == pytest.approx(0.075 / 1.3)
    assert an.chain_quality_bound(params, 0.0) == pytest.approx(1 - (0.025 / 0.075 + 0.025 * 4))
    assert an.chain_quality_bound(params, 0.1) < an.chain_quality_bound(params, 0.0)
    assert an.gamma_margin(params.replace(rho=0.0)) == math.inf
    g = an.gamma_margin(params)
    assert an.chain_growth_rate(params) == pytest.approx((1 + g) * an.adversary_weight_rate(derive_rates(params)))


def test_attack_bounds():
    r = derive_rates(ProtocolParams(p=0.1, rho=0.3, delta=4, q=0.1, theta=10.0))
    need = an.min_attack_duration(r, 0.5, 10.0)
    assert need == pytest.approx(10.0 / (0.5 * (r.q_a + 10.0 * r.q_A)))
    assert an.attack_tail_bound(r, 0.5, 10.0, 4 * need) < an.attack_tail_bound(r, 0.5, 10.0, 2 * need) < 1.0
    with pytest.raises(DomainError):
        an.attack_tail_bound(r, 0.5, 10.0, need)
    r0 = derive_rates(ProtocolParams(p=0.1, rho=0.0, delta=4, q=0.1, theta=10.0))
    assert an.min_attack_duration(r0, 0.5, 10.0) == math.inf


def test_nakamoto_threshold_values():
    assert an.nakamoto_threshold(1.0) == pytest.approx((3 - math.sqrt(5)) / 2, abs=1e-12)
    assert an.nakamoto_rate_limit(0.25) == pytest.approx(8 / 3)
    # consistent with each other
    rho = an.nakamoto_threshold(1 / an.nakamoto_rate_limit(0.3))
    assert rho == pytest.approx(0.3, abs=1e-12)
    assert an.nakamoto_threshold(1e9) == pytest.approx(0.5, abs=1e-6)
    with pytest.raises(DomainError):
        an.nakamoto_threshold(0.0)
    with pytest.raises(DomainError):
        an.nakamoto_rate_limit(0.5)


def test_ironclad_threshold_value_and_limits():
    rho = an.consistency_threshold_ironclad(an.ThresholdQuery(1.0, 10**13, 0.02, 500.0))
    assert rho == pytest.approx(0.4801549, abs=1e-6)
    far = an.consistency_threshold_ironclad(an.ThresholdQuery(1e6, 10**13, 0.02, 500.0))
    assert far == pytest.approx(0.5, abs=1e-3)
    with pytest.raises(DomainError):
        an.ThresholdQuery(0.0, 10, 0.1, 2.0)


def test_threshold_q_zero_solves_unweighted_balance():
    # with q = 0 the tolerance ratio is (1 - p_h)^(2 delta) ~ exp(-2 (1 - rho) / c)
    for c in (0.25, 1.0, 4.0):
        rho = an.consistency_threshold_ironclad(an.ThresholdQuery(c, 10**13, 0.0, 500.0))
        assert rho / (1 - rho) == pytest.approx(math.exp(-2 * (1 - rho) / c), rel=1e-5)


def test_convergence_underflow_is_reported():
    with pytest.raises(DegenerateParameterError):
        an.embedded_chain(derive_rates(ProtocolParams(p=0.5, rho=0.0, delta=5000, q=0.5, theta=2.0)), 5000)


def test_threshold_gap_check_refuses(monkeypatch):
    monkeypatch.setattr(an, "_tolerance_exact", lambda *a: 10.0 * math.sin(50 * a[0] * 1e13))
    with pytest.raises(NoRootError):
        an.consistency_threshold_ironclad(an.ThresholdQuery(1.0, 10**13, 0.02, 500.0))


def test_tabulations():
    rows = an.tabulate_tolerance(1e-13, 10**13, 500.0, [0.0, 0.01, 0.03])
    assert [r["q"] for r in rows] == [0.0, 0.01, 0.03]
    assert rows[0]["A_tilde"] == 0.0
    assert all(r["A_tilde"] <= r["A"] for r in rows)
    th = an.tabulate_thresholds([0.5, 1.0, 2.0], 10**13, 0.02, 500.0)
    assert all(r["rho_ironclad"] >= r["rho_nakamoto"] for r in th)


def test_alpha_exact_rational_desk():
    # same desk example evaluated with exact fractions from the pattern table
    ph, qh, qH = Fraction(1, 2), Fraction(1, 4), Fraction(1, 4)
    P1, P2, P3, P4 = qh * ph, qh * (1 - ph), qH * (1 - (1 - qH)), qH * (1 - qH)
    a, b = 1 - qH, 1 - ph
    A = a / (1 * Fraction(1, 2) + 1) * (b * b * Fraction(1, 4) + b * Fraction(1, 4) * a + 2 * Fraction(1, 2) * a)
    assert A == Fraction(29, 64)
    assert float(ph * Fraction(3, 2) * A) == pytest.approx(87 / 256)
    assert float(P1 + P2 + P3 + P4) == 0.5


def test_unit_iron_weight_keeps_the_iron_pattern_structure():
    # with theta = 1 the weights collapse, but the pattern model still treats
    # an iron block as closing a convergence window, so alpha does not reduce
    # to the q = 0 value for interior q; it does at q = 1 where the string has
    # only one block type again
    for params in (DESK, ProtocolParams(p=0.5e-13, rho=0.25, delta=10**13, q=0.1, theta=1.0)):
        params = params.replace(theta=1.0)
        base = an.consensus_rate_alpha(params.replace(q=0.0))
        assert an.consensus_rate_alpha(params) > base
        assert an.consensus_rate_alpha(params.replace(q=1.0)) == pytest.approx(base, rel=1e-12)
    # exact value from the tolerance expression with theta = 1 at the desk point
    a, b, q = Fraction(3, 4), Fraction(1, 2), Fraction(1, 2)
    alpha = Fraction(1, 2) * a * (b * b * (q - 1) ** 2 + b * q * (1 - q) * a + q * a)
    assert alpha == Fraction(51, 256)
    assert an.consensus_rate_alpha(DESK.replace(theta=1.0)) == pytest.approx(float(alpha), rel=1e-14)
