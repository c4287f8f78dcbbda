"""Closed-form consistency analytics for weighted-block Nakamoto consensus.

Everything here is a pure function of the model parameters: pattern
statistics, the three-state semi-Markov model of honest convergence, the
consensus weight rate alpha, the tolerance ratio and its optimisers,
parameter bounds, liveness rates, attack bounds and consistency thresholds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import BoundaryMaximizerError, DegenerateParameterError, DomainError, NoRootError
from .params import DerivedRates, ProtocolParams, derive_rates, pow1m

SIGMA1, SIGMA2, SIGMA3, SIGMA4 = 1, 2, 3, 4
STATE_AGREE, STATE_REGULAR_FORK, STATE_IRON_FORK = 0, 1, 2


def truncated_geometric_mean(x: float, n: float) -> float:
    """``E[Z | Z <= n]`` for Z geometric on {1, 2, ...} with success prob ``x``.

    Equals ``1/x - n (1-x)^n / (1 - (1-x)^n)``; a series is used when
    ``x * n`` is so small that the closed form cancels catastrophically.
    """
    if x <= 0.0:
        return (n + 1.0) / 2.0
    if x * n < 1e-7:
        return (n + 1.0) / 2.0 * (1.0 - x * (n - 1.0) / 6.0)
    tail = pow1m(x, n)
    head = -math.expm1(n * math.log1p(-x)) if x < 1.0 else 1.0
    return 1.0 / x - n * tail / head


@dataclass(frozen=True)
class PatternStats:
    """Per-slot occurrence probability and expected length of sigma1..sigma4."""

    prob: tuple[float, float, float, float]
    exp_len: tuple[float, float, float, float]


def pattern_stats(rates: DerivedRates, delta: int) -> PatternStats:
    p_h, q_h, q_H = rates.p_h, rates.q_h, rates.q_H
    b = pow1m(p_h, delta)
    a = pow1m(q_H, delta)
    prob = (q_h * (1.0 - b), q_h * b, q_H * (1.0 - a), q_H * a)
    long_len = (1.0 / p_h + delta) if p_h > 0 else math.inf
    exp_len = (
        truncated_geometric_mean(p_h, delta),
        long_len,
        truncated_geometric_mean(q_H, delta),
        long_len,
    )
    return PatternStats(prob, exp_len)


@dataclass(frozen=True, eq=False)
class SemiMarkovModel:
    """Embedded chain over S0 (agreement), S1 (regular fork), S2 (iron fork).

    ``P`` is the embedded transition matrix, ``l`` the expected edge lengths
    in slots, ``mu`` the mean sojourn per state and ``alpha`` the long-run
    consensus weight rate per slot.
    """

    P: np.ndarray
    pi: np.ndarray
    l: np.ndarray
    mu: np.ndarray
    alpha: float
    stats: PatternStats


def embedded_chain(rates: DerivedRates, delta: int) -> SemiMarkovModel:
    p_h, q_h, q_H, theta = rates.p_h, rates.q_h, rates.q_H, rates.theta
    if p_h <= 0.0:
        raise DegenerateParameterError("no honest blocks (p_h = 0): the chain is undefined")
    st = pattern_stats(rates, delta)
    P1, P2, P3, P4 = st.prob
    E1, E2, E3, E4 = st.exp_len
    conv = P2 + P4
    if conv <= 0.0:
        raise DegenerateParameterError("convergence patterns have zero probability")
    s1, s2, s3, s4 = (x / p_h for x in st.prob)
    a = pow1m(q_H, delta)
    b = pow1m(p_h, delta)

    P = np.array(
        [
            [s2 + s4, s1, s3],
            [s2 + s4, s1, s3],
            [a, 0.0, 1.0 - a],
        ]
    )
    l_conv = (P2 * E2 + P4 * E4) / conv
    l = np.array(
        [
            [l_conv, E1, E3],
            [l_conv, E1, E3],
            [E4, 0.0, E3],
        ]
    )
    z = q_H + q_h * a
    pi = np.array(
        [
            (q_H * a + q_h * a * b) / z,
            q_h * a * (1.0 - b) / z,
            q_H * (1.0 - a) / z,
        ]
    )
    mu = (P * l).sum(axis=1)
    mean_sojourn = float(pi @ mu)
    inflow0 = float(pi @ P[:, 0])
    # sigma2 convergences only count on S0 visits not entered from S2
    not_from_iron = 1.0 - pi[2] * P[2, 0] / inflow0
    alpha = (
        pi[0] * P[0, 0] * P2 / (conv * mean_sojourn) * not_from_iron
        + theta * (pi[0] * P[0, 0] + pi[1] * P[1, 0]) * P4 / (conv * mean_sojourn)
    )
    return SemiMarkovModel(P=P, pi=pi, l=l, mu=mu, alpha=float(alpha), stats=st)


def consensus_rate_alpha(params: ProtocolParams) -> float:
    return embedded_chain(derive_rates(params), params.delta).alpha


def adversary_weight_rate(rates: DerivedRates) -> float:
    """Expected adversarial weight per slot, ``p_a * (1 - q + q*theta)``."""
    return rates.p_a * rates.w_bar


def _tolerance_exact(p_h: float, delta: int, q: float, theta: float) -> float:
    a = pow1m(q * p_h, delta)
    b = pow1m(p_h, delta)
    bracket = b * b * (q - 1.0) ** 2 + b * q * (1.0 - q) * a + theta * q * a
    return a / ((theta - 1.0) * q + 1.0) * bracket


def tolerance_ratio_exact(params: ProtocolParams) -> float:
    """Largest ``p_a / p_h`` compatible with consistency, in closed form."""
    return _tolerance_exact(params.p_h, params.delta, params.q, params.theta)


def tolerance_ratio_from_alpha(params: ProtocolParams) -> float:
    rates = derive_rates(params)
    return embedded_chain(rates, params.delta).alpha / (rates.p_h * rates.w_bar)


def tolerance_ratio_approx(params: ProtocolParams) -> float:
    """Lower bound that drops the terms which vanish for large theta."""
    q, theta = params.q, params.theta
    if not (theta > 1.0 and q > 0.0):
        raise DomainError("the approximation needs theta > 1 and q > 0")
    return theta * q * pow1m(q * params.p_h, 2 * params.delta) / ((theta - 1.0) * q + 1.0)


def optimal_q_closed(theta: float, p_h: float, delta: int) -> float:
    """Maximiser of the approximate tolerance ratio.

    Root in (0, 1) of ``2*delta*p_h*(theta-1) q^2 + (2*delta+1) p_h q - 1``,
    written as ``2 / (b + sqrt(b^2 + 4a))`` to avoid cancellation.
    """
    if not theta > 1.0:
        raise DomainError(f"theta must exceed 1, got {theta!r}")
    quad = 2.0 * delta * p_h * (theta - 1.0)
    lin = (2.0 * delta + 1.0) * p_h
    q = 2.0 / (lin + math.sqrt(lin * lin + 4.0 * quad))
    return min(q, 1.0)


def optimal_q_quadratic_residual(q: float, theta: float, p_h: float, delta: int) -> float:
    return 2.0 * delta * p_h * (theta - 1.0) * q * q + (2.0 * delta + 1.0) * p_h * q - 1.0


_Q_GRID = np.concatenate([np.logspace(-9, -0.3, 160), np.linspace(0.51, 0.999, 40)])


def _golden_max(f: Callable[[float], float], lo: float, hi: float, tol: float) -> float:
    inv = (math.sqrt(5.0) - 1.0) / 2.0
    x1 = hi - inv * (hi - lo)
    x2 = lo + inv * (hi - lo)
    f1, f2 = f(x1), f(x2)
    while hi - lo > tol:
        if f1 < f2:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + inv * (hi - lo)
            f2 = f(x2)
        else:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - inv * (hi - lo)
            f1 = f(x1)
    return (lo + hi) / 2.0


def optimal_q_numeric(p_h: float, delta: int, theta: float, tol: float = 1e-10) -> float:
    """Maximiser of the exact tolerance ratio over q in (0, 1).

    A 200-point grid (log-spaced for small q) locates the peak, then golden
    section refines it inside the neighbouring grid cells.
    """

    def f(q: float) -> float:
        return _tolerance_exact(p_h, delta, q, theta)

    values = [f(q) for q in _Q_GRID]
    k = int(np.argmax(values))
    lo = float(_Q_GRID[k - 1]) if k > 0 else 0.0
    hi = float(_Q_GRID[k + 1]) if k + 1 < len(_Q_GRID) else 1.0
    q = _golden_max(f, lo, hi, tol)
    if q <= 10 * tol or q >= 1.0 - 10 * tol:
        raise BoundaryMaximizerError(f"tolerance ratio maximised at the boundary q={q:.3g}")
    return q


def _sigma4_scale(p_h: float, delta: int, q: float) -> float:
    """Mean number of regular blocks inside a sigma4 window: q_h*delta/(1-q_H)."""
    q_h = (1.0 - q) * p_h
    q_H = q * p_h
    return q_h * delta / (1.0 - q_H)


def theta_lower_bound(p_h: float, delta: int, q: float, eps: float) -> float:
    """Smallest iron weight for which sigma4 beats its regular blocks w.p. >= 1 - eps."""
    if not (0.0 < eps < 1.0):
        raise DomainError(f"eps must lie in (0, 1), got {eps!r}")
    x = _sigma4_scale(p_h, delta, q)
    log_eps = math.log(eps)
    return 2.0 * x - log_eps + math.sqrt(log_eps * log_eps - 8.0 * x * log_eps)


def sigma4_regular_tail_bound(p_h: float, delta: int, q: float, theta: float) -> float:
    """Chernoff bound on P(#regular blocks in a sigma4 window >= theta)."""
    x = _sigma4_scale(p_h, delta, q)
    if x <= 0.0:
        return 0.0
    d = theta / x - 1.0
    if d <= 0.0:
        return 1.0
    return math.exp(-x * d * d / (2.0 + d))


def improvement_ratio(params: ProtocolParams) -> float:
    """Tolerance ratio relative to the unweighted (q = 0) protocol."""
    r = derive_rates(params)
    theta, delta = params.theta, params.delta
    b = pow1m(r.p_h, delta)
    a = pow1m(r.q_H, delta)
    num = a * (r.q_h * r.q_h * b * b + r.q_h * r.q_H * b * a + theta * r.p_h * r.q_H * a)
    return num / (r.p_h * (r.q_h + theta * r.q_H) * b * b)


def chain_growth_rate(params: ProtocolParams) -> float:
    r = derive_rates(params)
    return r.p_h * r.w_bar / (1.0 + r.p_h * params.delta)


def chain_quality_bound(params: ProtocolParams, slack: float = 0.0) -> float:
    """Minimum honest weight fraction ``1 - (1+slack)(p_a/p_h + p_a*delta)``."""
    r = derive_rates(params)
    return 1.0 - (1.0 + slack) * (r.p_a / r.p_h + r.p_a * params.delta)


def gamma_margin(params: ProtocolParams) -> float:
    """Relative excess of honest growth over adversarial weight rate; inf if p_a = 0."""
    beta = adversary_weight_rate(derive_rates(params))
    if beta == 0.0:
        return math.inf
    return chain_growth_rate(params) / beta - 1.0


def min_attack_duration(rates: DerivedRates, gamma: float, theta: float) -> float:
    """Wald lower bound on the expected length of an attack attempt, in slots."""
    drift = gamma * (rates.q_a + theta * rates.q_A)
    if drift <= 0.0:
        return math.inf
    return theta / drift


def attack_tail_bound(rates: DerivedRates, gamma: float, theta: float, slots: float) -> float:
    """Bound on the success probability of an attack that has run ``slots`` slots."""
    need = min_attack_duration(rates, gamma, theta)
    if not slots > need:
        raise DomainError(f"bound holds only for S > {need:.6g}, got {slots!r}")
    drift = gamma * (rates.q_a + theta * rates.q_A)
    gap = theta - slots * drift
    return math.exp(-2.0 * gap * gap / (slots * theta * theta))


@dataclass(frozen=True)
class ThresholdQuery:
    """Normalised blocktime ``c`` (so that p = 1/(c*delta)) plus protocol knobs."""

    c: float
    delta: int
    q: float
    theta: float

    def __post_init__(self):
        if not self.c > 0:
            raise DomainError(f"c must be positive, got {self.c!r}")


def _bisect(f: Callable[[float], float], lo: float, hi: float, tol: float) -> float:
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if (flo < 0) == (fhi < 0):
        raise NoRootError(f"no sign change on [{lo}, {hi}]")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if (fm < 0) == (flo < 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def consistency_threshold_ironclad(query: ThresholdQuery, tol: float = 1e-9) -> float:
    """Adversarial share at which ``rho/(1-rho)`` meets the tolerance ratio.

    Above the returned share the adversary's weight rate exceeds the
    consensus rate and consistency can be broken.
    """
    delta = query.delta
    p = 1.0 / (query.c * delta)
    if not p < 1.0:
        raise DomainError("c * delta must exceed 1 so that p < 1")

    def gap(rho: float) -> float:
        return rho / (1.0 - rho) - _tolerance_exact((1.0 - rho) * p, delta, query.q, query.theta)

    lo, hi = 1e-12, 1.0 - 1e-9
    probe = np.linspace(lo, hi, 64)
    values = [gap(r) for r in probe]
    if any(v2 <= v1 for v1, v2 in zip(values, values[1:])):
        raise NoRootError("gap is not increasing in rho; refusing to bisect")
    return _bisect(gap, lo, hi, tol)


def nakamoto_threshold(c: float, delta: int | None = None) -> float:
    """Adversarial share solving ``1/p_h + delta = 1/p_a`` at p = 1/(c*delta).

    Only ``p*delta = 1/c`` matters; ``delta`` is accepted for symmetry.
    """
    if not c > 0:
        raise DomainError(f"c must be positive, got {c!r}")
    x = 1.0 / c
    return 2.0 / ((2.0 + x) + math.sqrt(4.0 + x * x))


def nakamoto_rate_limit(rho: float) -> float:
    """Largest ``p*delta`` at which the unweighted protocol tolerates ``rho``."""
    if not (0.0 < rho < 0.5):
        raise DomainError(f"rho must lie in (0, 0.5), got {rho!r}")
    return 1.0 / rho - 1.0 / (1.0 - rho)


def tabulate_tolerance(p_h: float, delta: int, theta: float, qs: Sequence[float]) -> list[dict]:
    """Rows ``(q, A, A_tilde)`` for plotting the tolerance ratio against q."""
    rows = []
    for q in qs:
        a_tilde = theta * q * pow1m(q * p_h, 2 * delta) / ((theta - 1.0) * q + 1.0) if q > 0 else 0.0
        rows.append({"q": q, "A": _tolerance_exact(p_h, delta, q, theta), "A_tilde": a_tilde})
    return rows


def tabulate_thresholds(cs: Sequence[float], delta: int, q: float, theta: float) -> list[dict]:
    """Rows ``(c, rho_ironclad, rho_nakamoto)``; unsolvable points carry NaN."""
    rows = []
    for c in cs:
        try:
            rho_i = consistency_threshold_ironclad(ThresholdQuery(c, delta, q, theta))
        except (NoRootError, DomainError):
            rho_i = math.nan
        rows.append({"c": c, "rho_ironclad": rho_i, "rho_nakamoto": nakamoto_threshold(c, delta)})
    return rows
