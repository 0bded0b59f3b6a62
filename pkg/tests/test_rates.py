import math

import numpy as np
import pytest

from fbf_tools.core.errors import DomainError, ParameterError
from fbf_tools.core.rates import (
    RecursionParams,
    fit_rate,
    lemma36_bound,
    phi_c,
    simulate_recursion,
    smallest_n0,
    theory_slope,
)


# ── phi_c ──────────────────────────────────────────────────────────────────

def test_phi_at_zero_is_log():
    assert phi_c(0.0, math.e) == pytest.approx(1.0, rel=1e-15)


def test_phi_at_one():
    assert phi_c(1.0, 5.0) == pytest.approx(4.0, rel=1e-15)


def test_phi_near_zero_is_continuous():
    assert abs(phi_c(1e-12, 2.0) - math.log(2.0)) <= 1e-9
    for t in np.linspace(0.1, 10.0, 25):
        for c in (-1e-8, -3e-9, 5e-10, 1e-8):
            assert abs(phi_c(c, t) - phi_c(0.0, t)) <= 1e-6


def test_phi_is_increasing_in_t():
    ts = np.linspace(0.05, 20.0, 200)
    for c in (-1.5, -0.5, 0.0, 0.3, 2.0):
        values = [phi_c(c, t) for t in ts]
        assert np.all(np.diff(values) > 0)


@pytest.mark.parametrize("t", [0.0, -1.0])
def test_phi_domain(t):
    with pytest.raises(DomainError):
        phi_c(1.0, t)


# ── Recursion parameters ───────────────────────────────────────────────────

def test_smallest_n0():
    assert smallest_n0(1.0, 1.0) == 2
    assert smallest_n0(2.0, 1.0) == 3
    assert smallest_n0(0.5, 0.75) == 2
    n0 = smallest_n0(7.3, 0.6)
    assert 7.3 * n0 ** -0.6 < 1 <= 7.3 * (n0 - 1) ** -0.6


@pytest.mark.parametrize("kwargs", [
    dict(a=0.0, b=1.0, alpha=1.0, beta=2.0),
    dict(a=1.0, b=-1.0, alpha=1.0, beta=2.0),
    dict(a=1.0, b=1.0, alpha=0.5, beta=2.0),
    dict(a=1.0, b=1.0, alpha=1.0, beta=1.0),
    dict(a=3.0, b=1.0, alpha=1.0, beta=2.0),
    dict(a=2.0, b=1.0, alpha=1.0, beta=2.0, n0=1),
])
def test_recursion_params_validation(kwargs):
    with pytest.raises(ParameterError):
        RecursionParams(**kwargs)


# ── Bound ──────────────────────────────────────────────────────────────────

def test_bound_without_perturbation():
    params = RecursionParams(a=1.5, b=0.0, alpha=1.0, beta=2.0, s_init=2.0)
    n0 = params.n0
    for n in (2 * n0, 50, 1000):
        assert lemma36_bound(params, n) == pytest.approx(2.0 * (n0 / (n + 1)) ** 1.5, rel=1e-14)


def test_bound_worked_value():
    params = RecursionParams(a=2.0, b=1.0, alpha=1.0, beta=2.0, s_init=1.0, n0=2)
    expected = (2 / 11) ** 2 + (1 / 11 ** 2) * 1.5 ** 2 * phi_c(1.0, 10)
    assert lemma36_bound(params, 10) == pytest.approx(expected, rel=1e-14)


def test_bound_below_two_n0_is_refused():
    params = RecursionParams(a=1.0, b=1.0, alpha=1.0, beta=2.0)
    with pytest.raises(DomainError):
        lemma36_bound(params, 2 * params.n0 - 1)


@pytest.mark.parametrize("alpha", [0.6, 0.75, 0.9])
def test_bound_dominates_simulation_for_fractional_alpha(alpha):
    params = RecursionParams(a=1.0, b=1.0, alpha=alpha, beta=2.0)
    seq = simulate_recursion(params, 10_000)
    for n in range(2 * params.n0, 10_000):
        assert seq[n + 1] <= lemma36_bound(params, n) * (1 + 1e-9)


def test_bound_dominates_simulation_on_grid():
    for a in (0.5, 1.0, 2.0):
        for alpha in (0.6, 0.75, 1.0):
            for beta in (1.5, 2.0, 3.0):
                if a > beta:
                    continue
                params = RecursionParams(a=a, b=1.0, alpha=alpha, beta=beta)
                seq = simulate_recursion(params, 2000)
                for n in range(2 * params.n0, 2000):
                    assert seq[n + 1] <= lemma36_bound(params, n) * (1 + 1e-9), (a, alpha, beta, n)


# ── Simulation ─────────────────────────────────────────────────────────────

def test_simulation_without_perturbation_telescopes():
    params = RecursionParams(a=1.0, b=0.0, alpha=1.0, beta=2.0, s_init=1.0)
    n0 = params.n0
    seq = simulate_recursion(params, 500)
    assert np.all(np.isnan(seq[:n0]))
    for n in range(n0, 501):
        assert seq[n] == pytest.approx((n0 - 1) / (n - 1), rel=1e-12)


def test_simulation_is_nonnegative_and_eventually_decreasing():
    params = RecursionParams(a=0.8, b=2.0, alpha=0.75, beta=1.8, s_init=5.0)
    seq = simulate_recursion(params, 5000)[params.n0:]
    assert np.all(seq >= 0)
    assert np.all(np.diff(seq[1000:]) < 0)


def test_simulation_horizon_must_reach_n0():
    params = RecursionParams(a=2.0, b=1.0, alpha=1.0, beta=2.0)
    with pytest.raises(ParameterError):
        simulate_recursion(params, params.n0 - 1)


# ── Fitting ────────────────────────────────────────────────────────────────

def test_fit_exact_power_law():
    n = np.arange(1, 1001, dtype=float)
    verdict = fit_rate(n, 5.0 / n)
    assert verdict.fitted_slope == pytest.approx(-1.0, abs=1e-6)
    assert verdict.window == (100, 1000)
    assert verdict.residual < 1e-10


def test_fit_constant_has_zero_slope():
    n = np.arange(1, 101, dtype=float)
    assert fit_rate(n, np.full(n.size, 0.3)).fitted_slope == pytest.approx(0.0, abs=1e-12)


def test_fit_reports_theory_slope():
    n = np.arange(1, 1001, dtype=float)
    verdict = fit_rate(n, n ** -1.25, (10, 1000), {"alpha": 0.75, "a": 1.0, "beta": 2.0})
    assert verdict.theory_slope == pytest.approx(-1.25)
    assert verdict.fitted_slope == pytest.approx(-1.25, abs=1e-9)
    assert verdict.points == 991


def test_theory_slope_cases():
    assert theory_slope(0.75, 1.0, 2.0) == (-1.25, False)
    assert theory_slope(1.0, 2.0, 2.0) == (-1.0, False)
    assert theory_slope(1.0, 0.5, 3.0) == (-0.5, False)
    assert theory_slope(1.0, 1.0, 2.0) == (-1.0, True)


def test_fit_on_simulated_recursion_matches_theory():
    params = RecursionParams(a=2.0, b=1.0, alpha=1.0, beta=2.0)
    seq = simulate_recursion(params, 100_000)
    n = np.arange(seq.size, dtype=float)
    verdict = fit_rate(n, seq, (1e3, 1e5))
    assert verdict.fitted_slope == pytest.approx(-(params.beta - 1.0), abs=0.1)


def test_fit_rejects_nonpositive_values():
    n = np.arange(1, 21, dtype=float)
    values = 1.0 / n
    values[-1] = 0.0
    with pytest.raises(DomainError):
        fit_rate(n, values, (1, 20))


def test_fit_rejects_short_window():
    n = np.arange(1, 101, dtype=float)
    with pytest.raises(DomainError):
        fit_rate(n, 1.0 / n, (50, 55))
    with pytest.raises(DomainError):
        fit_rate([], [])
