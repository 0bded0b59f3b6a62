import dataclasses
import math

import numpy as np
import pytest
from scipy import linalg

from fbf_tools.core.errors import CapabilityError, ParameterError, StateError
from fbf_tools.core.operators import AffineOperator, BoxIndicator, QuadraticFunction, ZeroFunction
from fbf_tools.core.oracles import EpsilonSchedule, RngStream, StepSchedule, StochasticOracle
from fbf_tools.core.saddle import (
    NORM_SAFETY,
    PdState,
    SaddleProblem,
    ergodic_averages,
    gap,
    gap_certificate,
    gap_difference,
    pd_step,
    power_iteration_norm,
    run_pd,
    step_from_margin,
)


def _trivial_problem(d_primal=2, d_dual=1):
    zero_quad = QuadraticFunction(0.0)
    return SaddleProblem.create(ZeroFunction(), ZeroFunction(), zero_quad, zero_quad,
                                np.zeros((d_dual, d_primal)))


def _toy_problem():
    """f = g* = box indicator on [-1, 1], h = l = 0, K = (1)."""
    zero_quad = QuadraticFunction(0.0)
    return SaddleProblem.create(BoxIndicator(-1.0, 1.0), BoxIndicator(-1.0, 1.0),
                                zero_quad, zero_quad, [[1.0]])


def _start(x0, v0, seed=0):
    return PdState.start(x0, v0, RngStream(seed, 0))


# ── Norm estimate ──────────────────────────────────────────────────────────

def test_power_iteration_identity():
    assert power_iteration_norm(np.eye(3)) == pytest.approx(1.0, abs=1e-9)


def test_power_iteration_diagonal():
    assert power_iteration_norm(np.diag([1.0, 5.0])) == pytest.approx(5.0, abs=1e-6)


def test_power_iteration_matches_svd():
    K = np.random.default_rng(0).standard_normal((20, 30))
    assert power_iteration_norm(K) == pytest.approx(linalg.svdvals(K)[0], abs=1e-6)


def test_power_iteration_zero_matrix():
    assert power_iteration_norm(np.zeros((3, 4))) == 0.0


def test_power_iteration_needs_ten_iterations():
    with pytest.raises(ParameterError):
        power_iteration_norm(np.eye(2), iterations=5)


def test_create_applies_safety_factor():
    problem = SaddleProblem.create(ZeroFunction(), ZeroFunction(), QuadraticFunction(1.0),
                                   QuadraticFunction(1.0), np.diag([1.0, 5.0]))
    assert problem.K_norm == pytest.approx(NORM_SAFETY * 5.0, rel=1e-9)
    assert problem.mu == 1.0


def test_declared_norm_below_estimate_is_rejected():
    with pytest.raises(ParameterError):
        SaddleProblem.create(ZeroFunction(), ZeroFunction(), QuadraticFunction(1.0),
                             QuadraticFunction(1.0), np.diag([1.0, 5.0]), K_norm=4.0)


# ── Steps ──────────────────────────────────────────────────────────────────

def test_step_with_trivial_maps_copies_inertial_points():
    problem = _trivial_problem()
    state = pd_step(_start([1.0, 2.0], [3.0]), problem, 0.5, 0.0, 0.0)
    assert np.array_equal(state.last_y, [1.0, 2.0])
    assert np.array_equal(state.last_z, [3.0])
    assert np.array_equal(state.x_cur, [1.0, 2.0])
    assert np.array_equal(state.v_cur, [3.0])
    assert state.n == 1 and state.sum_lambda == 0.5


def test_toy_bilinear_step_by_hand():
    lam = 0.4
    state = pd_step(_start([1.0], [0.0]), _toy_problem(), lam, 0.0, 0.0)
    x, v = 1.0, 0.0
    y = min(max(x - lam * v, -1.0), 1.0)
    z = min(max(v + lam * x, -1.0), 1.0)
    v_next = z + lam * (y - x)
    x_next = y - lam * (z - v)
    assert np.allclose(state.last_y, [y]) and np.allclose(state.last_z, [z])
    assert np.allclose(state.x_cur, [x_next]) and np.allclose(state.v_cur, [v_next])
    assert np.allclose(state.x_cur, [0.84]) and np.allclose(state.v_cur, [0.4])


def test_reference_saddle_is_a_fixed_point(small_bilinear):
    problem = small_bilinear.saddle
    state = _start(small_bilinear.reference, small_bilinear.reference_dual)
    state = pd_step(state, problem, 0.9 * problem.max_step(), 0.0, 0.0)
    assert np.allclose(state.x_cur, small_bilinear.reference, atol=1e-10)
    assert np.allclose(state.v_cur, small_bilinear.reference_dual, atol=1e-10)


def test_inertia_uses_primal_displacement_only():
    problem = _trivial_problem(1, 1)
    state = PdState.start([1.0], [0.0], RngStream(0), x_prev=[1.0], v_prev=[5.0])
    state = pd_step(state, problem, 0.5, 0.0, 0.7)
    # equal primal iterates select theta even though the dual moved
    assert state.last_alpha == 0.7
    assert np.allclose(state.last_z, [0.0 + 0.7 * (0.0 - 5.0)])


def test_step_bound_is_enforced(small_bilinear):
    problem = small_bilinear.saddle
    lam = problem.max_step(0.1)
    with pytest.raises(ParameterError):
        pd_step(_start(np.zeros(3), np.zeros(2)), problem, lam, 0.0, 0.0)
    pd_step(_start(np.zeros(3), np.zeros(2)), problem, lam, 0.0, 0.0, override=True)


def test_step_from_margin_is_admissible(small_bilinear):
    problem = small_bilinear.saddle
    for eps_prime in (0.01, 0.2, 0.9):
        lam, eps = step_from_margin(problem, eps_prime)
        assert lam == pytest.approx((1 - eps_prime) / (problem.mu + problem.K_norm))
        assert lam < problem.max_step(eps)
    for bad in (0.0, 1.0):
        with pytest.raises(ParameterError):
            step_from_margin(problem, bad)


# ── Ergodic averages ───────────────────────────────────────────────────────

def test_ergodic_average_of_constant_iterates():
    problem = _trivial_problem()
    state = _start([1.0, -2.0], [0.5])
    for _ in range(5):
        state = pd_step(state, problem, 0.3, 0.0, 0.0)
    y_hat, z_hat = ergodic_averages(state)
    assert np.allclose(y_hat, [1.0, -2.0]) and np.allclose(z_hat, [0.5])


def test_ergodic_average_weights_by_step():
    state = _start([0.0], [0.0])
    state = dataclasses.replace(state, n=2, sum_lambda=1.0 + 3.0,
                                sum_lambda_y=np.array([1.0 * 0.0 + 3.0 * 4.0]),
                                sum_lambda_z=np.array([0.0]))
    y_hat, _ = ergodic_averages(state)
    assert np.allclose(y_hat, [3.0])


def test_ergodic_averages_need_a_step():
    with pytest.raises(StateError):
        ergodic_averages(_start([0.0], [0.0]))


def test_ergodic_averages_stay_in_hull(small_bilinear):
    noise = {"model": "gaussian_constant", "sigma0": 0.5}
    problem = small_bilinear.saddle_problem(noise)
    lam = 0.5 * problem.max_step()
    state = _start(np.full(3, 0.9), np.full(2, -0.9), seed=3)
    ys, zs = [], []
    for k in range(200):
        state = pd_step(state, problem, lam, 0.1 / (k + 1) ** 2, 0.3)
        ys.append(state.last_y)
        zs.append(state.last_z)
    y_hat, z_hat = ergodic_averages(state)
    ys, zs = np.array(ys), np.array(zs)
    assert np.all(ys.min(axis=0) - 1e-12 <= y_hat) and np.all(y_hat <= ys.max(axis=0) + 1e-12)
    assert np.all(zs.min(axis=0) - 1e-12 <= z_hat) and np.all(z_hat <= zs.max(axis=0) + 1e-12)


# ── Gap ────────────────────────────────────────────────────────────────────

def test_gap_of_all_zero_problem():
    problem = _trivial_problem()
    assert gap(problem, [3.0, -1.0], [7.0]) == 0.0


def test_gap_extended_real_precedence():
    problem = _toy_problem()
    assert gap(problem, [2.0], [0.0]) == math.inf
    assert gap(problem, [0.0], [2.0]) == -math.inf
    assert math.isnan(gap(problem, [2.0], [2.0]))
    assert gap(problem, [0.5], [0.5]) == pytest.approx(0.25)


def test_gap_difference_is_nan_for_undefined_sides():
    problem = _toy_problem()
    assert math.isnan(gap_difference(problem, [2.0], [0.0], [0.0], [2.0]))
    assert gap_difference(problem, [0.5], [0.5], [0.0], [0.0]) == pytest.approx(0.0)


def test_saddle_ordering_at_reference(small_bilinear):
    problem = small_bilinear.saddle
    x_star, v_star = small_bilinear.reference, small_bilinear.reference_dual
    center = gap(problem, x_star, v_star)
    rng = np.random.default_rng(9)
    for _ in range(1000):
        x = rng.uniform(-1.0, 1.0, 3)
        v = rng.uniform(-1.0, 1.0, 2)
        assert center - gap(problem, x_star, v) >= -1e-9
        assert gap(problem, x, v_star) - center >= -1e-9


# ── Certificate ────────────────────────────────────────────────────────────

def test_certificate_without_noise_or_inertia(small_bilinear):
    problem = small_bilinear.saddle
    lam = 0.9 * problem.max_step()
    x0, v0 = np.full(3, 0.5), np.full(2, -0.5)
    state = _start(x0, v0)
    for _ in range(20):
        state = pd_step(state, problem, lam, 0.0, 0.0)
    x_cmp, v_cmp = small_bilinear.reference, small_bilinear.reference_dual
    cert = gap_certificate(state, (x_cmp, v_cmp))
    dist = np.sum((x0 - x_cmp) ** 2) + np.sum((v0 - v_cmp) ** 2)
    assert cert.S == 0.0 and cert.T == 1.0 and cert.C == 0.0
    assert cert.N == 19
    assert cert.bound_value == pytest.approx(dist / (2 * 20 * lam), rel=1e-12)


def test_certificate_accumulates_inertia_terms_only_with_inertia(small_bilinear):
    problem = small_bilinear.saddle
    eps = EpsilonSchedule(0.5, 2.0)
    lam = 0.5 * problem.max_step()
    state = _start(np.zeros(3), np.zeros(2))
    for k in range(3):
        state = pd_step(state, problem, lam, eps(k), 0.4)
    assert state.eps_sum == pytest.approx(eps(0) + eps(1) + eps(2))
    assert state.eps_prod == pytest.approx((1 + eps(0)) * (1 + eps(1)) * (1 + eps(2)))


def test_certificate_analytic_variance(small_bilinear):
    noise = {"model": "gaussian_decay", "sigma0": 0.2, "p": 1.0}
    problem = small_bilinear.saddle_problem(noise)
    lam = 0.5 * problem.max_step()
    state = _start(np.zeros(3), np.zeros(2))
    for _ in range(2):
        state = pd_step(state, problem, lam, 0.0, 0.0)
    # per step: lam^2 (d_p + d_d) sigma_n^2 for s, plus the same for r
    var = sum((3 + 2) * (0.2 / (n + 1)) ** 2 for n in range(2))
    cert = gap_certificate(state, (np.zeros(3), np.zeros(2)), step_eps=0.1)
    assert cert.C == pytest.approx(lam ** 2 * var * (1 + (1 + 1 / 0.1)), rel=1e-12)
    assert gap_certificate(state, (np.zeros(3), np.zeros(2)), variance=0.0).C == 0.0


def test_certificate_needs_closed_form_variance():
    zero_quad = QuadraticFunction(0.0)
    problem = SaddleProblem.create(
        BoxIndicator(), BoxIndicator(), zero_quad, zero_quad, [[1.0]],
        h_oracle=StochasticOracle.finite_sum([AffineOperator(1.0, 0.5), AffineOperator(1.0, -0.5)]),
    )
    state = pd_step(_start([0.5], [0.0]), problem, 0.1, 0.0, 0.0)
    assert not state.analytic_available
    with pytest.raises(CapabilityError):
        gap_certificate(state, ([0.0], [0.0]))
    assert gap_certificate(state, ([0.0], [0.0]), variance="empirical").C > 0.0
    with pytest.raises(CapabilityError):
        gap_certificate(state, ([0.0], [0.0]), variance="guess")


def test_certificate_needs_a_step():
    with pytest.raises(StateError):
        gap_certificate(_start([0.0], [0.0]), ([0.0], [0.0]))


# ── Runs ───────────────────────────────────────────────────────────────────

def _run(bench, horizon, **kwargs):
    problem = kwargs.pop("problem", bench.saddle)
    lam = 0.9 * problem.max_step()
    return run_pd(problem, np.full(3, 0.8), np.full(2, -0.8), StepSchedule.constant(lam),
                  EpsilonSchedule(0.0, 2.0), 0.0, horizon,
                  (bench.reference, bench.reference_dual), **kwargs)


def test_run_records_grid_and_final_step(small_bilinear):
    traj = _run(small_bilinear, 35, record_every=10)
    assert traj.N == [9, 19, 29, 34]
    assert traj.final.n == 35
    assert len(traj.gap) == len(traj.bound) == 4


def test_deterministic_gap_stays_below_certificate(small_bilinear):
    traj = _run(small_bilinear, 1000, record_every=50)
    for g, b in zip(traj.gap, traj.bound):
        assert g <= b * (1 + 1e-9)
    assert traj.bound[-1] < traj.bound[0]


def test_constant_step_bound_decays_like_one_over_n(small_bilinear):
    traj = _run(small_bilinear, 1000, record_every=100)
    by_n = dict(zip(traj.N, traj.bound))
    assert by_n[999] / by_n[99] == pytest.approx(100 / 1000, rel=1e-12)


def test_zero_noise_runs_ignore_the_seed(small_bilinear):
    a = _run(small_bilinear, 100, record_every=10, seed=1)
    b = _run(small_bilinear, 100, record_every=10, seed=2, stream_id=7)
    assert a.gap == b.gap
