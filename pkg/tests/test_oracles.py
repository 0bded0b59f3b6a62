import numpy as np
import pytest

from fbf_tools.core.errors import ParameterError
from fbf_tools.core.operators import AffineOperator
from fbf_tools.core.oracles import (
    BOUNDED_ONLY,
    DIVERGENT,
    SUMMABLE,
    EpsilonSchedule,
    RngStream,
    StepSchedule,
    StochasticOracle,
    draw_r,
    draw_s,
    inertia_coefficient,
    validate_summability,
)

DRAWS = 20_000


def _mean_of_draws(draw, oracle, point, n, rng, count=DRAWS):
    return np.mean([draw(oracle, point, n, rng) for _ in range(count)], axis=0)


# ── Draws ──────────────────────────────────────────────────────────────────

def test_zero_noise_draws_are_exact(stream):
    M = np.array([[2.0, 1.0], [-1.0, 3.0]])
    oracle = StochasticOracle.exact(AffineOperator(M, [0.5, -0.5]))
    w = np.array([1.0, -2.0])
    for n in (0, 5, 1000):
        assert np.array_equal(draw_r(oracle, w, n, stream), M @ w + [0.5, -0.5])
        assert np.array_equal(draw_s(oracle, w, n, stream), M @ w + [0.5, -0.5])


def test_gaussian_decay_schedule():
    oracle = StochasticOracle(AffineOperator(1.0), "gaussian_decay", sigma0=1.0, p=1.0)
    assert oracle.sigma(3) == pytest.approx(0.25)
    assert oracle.s_variance(3, 4) == pytest.approx(4 * 0.0625)


def test_gaussian_constant_schedule():
    oracle = StochasticOracle(AffineOperator(1.0), "gaussian_constant", sigma0=0.3, p=5.0)
    assert oracle.sigma(0) == oracle.sigma(10_000) == 0.3


def test_finite_sum_draws_are_unbiased():
    components = [AffineOperator(1.0, 1.0), AffineOperator(3.0, -1.0)]
    oracle = StochasticOracle.finite_sum(components)
    w = np.array([2.0])
    assert np.allclose(oracle.base(w), [4.0])
    mean = _mean_of_draws(draw_r, oracle, w, 0, RngStream(1, 0))
    # component values 3 and 5: per-draw std 1
    assert abs(mean[0] - 4.0) <= 4.0 / np.sqrt(DRAWS)


def test_gaussian_s_draws_are_unbiased():
    base = AffineOperator(np.diag([1.0, 2.0, 3.0]), [0.0, 1.0, -1.0])
    oracle = StochasticOracle(base, "gaussian_constant", sigma0=0.5)
    y = np.array([0.3, -0.2, 1.0])
    mean = _mean_of_draws(draw_s, oracle, y, 7, RngStream(2, 0))
    assert np.all(np.abs(mean - base(y)) <= 4.0 * 0.5 / np.sqrt(DRAWS))


def test_equal_streams_reproduce_draws():
    oracle = StochasticOracle(AffineOperator(np.eye(3)), "gaussian_decay", sigma0=1.0, p=0.5)
    y = np.ones(3)
    a, b, c = RngStream(3, 9), RngStream(3, 9), RngStream(3, 10)
    first = [draw_s(oracle, y, n, a) for n in range(5)]
    second = [draw_s(oracle, y, n, b) for n in range(5)]
    other = [draw_s(oracle, y, n, c) for n in range(5)]
    assert all(np.array_equal(u, v) for u, v in zip(first, second))
    assert not all(np.array_equal(u, v) for u, v in zip(first, other))


def test_r_and_s_use_separate_channels():
    oracle = StochasticOracle(AffineOperator(np.eye(2)), "gaussian_constant", sigma0=1.0)
    x = np.zeros(2)
    a, b = RngStream(4, 0), RngStream(4, 0)
    draw_r(oracle, x, 0, a)
    s_after_r = draw_s(oracle, x, 0, a)
    s_alone = draw_s(oracle, x, 0, b)
    assert np.array_equal(s_after_r, s_alone)
    assert a.counter == 2 and b.counter == 1


def test_bias_shifts_r_only(stream):
    oracle = StochasticOracle(AffineOperator(np.eye(4)), "gaussian_decay", sigma0=0.0,
                              bias0=2.0, bias_p=1.0)
    w = np.zeros(4)
    r = draw_r(oracle, w, 1, stream)
    assert np.allclose(r, np.full(4, 1.0 / 2.0))
    assert np.linalg.norm(r) == pytest.approx(oracle.bias(1))
    assert np.array_equal(draw_s(oracle, w, 1, stream), np.zeros(4))
    assert oracle.r_sq_error(1, 4) == pytest.approx(1.0)
    assert not oracle.is_exact


def test_negative_iteration_index_rejected(identity_oracle, stream):
    with pytest.raises(ParameterError):
        draw_r(identity_oracle, np.zeros(1), -1, stream)


def test_unknown_noise_model():
    with pytest.raises(ParameterError):
        StochasticOracle(AffineOperator(1.0), "cauchy")


def test_from_descriptor_round_trip():
    base = AffineOperator(1.0)
    desc = {"model": "gaussian_decay", "sigma0": 0.2, "p": 1.5}
    oracle = StochasticOracle.from_descriptor(desc, base)
    assert oracle.to_descriptor() == desc
    with pytest.raises(ParameterError):
        StochasticOracle.from_descriptor({"model": "finite_sum"}, base)


# ── Schedules ──────────────────────────────────────────────────────────────

def test_epsilon_schedule():
    eps = EpsilonSchedule(0.5, 2.0)
    assert eps(0) == 0.5
    assert eps(3) == pytest.approx(0.5 / 16)
    sums = eps.partial_sums(10_000)
    assert np.all(np.diff(sums) > 0)
    assert sums[-1] <= eps.sum_bound
    with pytest.raises(ParameterError):
        EpsilonSchedule(1.0, 1.0)


def test_polynomial_step_law():
    steps = StepSchedule.polynomial(a=2.0, alpha=0.75, mu=0.5)
    for n in (1, 2, 10, 12345):
        expected = 4 * 2.0 / (0.5 * n ** 0.75)
        assert steps.lambda_at(n) == pytest.approx(expected, rel=1e-15)
    assert steps(0) == steps.lambda_at(1)
    with pytest.raises(ParameterError):
        steps.lambda_at(0)


def test_polynomial_step_cap_affects_prefix_only():
    steps = StepSchedule.polynomial(a=2.0, alpha=1.0, mu=1.0, cap=0.25)
    assert steps.lambda_at(1) == 0.25
    assert steps.lambda_at(100) == pytest.approx(0.08)


@pytest.mark.parametrize("kwargs", [dict(a=0.0, alpha=1.0, mu=1.0),
                                    dict(a=1.0, alpha=0.5, mu=1.0),
                                    dict(a=1.0, alpha=1.1, mu=1.0),
                                    dict(a=1.0, alpha=1.0, mu=0.0)])
def test_polynomial_step_validation(kwargs):
    with pytest.raises(ParameterError):
        StepSchedule.polynomial(**kwargs)


def test_constant_step_admissibility():
    steps = StepSchedule.default_constant(2.0)
    assert steps(0) == pytest.approx(0.45)
    steps.check_admissible(2.0)
    with pytest.raises(ParameterError):
        StepSchedule.constant(0.5).check_admissible(2.0)


def test_step_from_descriptor_defaults_to_point_nine_over_l():
    steps = StepSchedule.from_descriptor({"kind": "constant"}, lipschitz=4.0)
    assert steps.value == pytest.approx(0.225)
    poly = StepSchedule.from_descriptor({"kind": "polynomial", "a": 1.0}, 4.0, strong_mod=0.5)
    assert poly.mu == 0.5 and poly.alpha == 1.0


# ── Summability ────────────────────────────────────────────────────────────

def test_decaying_noise_is_summable_for_constant_steps():
    oracle = StochasticOracle(AffineOperator(1.0), "gaussian_decay", sigma0=1.0, p=1.0)
    report = validate_summability(oracle, StepSchedule.constant(0.5), 1000)
    assert report.noise_verdict == SUMMABLE
    assert report.regime == "general"
    assert report.s_variance_sum == pytest.approx(sum(1.0 / k ** 2 for k in range(1, 1001)))


def test_constant_noise_diverges_for_constant_steps():
    oracle = StochasticOracle(AffineOperator(1.0), "gaussian_decay", sigma0=1.0, p=0.0)
    report = validate_summability(oracle, StepSchedule.constant(0.5), 1000)
    assert report.noise_verdict == DIVERGENT
    assert report.regime is None


def test_constant_noise_with_square_summable_steps():
    oracle = StochasticOracle(AffineOperator(1.0), "gaussian_decay", sigma0=1.0, p=0.0)
    report = validate_summability(oracle, StepSchedule.polynomial(1.0, 1.0, 1.0), 1000)
    assert report.weighted_verdict == SUMMABLE
    assert report.steps_l2_not_l1
    assert report.regime == "strongly_monotone"


def test_square_summable_steps_need_strong_monotonicity():
    oracle = StochasticOracle(AffineOperator(np.array([[0.0, 1.0], [-1.0, 0.0]])),
                              "gaussian_constant", sigma0=1.0)
    report = validate_summability(oracle, StepSchedule.polynomial(1.0, 1.0, 1.0), 100, dim=2)
    assert report.weighted_verdict == SUMMABLE
    assert report.regime is None


def test_finite_sum_has_no_closed_form_sums():
    oracle = StochasticOracle.finite_sum([AffineOperator(1.0), AffineOperator(3.0)])
    report = validate_summability(oracle, StepSchedule.constant(0.2), 50)
    assert report.noise_verdict == BOUNDED_ONLY
    assert report.s_variance_sum is None
    poly = validate_summability(oracle, StepSchedule.polynomial(1.0, 1.0, 2.0), 50)
    assert poly.regime == "strongly_monotone"


def test_summability_needs_horizon_of_ten(identity_oracle):
    with pytest.raises(ParameterError):
        validate_summability(identity_oracle, StepSchedule.constant(0.5), 9)


# ── Inertia ────────────────────────────────────────────────────────────────

def test_inertia_equal_iterates_gives_theta():
    x = np.array([1.0, 2.0])
    assert inertia_coefficient(x, x.copy(), 0.0, 0.9) == 0.9


def test_inertia_min_branch():
    assert inertia_coefficient([0.5], [0.0], 0.1, 0.9) == pytest.approx(0.2)


def test_inertia_theta_branch():
    assert inertia_coefficient([0.5], [0.0], 10.0, 0.3) == 0.3


def test_inertia_bound_on_random_pairs(rng):
    for _ in range(500):
        x, y = rng.standard_normal(3), rng.standard_normal(3)
        eps_n, theta = float(rng.uniform(0, 2)), float(rng.uniform(0, 1))
        alpha = inertia_coefficient(x, y, eps_n, theta)
        assert alpha <= theta
        assert alpha * np.linalg.norm(x - y) <= eps_n * (1 + 1e-12) + 1e-14 * theta


@pytest.mark.parametrize("eps_n,theta", [(0.1, -0.1), (0.1, 1.5), (-1.0, 0.5)])
def test_inertia_parameter_checks(eps_n, theta):
    with pytest.raises(ParameterError):
        inertia_coefficient([1.0], [0.0], eps_n, theta)
