"""
Stochastic inertial primal-dual splitting for

    min_x h(x) + (l* box g)(Kx) + f(x)    /    min_v (h + f)*(-K'v) + g*(v) + l(v)

together with step-weighted ergodic averages, the primal-dual gap function
and the non-asymptotic gap certificate.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from .errors import CapabilityError, DivergenceError, ParameterError, StateError
from .fbf import DIVERGENCE_RADIUS, should_record
from .operators import Point, ProxFunction, SmoothFunction, as_point, check_step
from .oracles import EpsilonSchedule, RngStream, StepSchedule, StochasticOracle, _inertia, draw_r, draw_s

logger = logging.getLogger(__name__)

# Applied to power-iteration estimates of ||K|| before they are declared.
NORM_SAFETY = 1.01


def power_iteration_norm(K, iterations: int = 500, seed: int = 0) -> float:
    """Spectral norm of *K* by power iteration on ``K'K`` (no safety factor)."""
    if iterations < 10:
        raise ParameterError(f"iterations must be >= 10, got {iterations}")
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if not np.any(K):
        return 0.0
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(K.shape[1])
    v /= np.linalg.norm(v)
    sigma = 0.0
    for it in range(iterations):
        w = K.T @ (K @ v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            v = rng.standard_normal(K.shape[1])
            v /= np.linalg.norm(v)
            continue
        v = w / nw
        new = float(np.linalg.norm(K @ v))
        if abs(new - sigma) <= 1e-15 * new:
            sigma = new
            break
        sigma = new
    logger.debug(f"power iteration: ||K|| ~ {sigma:.12g} after {it + 1} iterations")
    return sigma


@dataclass(frozen=True, eq=False)
class SaddleProblem:
    """
    ``(f, g*, h, l, K)`` with stochastic gradient oracles for ``h`` and ``l``.

    ``K`` maps primal (``K.shape[1]``) to dual (``K.shape[0]``) coordinates;
    ``K_norm`` must dominate the spectral norm of ``K``.
    """

    f: ProxFunction
    g_star: ProxFunction
    h: SmoothFunction
    ell: SmoothFunction
    K: np.ndarray
    K_norm: float
    h_oracle: StochasticOracle
    ell_oracle: StochasticOracle

    def __post_init__(self):
        K = np.atleast_2d(np.asarray(self.K, dtype=float))
        object.__setattr__(self, "K", K)
        estimate = power_iteration_norm(K)
        if estimate > self.K_norm * (1 + 1e-9):
            raise ParameterError(
                f"declared ||K|| = {self.K_norm:.6g} is below the power-iteration estimate {estimate:.6g}"
            )

    @classmethod
    def create(
        cls,
        f: ProxFunction,
        g_star: ProxFunction,
        h: SmoothFunction,
        ell: SmoothFunction,
        K,
        K_norm: Optional[float] = None,
        h_oracle: Optional[StochasticOracle] = None,
        ell_oracle: Optional[StochasticOracle] = None,
    ) -> "SaddleProblem":
        K = np.atleast_2d(np.asarray(K, dtype=float))
        if K_norm is None:
            K_norm = NORM_SAFETY * power_iteration_norm(K)
        return cls(
            f, g_star, h, ell, K, float(K_norm),
            h_oracle or StochasticOracle.exact(h.gradient()),
            ell_oracle or StochasticOracle.exact(ell.gradient()),
        )

    @property
    def d_primal(self) -> int:
        return self.K.shape[1]

    @property
    def d_dual(self) -> int:
        return self.K.shape[0]

    @property
    def mu(self) -> float:
        return max(self.h_oracle.base.lipschitz, self.ell_oracle.base.lipschitz)

    def max_step(self, step_eps: float = 0.1) -> float:
        """Supremum of admissible constant steps ``1 / (sqrt(1+eps) (mu + ||K||))``."""
        if step_eps <= 0:
            raise ParameterError(f"step_eps must be positive, got {step_eps}")
        denom = math.sqrt(1.0 + step_eps) * (self.mu + self.K_norm)
        return math.inf if denom == 0 else 1.0 / denom

    def with_oracles(self, h_oracle: StochasticOracle, ell_oracle: StochasticOracle) -> "SaddleProblem":
        return replace(self, h_oracle=h_oracle, ell_oracle=ell_oracle)

    def deterministic(self) -> "SaddleProblem":
        return self.with_oracles(StochasticOracle.exact(self.h_oracle.base),
                                 StochasticOracle.exact(self.ell_oracle.base))


def step_from_margin(problem: SaddleProblem, eps_prime: float) -> Tuple[float, float]:
    """
    Reparametrised step bound ``(1 - eps') / (mu + ||K||)`` and an ``eps``
    with ``eps < 1/(1 - eps')^2 - 1`` that makes it admissible.
    """
    if not 0.0 < eps_prime < 1.0:
        raise ParameterError(f"eps_prime must lie in (0, 1), got {eps_prime}")
    lam = (1.0 - eps_prime) / (problem.mu + problem.K_norm)
    eps = 0.5 * (1.0 / (1.0 - eps_prime) ** 2 - 1.0)
    return lam, eps


# ── State and iteration ────────────────────────────────────────────────────

@dataclass
class PdState:
    """
    Primal/dual iterates, step-weighted sums for the ergodic averages and
    the running ingredients of the gap certificate.

    ``c_s_*`` accumulate ``lambda_n^2 E||s_n - grad(y_n, z_n)||^2`` and
    ``c_r_*`` the same for ``r_n`` at ``(w_n, u_n)``; ``*_analytic`` use the
    oracle's closed-form variance, ``*_empirical`` the realised errors.
    """

    n: int
    x_prev: Point
    x_cur: Point
    v_prev: Point
    v_cur: Point
    rng: RngStream
    x_init: Point
    v_init: Point
    sum_lambda: float = 0.0
    sum_lambda_y: Optional[Point] = None
    sum_lambda_z: Optional[Point] = None
    eps_sum: float = 0.0
    eps_prod: float = 1.0
    c_s_analytic: float = 0.0
    c_r_analytic: float = 0.0
    c_s_empirical: float = 0.0
    c_r_empirical: float = 0.0
    analytic_available: bool = True
    last_y: Optional[Point] = None
    last_z: Optional[Point] = None
    last_lambda: float = math.nan
    last_alpha: float = math.nan

    @classmethod
    def start(cls, x0, v0, rng: RngStream, x_prev=None, v_prev=None) -> "PdState":
        x0, v0 = as_point(x0), as_point(v0)
        xm1 = x0.copy() if x_prev is None else as_point(x_prev, x0.size)
        vm1 = v0.copy() if v_prev is None else as_point(v_prev, v0.size)
        return cls(0, xm1, x0, vm1, v0, rng, x0.copy(), v0.copy(),
                   sum_lambda_y=np.zeros_like(x0), sum_lambda_z=np.zeros_like(v0))


def _sq(x: Point) -> float:
    return float(x @ x)


def pd_step(
    state: PdState,
    problem: SaddleProblem,
    lam: float,
    eps_n: float,
    theta: float,
    *,
    step_eps: float = 0.1,
    override: bool = False,
) -> PdState:
    """One step of the stochastic inertial primal-dual iteration."""
    lam = check_step(lam)
    if not override and lam >= problem.max_step(step_eps):
        raise ParameterError(
            f"step {lam:.6g} not below 1/(sqrt(1+eps)(mu+||K||)) = {problem.max_step(step_eps):.6g}"
        )
    n, K, rng = state.n, problem.K, state.rng
    h_or, l_or = problem.h_oracle, problem.ell_oracle

    alpha = _inertia(state.x_cur, state.x_prev, eps_n, theta)
    w = state.x_cur + alpha * (state.x_cur - state.x_prev)
    u = state.v_cur + alpha * (state.v_cur - state.v_prev)

    rh = draw_r(h_or, w, n, rng)
    rl = draw_r(l_or, u, n, rng)
    y = problem.f.prox_step(lam, w - lam * rh - lam * (K.T @ u))
    z = problem.g_star.prox_step(lam, u - lam * rl + lam * (K @ w))
    sh = draw_s(h_or, y, n, rng)
    sl = draw_s(l_or, z, n, rng)

    v_next = z - lam * (sl - rl) + lam * (K @ (y - w))
    x_next = y - lam * (sh - rh) - lam * (K.T @ (z - u))

    norm = math.sqrt(_sq(x_next) + _sq(v_next))
    if not math.isfinite(norm) or norm > DIVERGENCE_RADIUS:
        raise DivergenceError(f"primal-dual iterate diverged at n={n + 1} (norm {norm:.3g})", state=state)

    lam2 = lam * lam
    updates: Dict[str, Any] = {}
    vs_h, vs_l = h_or.s_variance(n, y.size), l_or.s_variance(n, z.size)
    vr_h, vr_l = h_or.r_sq_error(n, w.size), l_or.r_sq_error(n, u.size)
    if None in (vs_h, vs_l, vr_h, vr_l):
        updates["analytic_available"] = False
    else:
        updates["c_s_analytic"] = state.c_s_analytic + lam2 * (vs_h + vs_l)
        updates["c_r_analytic"] = state.c_r_analytic + lam2 * (vr_h + vr_l)
    if not (h_or.is_exact and l_or.is_exact):
        updates["c_s_empirical"] = state.c_s_empirical + lam2 * (
            _sq(sh - h_or.base(y)) + _sq(sl - l_or.base(z)))
        updates["c_r_empirical"] = state.c_r_empirical + lam2 * (
            _sq(rh - h_or.base(w)) + _sq(rl - l_or.base(u)))
    if theta > 0:
        updates["eps_sum"] = state.eps_sum + eps_n
        updates["eps_prod"] = state.eps_prod * (1.0 + eps_n)

    return replace(
        state,
        n=n + 1,
        x_prev=state.x_cur,
        x_cur=x_next,
        v_prev=state.v_cur,
        v_cur=v_next,
        sum_lambda=state.sum_lambda + lam,
        sum_lambda_y=state.sum_lambda_y + lam * y,
        sum_lambda_z=state.sum_lambda_z + lam * z,
        last_y=y,
        last_z=z,
        last_lambda=lam,
        last_alpha=alpha,
        **updates,
    )


def ergodic_averages(state: PdState) -> Tuple[Point, Point]:
    """``(sum lam_n y_n, sum lam_n z_n) / sum lam_n`` over the steps taken."""
    if state.n == 0 or state.sum_lambda <= 0:
        raise StateError("ergodic averages need at least one step")
    return state.sum_lambda_y / state.sum_lambda, state.sum_lambda_z / state.sum_lambda


# ── Gap function and certificate ───────────────────────────────────────────

def gap(problem: SaddleProblem, x, v) -> float:
    """
    ``G(x, v) = h(x) + f(x) + <Kx, v> - g*(v) - l(v)`` in the extended reals.

    ``f(x) = inf`` gives ``+inf``; ``g*(v) = inf`` gives ``-inf``; both at
    once is an infeasible pair and yields NaN.
    """
    x, v = np.asarray(x, dtype=float), np.asarray(v, dtype=float)
    fx, gv = problem.f.value(x), problem.g_star.value(v)
    if math.isinf(fx) and math.isinf(gv):
        logger.warning("Infeasible pair in gap evaluation — excluded")
        return math.nan
    if math.isinf(fx):
        return math.inf
    if math.isinf(gv):
        return -math.inf
    return problem.h.value(x) + fx + float((problem.K @ x) @ v) - gv - problem.ell.value(v)


def gap_difference(problem: SaddleProblem, y_hat, z_hat, x, v) -> float:
    """``G(y_hat, v) - G(x, z_hat)``; NaN when either side is undefined."""
    upper, lower = gap(problem, y_hat, v), gap(problem, x, z_hat)
    if math.isnan(upper) or math.isnan(lower) or (math.isinf(upper) and upper == lower):
        return math.nan
    return upper - lower


@dataclass(frozen=True)
class GapCertificate:
    N: int
    bound_value: float
    S: float
    T: float
    C: float
    sum_lambda: float
    empirical_gap: Optional[float] = None

    def as_dict(self) -> Dict[str, Any]:
        return {"N": self.N, "bound": self.bound_value, "empirical_gap": self.empirical_gap,
                "S": self.S, "T": self.T, "C": self.C, "sum_lambda": self.sum_lambda}


def gap_certificate(
    state: PdState,
    comparison: Tuple[Any, Any],
    step_eps: float = 0.1,
    variance: Union[str, float, None] = "analytic",
    empirical_gap: Optional[float] = None,
) -> GapCertificate:
    """
    ``(1/2)(1 + S T)(||(x_0, v_0) - (x, v)||^2 + C) / sum lambda_n`` with
    ``C = sum lam^2 E||s - grad||^2 + (1 + 1/eps) sum lam^2 E||r - grad||^2``
    truncated at the current step.  *variance* selects the closed-form
    (``"analytic"``), realised (``"empirical"``) or a supplied value of
    ``C``.
    """
    if state.n == 0:
        raise StateError("certificate needs at least one step")
    if step_eps <= 0:
        raise ParameterError(f"step_eps must be positive, got {step_eps}")

    if variance == "analytic":
        if not state.analytic_available:
            raise CapabilityError("oracle has no closed-form variance; use empirical estimates")
        C = state.c_s_analytic + (1.0 + 1.0 / step_eps) * state.c_r_analytic
    elif variance == "empirical":
        C = state.c_s_empirical + (1.0 + 1.0 / step_eps) * state.c_r_empirical
    elif isinstance(variance, (int, float)) and not isinstance(variance, bool):
        C = float(variance)
    else:
        raise CapabilityError(f"missing variance data for the certificate (got {variance!r})")

    x, v = comparison
    dist = _sq(state.x_init - np.asarray(x, dtype=float)) + _sq(state.v_init - np.asarray(v, dtype=float))
    S, T = state.eps_sum, state.eps_prod
    bound = 0.5 * (1.0 + S * T) * (dist + C) / state.sum_lambda
    return GapCertificate(state.n - 1, bound, S, T, C, state.sum_lambda, empirical_gap)


# ── Runs ───────────────────────────────────────────────────────────────────

@dataclass
class PdTrajectory:
    N: List[int] = field(default_factory=list)
    gap: List[float] = field(default_factory=list)
    bound: List[float] = field(default_factory=list)
    final: Optional[PdState] = None
    diverged: bool = False
    error: Optional[str] = None

    def __len__(self) -> int:
        return len(self.N)


def _record_pd(traj: PdTrajectory, state: PdState, problem: SaddleProblem,
               comparison: Tuple[Any, Any], step_eps: float, variance: Union[str, float]) -> None:
    y_hat, z_hat = ergodic_averages(state)
    cert = gap_certificate(state, comparison, step_eps, variance)
    traj.N.append(state.n - 1)
    traj.gap.append(gap_difference(problem, y_hat, z_hat, *comparison))
    traj.bound.append(cert.bound_value)


def run_pd(
    problem: SaddleProblem,
    x0,
    v0,
    steps: StepSchedule,
    eps: EpsilonSchedule,
    theta: float,
    horizon: int,
    comparison: Tuple[Any, Any],
    *,
    seed: int = 0,
    stream_id: int = 0,
    record_every: Optional[int] = None,
    step_eps: float = 0.1,
    variance: Union[str, float] = "analytic",
    override: bool = False,
) -> PdTrajectory:
    """
    Run the primal-dual iteration and record, at each recorded ``N``, the
    ergodic gap ``G(y_hat_N, v) - G(x, z_hat_N)`` against *comparison* and
    the certificate bound.
    """
    if not 0.0 <= theta <= 1.0:
        raise ParameterError(f"theta must lie in [0, 1], got {theta}")
    state = PdState.start(x0, v0, RngStream(seed, stream_id))
    traj = PdTrajectory()
    for k in range(horizon):
        try:
            state = pd_step(state, problem, steps(k), eps(k), theta,
                            step_eps=step_eps, override=override)
        except DivergenceError as exc:
            if state.n >= 1 and (not traj.N or traj.N[-1] != state.n - 1):
                _record_pd(traj, state, problem, comparison, step_eps, variance)
            traj.diverged, traj.error, traj.final = True, str(exc), state
            exc.trajectory = traj
            logger.warning(f"Primal-dual run aborted: {exc}")
            raise
        if should_record(state.n, record_every) or state.n == horizon:
            _record_pd(traj, state, problem, comparison, step_eps, variance)
    traj.final = state
    return traj


# ── Deterministic reference solver ─────────────────────────────────────────

def saddle_residual(problem: SaddleProblem, x: Point, v: Point) -> float:
    """Fixed-point residual of the primal-dual optimality system at unit step."""
    gh, gl = problem.h_oracle.base, problem.ell_oracle.base
    K = problem.K
    rx = x - problem.f.prox_step(1.0, x - gh(x) - K.T @ v)
    rv = v - problem.g_star.prox_step(1.0, v - gl(v) + K @ x)
    return float(np.linalg.norm(rx) + np.linalg.norm(rv))


def solve_saddle(
    problem: SaddleProblem, x0=None, v0=None, tol: float = 1e-12, max_iter: int = 10 ** 6
) -> Tuple[Point, Point, float, int]:
    """Noise-free, non-inertial primal-dual iteration until the residual is below *tol*."""
    x = np.zeros(problem.d_primal) if x0 is None else as_point(x0, problem.d_primal)
    v = np.zeros(problem.d_dual) if v0 is None else as_point(v0, problem.d_dual)
    gh, gl = problem.h_oracle.base, problem.ell_oracle.base
    K, f, g = problem.K, problem.f, problem.g_star
    lam = 0.9 * problem.max_step(0.01)
    if math.isinf(lam):
        lam = 1.0

    residual = saddle_residual(problem, x, v)
    it = 0
    while residual > tol and it < max_iter:
        gw, gu = gh(x), gl(v)
        y = f.prox_step(lam, x - lam * gw - lam * (K.T @ v))
        z = g.prox_step(lam, v - lam * gu + lam * (K @ x))
        v_next = z - lam * (gl(z) - gu) + lam * (K @ (y - x))
        x = y - lam * (gh(y) - gw) - lam * (K.T @ (z - v))
        v = v_next
        it += 1
        if it % 500 == 0:
            residual = saddle_residual(problem, x, v)
    residual = saddle_residual(problem, x, v)
    if residual > tol:
        logger.warning(f"solve_saddle stopped at max_iter={max_iter} with residual {residual:.3e}")
    return x, v, residual, it
