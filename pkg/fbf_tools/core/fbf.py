"""
Stochastic inertial forward-backward-forward (Tseng) iteration.

One step, given ``x_{n-1}``, ``x_n``::

    alpha_n = min(eps_n / ||x_n - x_{n-1}||, theta)     (theta if equal)
    w_n     = x_n + alpha_n (x_n - x_{n-1})
    r_n     ~ B w_n
    y_n     = J_{lambda_n A}(w_n - lambda_n r_n)
    s_n     ~ B y_n                                   (unbiased)
    x_{n+1} = y_n - lambda_n (s_n - r_n)

The composite form replaces the resolvent by ``prox_{lambda_n f}`` and the
estimates by stochastic gradients of a smooth term.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from .errors import CapabilityError, DivergenceError, ParameterError
from .operators import LipOperator, MonotoneMap, Point, ProxFunction, as_point, check_step
from .oracles import (
    EpsilonSchedule,
    RngStream,
    StepSchedule,
    StochasticOracle,
    _inertia,
    draw_r,
    draw_s,
    validate_summability,
)

logger = logging.getLogger(__name__)

DIVERGENCE_RADIUS = 1e12


@dataclass(frozen=True, eq=False)
class FbfConfig:
    A: MonotoneMap
    B_oracle: StochasticOracle
    steps: StepSchedule
    eps: EpsilonSchedule = field(default_factory=EpsilonSchedule)
    theta: float = 0.0
    horizon: int = 1000
    record_every: Optional[int] = None
    override_conditions: bool = False

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise ParameterError(f"theta must lie in [0, 1], got {self.theta}")
        if self.horizon < 0:
            raise ParameterError(f"horizon must be nonnegative, got {self.horizon}")
        if self.record_every is not None and self.record_every < 1:
            raise ParameterError(f"record_every must be >= 1, got {self.record_every}")
        if self.override_conditions:
            logger.warning("Step-size conditions overridden — falsification run.")
        else:
            self.steps.check_admissible(self.B_oracle.base.lipschitz)


@dataclass
class FbfState:
    """Iterates ``x_{n-1}, x_n`` plus diagnostics of the step that produced ``x_n``."""

    n: int
    x_prev: Point
    x_cur: Point
    rng: RngStream
    last_w: Optional[Point] = None
    last_y: Optional[Point] = None
    last_r: Optional[Point] = None
    last_s: Optional[Point] = None
    last_lambda: float = math.nan
    last_alpha: float = math.nan

    @classmethod
    def start(cls, x_init, rng: RngStream, x_prev=None) -> "FbfState":
        x0 = as_point(x_init)
        xm1 = x0.copy() if x_prev is None else as_point(x_prev, x0.size)
        return cls(0, xm1, x0, rng)


@dataclass
class Trajectory:
    """
    Recorded iterates.  ``alpha`` and ``lam`` belong to the step that produced
    ``x_n`` (NaN for the initial point).
    """

    n: List[int] = field(default_factory=list)
    x: List[Point] = field(default_factory=list)
    sq_dist: List[Optional[float]] = field(default_factory=list)
    alpha: List[float] = field(default_factory=list)
    lam: List[float] = field(default_factory=list)
    diverged: bool = False
    error: Optional[str] = None

    def record(self, state: FbfState, reference: Optional[Point]) -> None:
        self.n.append(state.n)
        self.x.append(state.x_cur)
        self.sq_dist.append(
            None if reference is None else float(np.sum((state.x_cur - reference) ** 2))
        )
        self.alpha.append(state.last_alpha)
        self.lam.append(state.last_lambda)

    def __len__(self) -> int:
        return len(self.n)

    def sq_dist_array(self) -> np.ndarray:
        return np.array([np.nan if d is None else d for d in self.sq_dist])


def should_record(n: int, record_every: Optional[int]) -> bool:
    """Every *record_every* steps, or every step up to 10^3 then ~900 points per decade."""
    if record_every:
        return n % record_every == 0
    if n <= 1000:
        return True
    return n % 10 ** (int(math.log10(n)) - 2) == 0


# ── Iteration ──────────────────────────────────────────────────────────────

def _advance(
    state: FbfState,
    backward: Callable[[float, Point], Point],
    oracle: StochasticOracle,
    lam: float,
    eps_n: float,
    theta: float,
) -> FbfState:
    n = state.n
    alpha = _inertia(state.x_cur, state.x_prev, eps_n, theta)
    w = state.x_cur + alpha * (state.x_cur - state.x_prev)
    r = draw_r(oracle, w, n, state.rng)
    y = backward(lam, w - lam * r)
    s = draw_s(oracle, y, n, state.rng)
    x_next = y - lam * (s - r)

    norm = float(np.linalg.norm(x_next))
    if not math.isfinite(norm) or norm > DIVERGENCE_RADIUS:
        raise DivergenceError(f"iterate diverged at n={n + 1} (||x|| = {norm:.3g})", state=state)

    return FbfState(n + 1, state.x_cur, x_next, state.rng, w, y, r, s, lam, alpha)


def fbf_step(state: FbfState, config: FbfConfig) -> FbfState:
    """One step of the stochastic inertial Tseng method."""
    lam = config.steps(state.n)
    if lam <= 0:
        raise ParameterError(f"non-positive step {lam} at n={state.n}")
    return _advance(state, config.A.resolvent, config.B_oracle, lam,
                    config.eps(state.n), config.theta)


def composite_step(
    state: FbfState,
    f: ProxFunction,
    grad_oracle: StochasticOracle,
    lam: float,
    eps_n: float = 0.0,
    theta: float = 0.0,
) -> FbfState:
    """
    Composite minimisation step for ``f + h``:
    ``y_n = prox_{lam f}(w_n - lam g(w_n, xi_n))``,
    ``x_{n+1} = y_n - lam (g(y_n, xi'_n) - g(w_n, xi_n))``.
    """
    return _advance(state, f.prox_step, grad_oracle, check_step(lam), eps_n, theta)


def run_fbf(
    config: FbfConfig,
    x_init,
    reference: Optional[Point] = None,
    *,
    seed: int = 0,
    stream_id: int = 0,
    x_prev=None,
) -> Trajectory:
    """
    Run ``config.horizon`` steps from ``x_{-1} = x_0 = x_init`` (unless
    *x_prev* is given) and record the trajectory.  On divergence the
    ``DivergenceError`` carries the partial trajectory.
    """
    state = FbfState.start(x_init, RngStream(seed, stream_id), x_prev)
    dim = state.x_cur.size
    if reference is not None:
        reference = as_point(reference, dim)

    report = validate_summability(config.B_oracle, config.steps, max(config.horizon, 10), dim)
    if report.regime is None:
        logger.warning(
            f"Configuration satisfies neither convergence regime "
            f"(noise: {report.noise_verdict}, weighted: {report.weighted_verdict})"
        )

    traj = Trajectory()
    traj.record(state, reference)
    for _ in range(config.horizon):
        try:
            state = fbf_step(state, config)
        except DivergenceError as exc:
            if traj.n[-1] != state.n:
                traj.record(state, reference)
            traj.diverged = True
            traj.error = str(exc)
            exc.trajectory = traj
            logger.warning(f"Run aborted: {exc}")
            raise
        if should_record(state.n, config.record_every):
            traj.record(state, reference)

    logger.debug(f"run_fbf finished {config.horizon} steps, {len(traj)} points recorded")
    return traj


# ── Per-iteration inequality check ─────────────────────────────────────────

def _lemma32_gap(w, y, r, s, lam, L, Bw, By, p) -> float:
    x_next = y - lam * (s - r)
    lhs = float(np.sum((x_next - p) ** 2))
    rhs = (
        float(np.sum((w - p) ** 2))
        - (1.0 - lam * lam * L * L) * float(np.sum((w - y) ** 2))
        + lam * lam * (float(np.sum((s - By) ** 2)) + float(np.sum((r - Bw) ** 2)))
        + 2.0 * lam * lam * (float((s - By) @ (By - r)) + float((By - Bw) @ (Bw - r)))
        + 2.0 * float((y - w - lam * (By - r)) @ (y - p))
        + 2.0 * lam * float((By - s) @ (y - p))
    )
    return rhs - lhs


def check_lemma32(state: FbfState, oracle: StochasticOracle, p) -> float:
    """
    ``RHS - LHS`` of the per-iteration distance inequality for the step that
    produced ``state.x_cur``, averaged exactly over every outcome of ``s_n``.

    Exact averages exist only for noiseless ``s_n`` or finite_sum oracles.
    """
    if state.last_y is None:
        raise ParameterError("no step has been taken yet")
    if oracle.noise_model == "finite_sum":
        outcomes = [c(state.last_y) for c in oracle.components]
    elif oracle.sigma0 == 0.0:
        outcomes = [oracle.base(state.last_y)]
    else:
        raise CapabilityError(
            f"exact conditional expectation unavailable for {oracle.noise_model} noise"
        )

    p = as_point(p, state.x_cur.size)
    B = oracle.base
    w, y, r, lam = state.last_w, state.last_y, state.last_r, state.last_lambda
    Bw, By = B(w), B(y)
    gaps = [_lemma32_gap(w, y, r, s, lam, B.lipschitz, Bw, By, p) for s in outcomes]
    return float(np.mean(gaps))


# ── Deterministic reference solver ─────────────────────────────────────────

def fixed_point_residual(A: MonotoneMap, B: LipOperator, x: Point, lam: float = 1.0) -> float:
    """``||x - J_{lam A}(x - lam Bx)||``; zero exactly at zeros of ``A + B``."""
    return float(np.linalg.norm(x - A.resolvent(lam, x - lam * B(x))))


def solve_tseng(
    A: MonotoneMap,
    B: LipOperator,
    x0,
    lam: Optional[float] = None,
    tol: float = 1e-12,
    max_iter: int = 10 ** 6,
) -> Tuple[Point, float, int]:
    """
    Deterministic Tseng iteration until the fixed-point residual drops below
    *tol*.  Returns ``(x, residual, iterations)``.
    """
    lam = lam if lam is not None else 0.9 / B.lipschitz
    x = as_point(x0)
    residual = fixed_point_residual(A, B, x, lam)
    it = 0
    while residual > tol and it < max_iter:
        Bx = B(x)
        y = A.resolvent(lam, x - lam * Bx)
        x = y - lam * (B(y) - Bx)
        it += 1
        if it % 1000 == 0:
            residual = fixed_point_residual(A, B, x, lam)
            logger.debug(f"solve_tseng: iteration {it}, residual {residual:.3e}")
    residual = fixed_point_residual(A, B, x, lam)
    if residual > tol:
        logger.warning(f"solve_tseng stopped at max_iter={max_iter} with residual {residual:.3e}")
    return x, residual, it
