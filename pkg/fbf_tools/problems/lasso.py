"""Sparse least squares ``min tau ||x||_1 + (1/m) sum_i (a_i'x - b_i)^2 / 2``."""

import logging
from typing import Tuple

import numpy as np

from ..core.errors import ParameterError
from ..core.operators import AffineOperator, L1Subdifferential, Point, soft_threshold
from ..core.oracles import StochasticOracle
from .base import Benchmark, least_squares_components

logger = logging.getLogger(__name__)


def proximal_gradient(
    grad: AffineOperator, tau: float, tol: float = 1e-12, max_iter: int = 10 ** 6
) -> Tuple[Point, float, int]:
    """ISTA with step ``1/L`` until the unit-step fixed-point residual is below *tol*."""
    d = grad.dim
    step = 1.0 / grad.lipschitz
    x = np.zeros(d)
    residual = float(np.linalg.norm(x - soft_threshold(x - grad(x), tau)))
    it = 0
    while residual > tol and it < max_iter:
        x = soft_threshold(x - step * grad(x), step * tau)
        it += 1
        if it % 50 == 0:
            residual = float(np.linalg.norm(x - soft_threshold(x - grad(x), tau)))
    residual = float(np.linalg.norm(x - soft_threshold(x - grad(x), tau)))
    if residual > tol:
        logger.warning(f"proximal_gradient stopped at max_iter={max_iter} with residual {residual:.3e}")
    return x, residual, it


def make_lasso(
    m: int,
    d: int,
    tau: float,
    seed: int = 0,
    noise: str = "finite_sum",
    sparsity: float = 0.2,
    target_noise: float = 0.1,
) -> Benchmark:
    """
    Gaussian design ``A`` (m x d), sparse planted signal and noisy targets.
    ``B`` is the gradient of the smooth part; its finite-sum components are
    the per-row gradients so a finite_sum oracle samples one row per draw.
    *noise* is the oracle model experiments use when they name none.
    """
    if m < 1 or d < 1:
        raise ParameterError(f"need m, d >= 1, got m={m}, d={d}")
    if tau <= 0:
        raise ParameterError(f"tau must be positive, got {tau}")

    rng = np.random.default_rng(seed)
    data = rng.standard_normal((m, d))
    signal = np.where(rng.random(d) < sparsity, rng.standard_normal(d), 0.0)
    targets = data @ signal + target_noise * rng.standard_normal(m)

    components = least_squares_components(data, targets)
    B = StochasticOracle.finite_sum(components).base
    x_star, residual, iters = proximal_gradient(B, tau)
    logger.info(f"lasso m={m} d={d}: reference by proximal gradient ({iters} iterations, residual {residual:.2e})")

    params = {"m": m, "d": d, "tau": tau, "noise": noise}
    bench = Benchmark(
        f"lasso_m{m}_d{d}_s{seed}", "lasso", seed, params, x_star, "proximal_gradient",
        A=L1Subdifferential(tau), B=B, components=components,
        data={"A": data, "b": targets},
    )
    bench.check_reference()
    return bench
