"""
Box-constrained bilinear saddle problems

    min_x max_v  ||x - c||^2/2 + i_box(x) + <Kx, v> - i_box(v) - ||v - e||^2/2

on ``[-1, 1]^dp x [-1, 1]^dd``.  With ``offset_scale = 0`` the saddle point is
the origin; larger offsets push it onto faces of the boxes.
"""

import logging

import numpy as np

from ..core.errors import ParameterError
from ..core.operators import BoxIndicator
from ..core.saddle import SaddleProblem, solve_saddle
from .base import Benchmark, quadratic_smooth

logger = logging.getLogger(__name__)


def make_bilinear_saddle(
    d_primal: int,
    d_dual: int,
    seed: int = 0,
    offset_scale: float = 0.0,
    K=None,
) -> Benchmark:
    """
    ``K`` defaults to a Gaussian matrix scaled by ``1/sqrt(d_primal)``;
    ``L_h = L_l = 1``.  The reference saddle point comes from a noise-free,
    non-inertial primal-dual run to residual ``1e-12``.
    """
    if d_primal < 1 or d_dual < 1:
        raise ParameterError(f"dimensions must be >= 1, got {d_primal}x{d_dual}")
    if offset_scale < 0:
        raise ParameterError(f"offset_scale must be nonnegative, got {offset_scale}")

    rng = np.random.default_rng(seed)
    if K is None:
        K = rng.standard_normal((d_dual, d_primal)) / np.sqrt(d_primal)
    else:
        K = np.atleast_2d(np.asarray(K, dtype=float))
        if K.shape != (d_dual, d_primal):
            raise ParameterError(f"K must have shape {(d_dual, d_primal)}, got {K.shape}")
    c = offset_scale * rng.uniform(-1.0, 1.0, d_primal)
    e = offset_scale * rng.uniform(-1.0, 1.0, d_dual)

    problem = SaddleProblem.create(
        BoxIndicator(-1.0, 1.0), BoxIndicator(-1.0, 1.0),
        quadratic_smooth(c), quadratic_smooth(e), K,
    )
    x_star, v_star, residual, iters = solve_saddle(problem, tol=1e-12)
    logger.info(
        f"bilinear {d_primal}x{d_dual}: reference by deterministic primal-dual run "
        f"({iters} iterations, residual {residual:.2e})"
    )

    params = {"d_primal": d_primal, "d_dual": d_dual, "offset_scale": offset_scale}
    bench = Benchmark(
        f"bilinear_{d_primal}x{d_dual}_s{seed}", "bilinear", seed, params, x_star,
        "deterministic_pd", saddle=problem, reference_dual=v_star,
    )
    bench.check_reference()
    return bench
