"""
Affine variational inequalities on the box ``[-1, 1]^d``:
``0 in N_box(x) + M x + q`` with ``M = mu I + G`` and ``G`` skew-symmetric.

The skew part makes ``B`` monotone without being cocoercive.  Unless ``q``
is given, the generator plants the solution: roughly a quarter of the
coordinates sit on a face of the box with a strictly outward normal, the
rest lie inside, and ``q`` is chosen to make that point a zero.
"""

import logging
import math
from typing import Optional

import numpy as np

from ..core.errors import ParameterError
from ..core.fbf import solve_tseng
from ..core.operators import AffineOperator, BoxNormalCone, as_point
from .base import Benchmark

logger = logging.getLogger(__name__)

BOUNDARY_SHARE = 0.25
INTERIOR_RADIUS = 0.8


def random_skew(d: int, norm: float, rng: np.random.Generator) -> np.ndarray:
    """
    Skew-symmetric ``Q diag(w_i J) Q'`` with rotation frequencies in
    ``[norm/2, norm]`` and spectral norm exactly *norm*.  Odd *d* leaves one
    null direction.
    """
    G = np.zeros((d, d))
    if d < 2 or norm == 0.0:
        return G
    pairs = d // 2
    omega = rng.uniform(norm / 2.0, norm, pairs)
    omega[0] = norm
    for i, w in enumerate(omega):
        G[2 * i, 2 * i + 1] = w
        G[2 * i + 1, 2 * i] = -w
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    return Q @ G @ Q.T


def _plant_solution(M: np.ndarray, rng: np.random.Generator, boundary_share: float):
    d = M.shape[0]
    x_star = rng.uniform(-INTERIOR_RADIUS, INTERIOR_RADIUS, d)
    normal = np.zeros(d)
    on_face = rng.random(d) < boundary_share
    signs = rng.choice([-1.0, 1.0], d)
    x_star[on_face] = signs[on_face]
    normal[on_face] = signs[on_face] * rng.uniform(0.1, 1.0, int(on_face.sum()))
    q = -(M @ x_star) - normal
    return x_star, q


def _assemble(name, family, seed, params, M, q, lipschitz, strong_mod, x_star) -> Benchmark:
    A = BoxNormalCone(-1.0, 1.0)
    B = AffineOperator(M, q, lipschitz=lipschitz, strong_mod=strong_mod)
    provenance = "constructed"
    if x_star is None:
        x_star, residual, iters = solve_tseng(A, B, np.zeros(M.shape[0]), tol=1e-12)
        provenance = "deterministic_fbf"
        logger.info(f"{name}: reference by deterministic Tseng ({iters} iterations, residual {residual:.2e})")
    bench = Benchmark(name, family, seed, params, x_star, provenance, A=A, B=B)
    bench.check_reference()
    return bench


def make_strongly_monotone_affine(
    d: int,
    mu: float,
    L: float,
    seed: int = 0,
    skew_norm: Optional[float] = None,
    q=None,
    boundary_share: float = BOUNDARY_SHARE,
) -> Benchmark:
    """
    ``B(x) = (mu I + G) x + q`` on ``[-1, 1]^d`` with declared constants
    ``(L, mu)``.  ``||G||`` defaults to ``min(L/2, sqrt(L^2 - mu^2))`` which
    keeps ``||M|| <= L``.  An explicit *q* replaces the planted solution by
    a deterministic Tseng reference.
    """
    if d < 1:
        raise ParameterError(f"dimension must be >= 1, got {d}")
    if not 0 < mu <= L:
        raise ParameterError(f"need 0 < mu <= L, got mu={mu}, L={L}")
    ceiling = math.sqrt(L * L - mu * mu)
    if skew_norm is None:
        skew_norm = min(L / 2.0, ceiling)
    elif not 0 <= skew_norm <= ceiling * (1 + 1e-12):
        raise ParameterError(f"skew_norm must lie in [0, {ceiling:.6g}] so that ||M|| <= L")

    rng = np.random.default_rng(seed)
    M = mu * np.eye(d) + random_skew(d, skew_norm, rng)
    if q is None:
        x_star, q = _plant_solution(M, rng, boundary_share)
    else:
        x_star, q = None, np.broadcast_to(as_point(q), d).copy()

    params = {"d": d, "mu": mu, "L": L, "skew_norm": skew_norm}
    return _assemble(f"affine_d{d}_s{seed}", "affine", seed, params, M, q, L, mu, x_star)


def make_skew_affine(d: int, L: float, seed: int = 0, q=None) -> Benchmark:
    """
    Monotone but not strongly monotone ``B(x) = G x + q`` with nonsingular
    skew ``G`` (``d`` even, ``||G|| = L``) and a planted interior solution,
    which is then the unique zero.
    """
    if d < 2 or d % 2:
        raise ParameterError(f"skew benchmark needs an even dimension >= 2, got {d}")
    if L <= 0:
        raise ParameterError(f"L must be positive, got {L}")

    rng = np.random.default_rng(seed)
    G = random_skew(d, L, rng)
    if q is None:
        x_star, q = _plant_solution(G, rng, 0.0)
    else:
        x_star, q = None, np.broadcast_to(as_point(q), d).copy()

    params = {"d": d, "L": L}
    return _assemble(f"skew_d{d}_s{seed}", "skew", seed, params, G, q, L, 0.0, x_star)
