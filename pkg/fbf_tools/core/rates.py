"""
Non-asymptotic recursion bounds and empirical rate fitting.

The recursion ``0 <= s_{n+1} <= (1 - a n^-alpha) s_n + b n^-beta`` is bounded
in closed form for ``n >= 2 n0``; ``fit_rate`` compares measured log-log
slopes of ``E||x_n - p||^2`` with the predicted exponents.
"""

import logging
import math
from dataclasses import asdict, dataclass
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np

from .errors import DomainError, ParameterError

logger = logging.getLogger(__name__)

_SERIES_CUTOFF = 1e-8


def phi_c(c: float, t: float) -> float:
    """``(t^c - 1)/c`` for ``c != 0`` and ``log t`` for ``c = 0``; continuous in *c*."""
    if t <= 0:
        raise DomainError(f"phi_c is defined for t > 0, got {t}")
    log_t = math.log(t)
    if abs(c) < _SERIES_CUTOFF:
        # log t * (1 + c log t / 2 + (c log t)^2 / 6)
        u = c * log_t
        return log_t * (1.0 + u / 2.0 + u * u / 6.0)
    return math.expm1(c * log_t) / c


def smallest_n0(a: float, alpha: float) -> int:
    """Smallest ``n0 >= 2`` with ``a * n0^-alpha < 1``."""
    n0 = max(2, math.ceil(a ** (1.0 / alpha)))
    while a * n0 ** (-alpha) >= 1.0:
        n0 += 1
    return n0


@dataclass(frozen=True)
class RecursionParams:
    """
    Parameters of the step/perturbation recursion.  *n0* defaults to
    :func:`smallest_n0`; an explicit *n0* must be ``>= 2`` with
    ``a * n0^-alpha <= 1``.
    """

    a: float
    b: float
    alpha: float
    beta: float
    s_init: float = 1.0
    n0: Optional[int] = None

    def __post_init__(self):
        if self.a <= 0:
            raise ParameterError(f"a must be positive, got {self.a}")
        if self.b < 0:
            raise ParameterError(f"b must be nonnegative, got {self.b}")
        if not 0.5 < self.alpha <= 1.0:
            raise ParameterError(f"alpha must lie in (1/2, 1], got {self.alpha}")
        if self.beta <= 1:
            raise ParameterError(f"beta must exceed 1, got {self.beta}")
        if self.a > self.beta:
            raise ParameterError(f"the bound needs a <= beta (a={self.a}, beta={self.beta})")
        if self.s_init < 0:
            raise ParameterError(f"s_init must be nonnegative, got {self.s_init}")
        if self.n0 is None:
            object.__setattr__(self, "n0", smallest_n0(self.a, self.alpha))
        elif self.n0 < 2 or self.a * self.n0 ** (-self.alpha) > 1.0:
            raise ParameterError(f"n0={self.n0} violates n0 >= 2 and a n0^-alpha <= 1")

    @property
    def t(self) -> float:
        return 1.0 - 2.0 ** (self.alpha - 1.0)


def lemma36_bound(params: RecursionParams, n: int) -> float:
    """Closed-form upper bound on ``s_{n+1}`` valid for ``n >= 2 n0``."""
    if n < 2 * params.n0:
        raise DomainError(f"bound holds only for n >= 2 n0 = {2 * params.n0}, got n={n}")
    a, b, alpha, beta, n0, s0 = params.a, params.b, params.alpha, params.beta, params.n0, params.s_init

    if alpha == 1.0:
        head = s0 * (n0 / (n + 1)) ** a
        tail = b / (n + 1) ** a * (1.0 + 1.0 / n0) ** a * phi_c(a + 1.0 - beta, n)
        return head + tail

    k = 1.0 - alpha
    decay = math.exp(-a * params.t * (n + 1) ** k / k)
    lead = (b * phi_c(1.0 - beta, n) + s0 * math.exp(a * n0 ** k / k)) * decay
    return lead + b * 2.0 ** (beta - alpha) / (a * (n - 2) ** (beta - alpha))


def simulate_recursion(params: RecursionParams, horizon: int) -> np.ndarray:
    """
    Extremal sequence ``s_{n+1} = (1 - a n^-alpha) s_n + b n^-beta`` started
    at ``s_{n0} = s_init`` and clipped at zero.  ``out[n] = s_n``; entries
    below ``n0`` are NaN.
    """
    if horizon < params.n0:
        raise ParameterError(f"horizon must be >= n0={params.n0}, got {horizon}")
    out = np.full(horizon + 1, np.nan)
    s = params.s_init
    out[params.n0] = s
    for n in range(params.n0, horizon):
        s = max((1.0 - params.a * n ** (-params.alpha)) * s + params.b * n ** (-params.beta), 0.0)
        out[n + 1] = s
    return out


# ── Rate fitting ───────────────────────────────────────────────────────────

@dataclass(frozen=True)
class RateVerdict:
    fitted_slope: float
    theory_slope: Optional[float]
    window: Tuple[int, int]
    residual: float
    points: int
    log_correction: bool = False

    def as_dict(self) -> Dict[str, Any]:
        return asdict(self)


def theory_slope(alpha: float, a: float, beta: float) -> Tuple[float, bool]:
    """
    Predicted exponent of ``E||x_n - p||^2``: ``alpha - beta`` for
    ``alpha < 1``; ``-min(a, beta - 1)`` for ``alpha = 1`` with a log factor
    when ``a = beta - 1``.
    """
    if alpha < 1.0:
        return alpha - beta, False
    return -min(a, beta - 1.0), math.isclose(a, beta - 1.0)


def fit_rate(
    n: Sequence[float],
    values: Sequence[float],
    window: Optional[Tuple[float, float]] = None,
    theory: Optional[Dict[str, float]] = None,
) -> RateVerdict:
    """
    Unweighted least-squares slope of ``log values`` against ``log n`` over
    *window* (default: the final decade of *n*).
    """
    n = np.asarray(n, dtype=float)
    values = np.asarray(values, dtype=float)
    if n.size == 0:
        raise DomainError("no data to fit")
    if window is None:
        hi = float(n.max())
        window = (hi / 10.0, hi)
    lo, hi = window
    mask = (n >= lo) & (n <= hi) & (n > 0)
    if mask.sum() < 10:
        raise DomainError(f"window [{lo:g}, {hi:g}] holds {int(mask.sum())} points; need >= 10")
    sel = values[mask]
    if np.any(~np.isfinite(sel)) or np.any(sel <= 0):
        raise DomainError("fit window contains nonpositive or non-finite values")

    x, y = np.log(n[mask]), np.log(sel)
    coeffs, ss_res, *_ = np.polyfit(x, y, 1, full=True)
    residual = float(math.sqrt(ss_res[0] / x.size)) if ss_res.size else 0.0

    predicted, log_corr = (None, False)
    if theory:
        predicted, log_corr = theory_slope(theory["alpha"], theory["a"], theory["beta"])

    verdict = RateVerdict(
        fitted_slope=float(coeffs[0]),
        theory_slope=predicted,
        window=(int(lo), int(hi)),
        residual=residual,
        points=int(mask.sum()),
        log_correction=log_corr,
    )
    logger.info(
        f"Fitted slope {verdict.fitted_slope:.4f} over [{lo:g}, {hi:g}]"
        + (f" (theory {predicted:.4f})" if predicted is not None else "")
    )
    return verdict
