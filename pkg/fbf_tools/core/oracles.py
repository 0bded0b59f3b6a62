"""
Stochastic estimators of a Lipschitz operator, reproducible random streams,
and the inertia / step / tolerance schedules of the stochastic Tseng method.

Each iteration draws the forward estimate ``r_n`` (at ``w_n``) and the
correction estimate ``s_n`` (at ``y_n``) from two independent channels of one
``RngStream`` so a replication is a pure function of ``(seed, stream_id)``.
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np

from .errors import ParameterError
from .operators import AffineOperator, AverageOperator, LipOperator, Point

logger = logging.getLogger(__name__)

MASK64 = (1 << 64) - 1

# Relative tolerance deciding "x_n = x_{n-1}" in the inertia rule.
EQUALITY_TOL = 1e-14

NOISE_MODELS = ("gaussian_decay", "gaussian_constant", "finite_sum")

SUMMABLE = "summable"
DIVERGENT = "divergent"
BOUNDED_ONLY = "bounded-only"
_SEVERITY = {SUMMABLE: 0, BOUNDED_ONLY: 1, DIVERGENT: 2}


# ── Random streams ─────────────────────────────────────────────────────────

class RngStream:
    """
    Counter-tracked random stream keyed by ``(seed, stream_id)``.

    Internally a numpy ``SeedSequence`` spawns one Philox generator per
    channel; channel 0 feeds ``r_n`` draws and channel 1 feeds ``s_n`` draws.
    Equal keys reproduce equal draws; distinct stream ids give independent
    streams.  ``counter`` counts draw calls.

    A stream is mutable and must be owned by one worker at a time.
    """

    R_CHANNEL = 0
    S_CHANNEL = 1

    def __init__(self, seed: int, stream_id: int = 0, channels: int = 2):
        self.seed = int(seed) & MASK64
        self.stream_id = int(stream_id) & MASK64
        self.counter = 0
        root = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        self._gens: Tuple[np.random.Generator, ...] = tuple(
            np.random.Generator(np.random.Philox(child)) for child in root.spawn(channels)
        )

    def normal(self, channel: int, size: int) -> np.ndarray:
        self.counter += 1
        return self._gens[channel].standard_normal(size)

    def index(self, channel: int, high: int) -> int:
        self.counter += 1
        return int(self._gens[channel].integers(high))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id}, counter={self.counter})"


# ── Schedules ──────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class EpsilonSchedule:
    """Summable inertia tolerances ``eps_n = eps0 * (n+1)^(-theta_exp)``."""

    eps0: float = 0.0
    theta_exp: float = 2.0

    def __post_init__(self):
        if self.eps0 < 0:
            raise ParameterError(f"eps0 must be nonnegative, got {self.eps0}")
        if self.theta_exp <= 1:
            raise ParameterError(f"theta_exp must exceed 1 for summability, got {self.theta_exp}")

    def __call__(self, n: int) -> float:
        return self.eps0 * (n + 1) ** (-self.theta_exp)

    def partial_sums(self, horizon: int) -> np.ndarray:
        n = np.arange(horizon, dtype=float)
        return np.cumsum(self.eps0 * (n + 1) ** (-self.theta_exp))

    @property
    def sum_bound(self) -> float:
        return self.eps0 * self.theta_exp / (self.theta_exp - 1) + self.eps0

    @classmethod
    def from_descriptor(cls, desc: Dict[str, Any]) -> "EpsilonSchedule":
        return cls(float(desc.get("eps0", 0.0)), float(desc.get("theta", 2.0)))

    def to_descriptor(self) -> Dict[str, Any]:
        return {"eps0": self.eps0, "theta": self.theta_exp}


@dataclass(frozen=True)
class StepSchedule:
    """
    Step sizes for the stochastic Tseng method.

    ``constant``: ``lambda_n = value`` with ``margin < value < (1 - margin)/L``.
    ``polynomial``: ``lambda_n = 4a / (mu * n^alpha)`` for ``n >= 1``,
    optionally capped from above by *cap*.  Iteration ``k`` (0-based) uses
    ``lambda_{k+1}``.
    """

    kind: str
    value: Optional[float] = None
    margin: float = 0.05
    a: Optional[float] = None
    alpha: Optional[float] = None
    mu: Optional[float] = None
    cap: Optional[float] = None

    def __post_init__(self):
        if self.kind == "constant":
            if self.value is None or self.value <= 0:
                raise ParameterError(f"constant step must be positive, got {self.value}")
            if not 0 < self.margin < 0.5:
                raise ParameterError(f"step margin must lie in (0, 1/2), got {self.margin}")
        elif self.kind == "polynomial":
            if self.a is None or self.a <= 0:
                raise ParameterError(f"polynomial step needs a > 0, got {self.a}")
            if self.alpha is None or not 0.5 < self.alpha <= 1:
                raise ParameterError(f"polynomial step needs alpha in (1/2, 1], got {self.alpha}")
            if self.mu is None or self.mu <= 0:
                raise ParameterError(f"polynomial step needs mu > 0, got {self.mu}")
            if self.cap is not None and self.cap <= 0:
                raise ParameterError(f"step cap must be positive, got {self.cap}")
        else:
            raise ParameterError(f"unknown step schedule kind: {self.kind!r}")

    @classmethod
    def constant(cls, value: float, margin: float = 0.05) -> "StepSchedule":
        return cls("constant", value=float(value), margin=margin)

    @classmethod
    def default_constant(cls, lipschitz: float, margin: float = 0.05) -> "StepSchedule":
        return cls.constant(0.9 / lipschitz, margin)

    @classmethod
    def polynomial(cls, a: float, alpha: float, mu: float, cap: Optional[float] = None) -> "StepSchedule":
        return cls("polynomial", a=a, alpha=alpha, mu=mu, cap=cap)

    def lambda_at(self, n: int) -> float:
        """``lambda_n`` with 1-based ``n``."""
        if self.kind == "constant":
            return self.value
        if n < 1:
            raise ParameterError(f"polynomial steps are indexed from n = 1, got {n}")
        lam = 4.0 * self.a / (self.mu * n ** self.alpha)
        return min(lam, self.cap) if self.cap is not None else lam

    def __call__(self, k: int) -> float:
        """Step used at 0-based iteration *k*."""
        return self.lambda_at(k + 1)

    @property
    def in_l2_not_l1(self) -> bool:
        return self.kind == "polynomial"

    def check_admissible(self, lipschitz: float) -> None:
        """Constant steps must lie in ``]margin, (1 - margin)/L[``."""
        if self.kind != "constant":
            return
        upper = (1.0 - self.margin) / lipschitz if lipschitz > 0 else float("inf")
        if not self.margin < self.value < upper:
            raise ParameterError(
                f"constant step {self.value:.6g} outside ]{self.margin}, {upper:.6g}[ for L={lipschitz:.6g}"
            )

    @classmethod
    def from_descriptor(cls, desc: Dict[str, Any], lipschitz: Optional[float] = None,
                        strong_mod: Optional[float] = None) -> "StepSchedule":
        kind = desc.get("kind", "constant")
        if kind == "constant":
            value = desc.get("value")
            if value is None:
                if not lipschitz:
                    raise ParameterError("constant step needs a value or a known Lipschitz constant")
                value = 0.9 / lipschitz
            return cls.constant(float(value), float(desc.get("margin", 0.05)))
        mu = desc.get("mu", strong_mod)
        cap = desc.get("cap")
        return cls.polynomial(desc.get("a"), desc.get("alpha", 1.0), mu,
                              float(cap) if cap is not None else None)

    def to_descriptor(self) -> Dict[str, Any]:
        return {k: v for k, v in asdict(self).items() if v is not None}


# ── Stochastic oracle ──────────────────────────────────────────────────────

def _finite_sum_base(components: Sequence[LipOperator]) -> LipOperator:
    if all(isinstance(c, AffineOperator) and np.ndim(c.M) == 2 for c in components):
        M = np.mean([c.M for c in components], axis=0)
        q = np.mean([np.broadcast_to(c.q, M.shape[0]) for c in components], axis=0)
        return AffineOperator(M, q)
    return AverageOperator(components)


@dataclass(frozen=True, eq=False)
class StochasticOracle:
    """
    Randomised estimator of ``base``.

    gaussian_decay     isotropic noise with per-coordinate std ``sigma0 (n+1)^-p``
    gaussian_constant  isotropic noise with per-coordinate std ``sigma0``
    finite_sum         ``base = mean(components)``; one uniformly drawn component per call

    ``bias0 > 0`` adds the deterministic perturbation ``bias0 (n+1)^-bias_p``
    along the unit diagonal to ``r_n`` only (experimental: ``s_n`` stays
    unbiased).
    """

    base: LipOperator
    noise_model: str = "gaussian_decay"
    sigma0: float = 0.0
    p: float = 0.0
    components: Tuple[LipOperator, ...] = field(default=())
    bias0: float = 0.0
    bias_p: float = 1.0

    def __post_init__(self):
        if self.noise_model not in NOISE_MODELS:
            raise ParameterError(f"unknown noise model {self.noise_model!r}; expected one of {NOISE_MODELS}")
        if self.sigma0 < 0 or self.p < 0:
            raise ParameterError("sigma0 and p must be nonnegative")
        if self.noise_model == "finite_sum" and not self.components:
            raise ParameterError("finite_sum oracle needs at least one component")
        if self.bias0 < 0 or self.bias_p < 0:
            raise ParameterError("bias0 and bias_p must be nonnegative")
        if self.bias0 > 0:
            logger.warning(
                f"Biased r_n model enabled (bias0={self.bias0}, bias_p={self.bias_p}) — experimental"
            )

    @classmethod
    def exact(cls, base: LipOperator) -> "StochasticOracle":
        return cls(base, "gaussian_decay", 0.0, 0.0)

    @classmethod
    def finite_sum(cls, components: Sequence[LipOperator], base: Optional[LipOperator] = None,
                   **kwargs) -> "StochasticOracle":
        components = tuple(components)
        return cls(base or _finite_sum_base(components), "finite_sum",
                   components=components, **kwargs)

    @classmethod
    def from_descriptor(cls, desc: Dict[str, Any], base: LipOperator,
                        components: Sequence[LipOperator] = ()) -> "StochasticOracle":
        model = desc.get("model", "gaussian_decay")
        bias = dict(bias0=float(desc.get("bias0", 0.0)), bias_p=float(desc.get("bias_p", 1.0)))
        if model == "finite_sum":
            if not components:
                raise ParameterError("finite_sum noise needs a benchmark with component operators")
            return cls(base, model, components=tuple(components), **bias)
        return cls(base, model, float(desc.get("sigma0", 0.0)), float(desc.get("p", 0.0)), **bias)

    def to_descriptor(self) -> Dict[str, Any]:
        desc: Dict[str, Any] = {"model": self.noise_model}
        if self.noise_model != "finite_sum":
            desc.update(sigma0=self.sigma0, p=self.p)
        if self.bias0 > 0:
            desc.update(bias0=self.bias0, bias_p=self.bias_p)
        return desc

    # ── Noise law ─────────────────────────────────────────────────────────

    def sigma(self, n: int) -> Optional[float]:
        """Per-coordinate noise std at iteration *n* (``None`` for finite_sum)."""
        if self.noise_model == "finite_sum":
            return None
        if self.noise_model == "gaussian_constant":
            return self.sigma0
        return self.sigma0 * (n + 1) ** (-self.p)

    def bias(self, n: int) -> float:
        return self.bias0 * (n + 1) ** (-self.bias_p) if self.bias0 > 0 else 0.0

    def s_variance(self, n: int, dim: int) -> Optional[float]:
        """``E||s_n - B y_n||^2`` when it has a closed form."""
        sigma = self.sigma(n)
        return None if sigma is None else dim * sigma * sigma

    def r_sq_error(self, n: int, dim: int) -> Optional[float]:
        """``E||r_n - B w_n||^2`` (variance plus squared bias) when closed-form."""
        var = self.s_variance(n, dim)
        return None if var is None else var + self.bias(n) ** 2

    @property
    def is_exact(self) -> bool:
        return self.noise_model != "finite_sum" and self.sigma0 == 0.0 and self.bias0 == 0.0

    def sample(self, x: Point, n: int, rng: RngStream, channel: int) -> Point:
        if self.noise_model == "finite_sum":
            return self.components[rng.index(channel, len(self.components))](x)
        value = self.base(x)
        sigma = self.sigma(n)
        if sigma:
            value = value + sigma * rng.normal(channel, x.shape[0])
        return value


def draw_r(oracle: StochasticOracle, w: Point, n: int, rng: RngStream) -> Point:
    """Forward estimate ``r_n`` of ``B w_n``."""
    if n < 0:
        raise ParameterError(f"iteration index must be nonnegative, got {n}")
    r = oracle.sample(w, n, rng, RngStream.R_CHANNEL)
    if oracle.bias0 > 0:
        r = r + oracle.bias(n) / np.sqrt(w.shape[0])
    return r


def draw_s(oracle: StochasticOracle, y: Point, n: int, rng: RngStream) -> Point:
    """Unbiased estimate ``s_n`` of ``B y_n``."""
    if n < 0:
        raise ParameterError(f"iteration index must be nonnegative, got {n}")
    return oracle.sample(y, n, rng, RngStream.S_CHANNEL)


# ── Summability conditions ─────────────────────────────────────────────────

@dataclass(frozen=True)
class SummabilityReport:
    """
    Partial sums of the analytic noise sequences up to *horizon* and the
    verdicts for the general-regime condition (noise sums) and the
    strongly-monotone condition (step-weighted noise sums).
    """

    horizon: int
    s_variance_sum: Optional[float]
    r_error_sum: Optional[float]
    weighted_s_sum: Optional[float]
    weighted_r_sum: Optional[float]
    noise_verdict: str
    weighted_verdict: str
    steps_l2_not_l1: bool
    regime: Optional[str]

    def as_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _power_verdict(exponent: float, vanishes: bool) -> str:
    """Verdict for a series of terms ``~ n^-exponent``."""
    if vanishes or exponent > 1:
        return SUMMABLE
    return DIVERGENT


def _worst(*verdicts: str) -> str:
    return max(verdicts, key=_SEVERITY.__getitem__)


def validate_summability(
    oracle: StochasticOracle, steps: StepSchedule, horizon: int, dim: int = 1
) -> SummabilityReport:
    """
    Evaluate the noise conditions of the convergence theorems analytically.

    The general regime needs ``sum E||s_n - By_n||^2 < inf`` and
    ``sum ||r_n - Bw_n||^2 < inf``; the strongly monotone regime needs the
    same sums weighted by ``lambda_n^2`` together with
    ``lambda in l2 minus l1``.  finite_sum noise has no closed-form variance
    and is bounded only on bounded sets.
    """
    if horizon < 10:
        raise ParameterError(f"horizon must be >= 10, got {horizon}")

    step_exp = 0.0 if steps.kind == "constant" else 2.0 * steps.alpha
    lam = np.array([steps(k) for k in range(horizon)])

    if oracle.noise_model == "finite_sum":
        s_sum = r_sum = ws_sum = wr_sum = None
        noise_verdict = BOUNDED_ONLY
        weighted_verdict = SUMMABLE if step_exp > 1 else BOUNDED_ONLY
    else:
        n = np.arange(horizon)
        s_terms = np.array([oracle.s_variance(k, dim) for k in n])
        r_terms = np.array([oracle.r_sq_error(k, dim) for k in n])
        s_sum, r_sum = float(s_terms.sum()), float(r_terms.sum())
        ws_sum = float((lam ** 2 * s_terms).sum())
        wr_sum = float((lam ** 2 * r_terms).sum())

        noise_exp = 0.0 if oracle.noise_model == "gaussian_constant" else 2.0 * oracle.p
        no_noise = oracle.sigma0 == 0.0
        no_bias = oracle.bias0 == 0.0
        bias_exp = 2.0 * oracle.bias_p
        noise_verdict = _worst(
            _power_verdict(noise_exp, no_noise),
            _power_verdict(bias_exp, no_bias),
        )
        weighted_verdict = _worst(
            _power_verdict(noise_exp + step_exp, no_noise),
            _power_verdict(bias_exp + step_exp, no_bias),
        )

    regime = None
    if steps.kind == "constant" and noise_verdict == SUMMABLE:
        regime = "general"
    elif steps.in_l2_not_l1 and oracle.base.strong_mod > 0 and weighted_verdict == SUMMABLE:
        regime = "strongly_monotone"

    return SummabilityReport(
        horizon=horizon,
        s_variance_sum=s_sum,
        r_error_sum=r_sum,
        weighted_s_sum=ws_sum,
        weighted_r_sum=wr_sum,
        noise_verdict=noise_verdict,
        weighted_verdict=weighted_verdict,
        steps_l2_not_l1=steps.in_l2_not_l1,
        regime=regime,
    )


# ── Inertia ────────────────────────────────────────────────────────────────

def _inertia(x_cur: Point, x_prev: Point, eps_n: float, theta: float) -> float:
    gap = float(np.linalg.norm(x_cur - x_prev))
    if gap <= EQUALITY_TOL * (1.0 + float(np.linalg.norm(x_cur))):
        return theta
    return min(eps_n / gap, theta)


def inertia_coefficient(x_cur: Point, x_prev: Point, eps_n: float, theta: float) -> float:
    """
    ``alpha_n = min(eps_n / ||x_n - x_{n-1}||, theta)``, or ``theta`` when the
    two iterates coincide; guarantees ``alpha_n ||x_n - x_{n-1}|| <= eps_n``
    on the min branch.
    """
    if not 0.0 <= theta <= 1.0:
        raise ParameterError(f"theta must lie in [0, 1], got {theta}")
    if eps_n < 0:
        raise ParameterError(f"eps_n must be nonnegative, got {eps_n}")
    return _inertia(np.asarray(x_cur, dtype=float), np.asarray(x_prev, dtype=float), eps_n, theta)
