"""
Catalog of maximal monotone operators, Lipschitz operators and proximable
functions.

Points are 1-D float64 numpy arrays standing in for elements of a
finite-dimensional Hilbert space, so weak and strong convergence coincide.
Set-valued operators are only ever touched through their resolvents
``(I + lam*A)^-1``; every catalog entry has a closed-form (or single dense
solve) resolvent.

Every entry round-trips through a JSON-compatible descriptor::

    {"kind": "affine" | "box_normal_cone" | "l1" | "zero" | "quadratic", ...}
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Callable, ClassVar, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg

from .errors import InvalidInputError, ParameterError, SamplingError

logger = logging.getLogger(__name__)

Point = np.ndarray
Scalar = Union[float, np.ndarray]


# ── Input validation ──────────────────────────────────────────────────────

def as_point(x: Any, dim: Optional[int] = None) -> Point:
    """Coerce *x* to a finite 1-D float array, optionally of length *dim*."""
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidInputError(f"point must be a non-empty vector, got shape {arr.shape}")
    if dim is not None and arr.size != dim:
        raise InvalidInputError(f"point has dimension {arr.size}, expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("point has non-finite entries")
    return arr


def check_step(lam: float) -> float:
    lam = float(lam)
    if not np.isfinite(lam) or lam <= 0:
        raise ParameterError(f"step size must be positive and finite, got {lam}")
    return lam


def soft_threshold(x: Point, thresh: float) -> Point:
    """``sign(x) * max(|x| - thresh, 0)`` coordinatewise."""
    return np.sign(x) * np.maximum(np.abs(x) - thresh, 0.0)


def _to_param(value: Any) -> Scalar:
    if isinstance(value, (list, tuple, np.ndarray)):
        return np.asarray(value, dtype=float)
    return float(value)


def _to_json(value: Scalar) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    return float(value)


def _solve_shifted(Q: Scalar, lam: float, rhs: Point, cache: Dict[float, Any]) -> Point:
    """Solve ``(I + lam*Q) y = rhs`` for scalar or dense *Q* (LU cached per lam)."""
    if np.ndim(Q) == 0:
        return rhs / (1.0 + lam * float(Q))
    lu = cache.get(lam)
    if lu is None:
        lu = linalg.lu_factor(np.eye(Q.shape[0]) + lam * Q)
        cache[lam] = lu
    return linalg.lu_solve(lu, rhs)


# ── Maximal monotone maps (resolvent access only) ─────────────────────────

class MonotoneMap(ABC):
    """Set-valued maximal monotone operator exposed through its resolvent."""

    kind: ClassVar[str]

    @abstractmethod
    def resolvent(self, lam: float, x: Point) -> Point:
        """``(I + lam*A)^-1 x`` without input validation (hot path)."""

    @abstractmethod
    def to_descriptor(self) -> Dict[str, Any]:
        """JSON-compatible description of this catalog entry."""


class ZeroMap(MonotoneMap):
    kind = "zero"

    def resolvent(self, lam: float, x: Point) -> Point:
        return x.copy()

    def to_descriptor(self) -> Dict[str, Any]:
        return {"kind": self.kind}


@dataclass(frozen=True, eq=False)
class AffineMap(MonotoneMap):
    """Single-valued monotone ``x -> M x + q`` used as the backward operator."""

    M: Scalar
    q: Scalar = 0.0
    _lu: Dict[float, Any] = field(default_factory=dict, repr=False, compare=False)

    kind: ClassVar[str] = "affine"

    def __post_init__(self):
        object.__setattr__(self, "M", _to_param(self.M))
        object.__setattr__(self, "q", _to_param(self.q))

    def resolvent(self, lam: float, x: Point) -> Point:
        return _solve_shifted(self.M, lam, x - lam * self.q, self._lu)

    def to_descriptor(self) -> Dict[str, Any]:
        return {"kind": self.kind, "M": _to_json(self.M), "q": _to_json(self.q)}


@dataclass(frozen=True, eq=False)
class QuadraticSubdifferential(AffineMap):
    """Gradient of ``x -> x'Qx/2 + c'x`` with symmetric positive semidefinite *Q*."""

    kind: ClassVar[str] = "quadratic"

    def to_descriptor(self) -> Dict[str, Any]:
        return {"kind": self.kind, "Q": _to_json(self.M), "c": _to_json(self.q)}


@dataclass(frozen=True, eq=False)
class BoxNormalCone(MonotoneMap):
    """Normal cone of ``[lower, upper]``; its resolvent is the projection."""

    lower: Scalar = -1.0
    upper: Scalar = 1.0

    kind: ClassVar[str] = "box_normal_cone"

    def resolvent(self, lam: float, x: Point) -> Point:
        return np.clip(x, self.lower, self.upper)

    def to_descriptor(self) -> Dict[str, Any]:
        return {"kind": self.kind, "lower": _to_json(self.lower), "upper": _to_json(self.upper)}


@dataclass(frozen=True)
class L1Subdifferential(MonotoneMap):
    """Subdifferential of ``tau * ||x||_1``; resolvent is soft-thresholding."""

    tau: float

    kind: ClassVar[str] = "l1"

    def __post_init__(self):
        if self.tau < 0:
            raise ParameterError(f"tau must be nonnegative, got {self.tau}")

    def resolvent(self, lam: float, x: Point) -> Point:
        return soft_threshold(x, lam * self.tau)

    def to_descriptor(self) -> Dict[str, Any]:
        return {"kind": self.kind, "tau": float(self.tau)}


def monotone_map_from_descriptor(desc: Dict[str, Any]) -> MonotoneMap:
    kind = desc.get("kind")
    if kind == "zero":
        return ZeroMap()
    if kind == "affine":
        return AffineMap(_to_param(desc["M"]), _to_param(desc.get("q", 0.0)))
    if kind == "quadratic":
        return QuadraticSubdifferential(_to_param(desc["Q"]), _to_param(desc.get("c", 0.0)))
    if kind == "box_normal_cone":
        return BoxNormalCone(_to_param(desc.get("lower", -1.0)), _to_param(desc.get("upper", 1.0)))
    if kind == "l1":
        return L1Subdifferential(float(desc["tau"]))
    raise ParameterError(f"unknown monotone map kind: {kind!r}")


def resolve(A: MonotoneMap, lam: float, x: Any) -> Point:
    """``J_lam^A(x) = (I + lam*A)^-1 x``."""
    return A.resolvent(check_step(lam), as_point(x))


# ── Proximable functions ───────────────────────────────────────────────────

class ProxFunction(ABC):
    """Proper lower-semicontinuous convex function with a closed-form prox."""

    kind: ClassVar[str]

    @abstractmethod
    def prox_step(self, lam: float, x: Point) -> Point:
        """argmin_y f(y) + ||x - y||^2 / (2 lam), unchecked."""

    @abstractmethod
    def value(self, x: Point) -> float:
        """Function value; ``inf`` outside the domain."""

    @abstractmethod
    def subdifferential(self) -> MonotoneMap:
        """The maximal monotone operator whose resolvent equals this prox."""

    @abstractmethod
    def to_descriptor(self) -> Dict[str, Any]:
        ...


class SmoothFunction(ABC):
    """Differentiable convex function with a Lipschitz gradient."""

    @abstractmethod
    def value(self, x: Point) -> float:
        ...

    @abstractmethod
    def gradient(self) -> "LipOperator":
        ...


class ZeroFunction(ProxFunction):
    kind = "zero"

    def prox_step(self, lam: float, x: Point) -> Point:
        return x.copy()

    def value(self, x: Point) -> float:
        return 0.0

    def subdifferential(self) -> MonotoneMap:
        return ZeroMap()

    def to_descriptor(self) -> Dict[str, Any]:
        return {"kind": self.kind}


@dataclass(frozen=True, eq=False)
class BoxIndicator(ProxFunction):
    """Indicator of ``[lower, upper]`` (use ``lower=0, upper=inf`` for the orthant)."""

    lower: Scalar = -1.0
    upper: Scalar = 1.0

    kind: ClassVar[str] = "box_indicator"

    def prox_step(self, lam: float, x: Point) -> Point:
        return np.clip(x, self.lower, self.upper)

    def value(self, x: Point) -> float:
        inside = np.all(x >= self.lower) and np.all(x <= self.upper)
        return 0.0 if inside else float("inf")

    def subdifferential(self) -> MonotoneMap:
        return BoxNormalCone(self.lower, self.upper)

    def to_descriptor(self) -> Dict[str, Any]:
        return {"kind": self.kind, "lower": _to_json(self.lower), "upper": _to_json(self.upper)}


@dataclass(frozen=True)
class L1Norm(ProxFunction):
    tau: float

    kind: ClassVar[str] = "l1"

    def __post_init__(self):
        if self.tau < 0:
            raise ParameterError(f"tau must be nonnegative, got {self.tau}")

    def prox_step(self, lam: float, x: Point) -> Point:
        return soft_threshold(x, lam * self.tau)

    def value(self, x: Point) -> float:
        return float(self.tau * np.sum(np.abs(x)))

    def subdifferential(self) -> MonotoneMap:
        return L1Subdifferential(self.tau)

    def to_descriptor(self) -> Dict[str, Any]:
        return {"kind": self.kind, "tau": float(self.tau)}


@dataclass(frozen=True, eq=False)
class QuadraticFunction(ProxFunction, SmoothFunction):
    """
    ``x -> x'Qx/2 + c'x + const``.

    *Q* may be a scalar (a multiple of the identity, dimension-free) or a
    symmetric positive semidefinite matrix.
    """

    Q: Scalar = 1.0
    c: Scalar = 0.0
    const: float = 0.0
    _lu: Dict[float, Any] = field(default_factory=dict, repr=False, compare=False)

    kind: ClassVar[str] = "quadratic"

    def __post_init__(self):
        object.__setattr__(self, "Q", _to_param(self.Q))
        object.__setattr__(self, "c", _to_param(self.c))

    def prox_step(self, lam: float, x: Point) -> Point:
        return _solve_shifted(self.Q, lam, x - lam * self.c, self._lu)

    def value(self, x: Point) -> float:
        Qx = self.Q * x if np.ndim(self.Q) == 0 else self.Q @ x
        return float(0.5 * x @ Qx + np.sum(self.c * x) + self.const)

    def gradient(self) -> "AffineOperator":
        return AffineOperator(self.Q, self.c)

    def subdifferential(self) -> MonotoneMap:
        return QuadraticSubdifferential(self.Q, self.c)

    def to_descriptor(self) -> Dict[str, Any]:
        return {"kind": self.kind, "Q": _to_json(self.Q), "c": _to_json(self.c),
                "const": float(self.const)}


def prox_function_from_descriptor(desc: Dict[str, Any]) -> ProxFunction:
    kind = desc.get("kind")
    if kind == "zero":
        return ZeroFunction()
    if kind == "box_indicator":
        return BoxIndicator(_to_param(desc.get("lower", -1.0)), _to_param(desc.get("upper", 1.0)))
    if kind == "l1":
        return L1Norm(float(desc["tau"]))
    if kind == "quadratic":
        return QuadraticFunction(_to_param(desc.get("Q", 1.0)), _to_param(desc.get("c", 0.0)),
                                 float(desc.get("const", 0.0)))
    raise ParameterError(f"unknown prox function kind: {kind!r}")


def prox(f: ProxFunction, lam: float, x: Any) -> Point:
    """Proximity operator of ``lam * f`` at *x*."""
    return f.prox_step(check_step(lam), as_point(x))


def conjugate_prox(f: ProxFunction, lam: float, x: Any) -> Point:
    """``prox_{lam f*}(x) = x - lam * prox_{f/lam}(x/lam)`` (Moreau decomposition)."""
    lam = check_step(lam)
    x = as_point(x)
    return x - lam * f.prox_step(1.0 / lam, x / lam)


# ── Single-valued Lipschitz operators ──────────────────────────────────────

class LipOperator(ABC):
    """Single-valued monotone operator with Lipschitz constant and modulus."""

    lipschitz: float
    strong_mod: float

    @abstractmethod
    def __call__(self, x: Point) -> Point:
        ...

    @property
    def dim(self) -> Optional[int]:
        return None

    def to_descriptor(self) -> Dict[str, Any]:
        raise ParameterError(f"{type(self).__name__} has no descriptor form")


class AffineOperator(LipOperator):
    """
    ``B(x) = M x + q``.

    Unless given, the Lipschitz constant is ``||M||_2`` and the strong
    monotonicity modulus is the smallest eigenvalue of ``(M + M')/2``
    clipped at zero.
    """

    def __init__(
        self,
        M: Scalar,
        q: Scalar = 0.0,
        lipschitz: Optional[float] = None,
        strong_mod: Optional[float] = None,
    ):
        self.M = _to_param(M)
        self.q = _to_param(q)
        if np.ndim(self.M) == 0:
            if self.M < 0:
                raise ParameterError("scalar affine operator must have M >= 0 to be monotone")
            true_l, true_mu = abs(float(self.M)), float(self.M)
        else:
            if self.M.ndim != 2 or self.M.shape[0] != self.M.shape[1]:
                raise InvalidInputError(f"M must be square, got shape {self.M.shape}")
            true_l = float(linalg.norm(self.M, 2))
            sym = 0.5 * (self.M + self.M.T)
            true_mu = float(max(linalg.eigvalsh(sym)[0], 0.0))
        self.lipschitz = float(lipschitz) if lipschitz is not None else true_l
        self.strong_mod = float(strong_mod) if strong_mod is not None else true_mu
        if self.lipschitz < 0 or self.strong_mod < 0:
            raise ParameterError("lipschitz and strong_mod must be nonnegative")

    def __call__(self, x: Point) -> Point:
        if np.ndim(self.M) == 0:
            return self.M * x + self.q
        return self.M @ x + self.q

    @property
    def dim(self) -> Optional[int]:
        if np.ndim(self.M) == 2:
            return self.M.shape[0]
        if np.ndim(self.q) == 1:
            return self.q.shape[0]
        return None

    def to_descriptor(self) -> Dict[str, Any]:
        return {"kind": "affine", "M": _to_json(self.M), "q": _to_json(self.q),
                "lipschitz": self.lipschitz, "strong_mod": self.strong_mod}

    def __repr__(self) -> str:
        return f"AffineOperator(dim={self.dim}, L={self.lipschitz:.4g}, mu={self.strong_mod:.4g})"


class FunctionOperator(LipOperator):
    """Wraps an arbitrary callable with declared constants (not serialisable)."""

    def __init__(self, fn: Callable[[Point], Point], lipschitz: float,
                 strong_mod: float = 0.0, dim: Optional[int] = None):
        self.fn = fn
        self.lipschitz = float(lipschitz)
        self.strong_mod = float(strong_mod)
        self._dim = dim

    def __call__(self, x: Point) -> Point:
        return np.asarray(self.fn(x), dtype=float)

    @property
    def dim(self) -> Optional[int]:
        return self._dim


class AverageOperator(LipOperator):
    """``B = (B_1 + ... + B_m) / m`` with averaged constants (valid bounds)."""

    def __init__(self, components: Sequence[LipOperator]):
        if not components:
            raise ParameterError("AverageOperator needs at least one component")
        self.components: Tuple[LipOperator, ...] = tuple(components)
        self.lipschitz = float(np.mean([c.lipschitz for c in self.components]))
        self.strong_mod = float(np.mean([c.strong_mod for c in self.components]))

    def __call__(self, x: Point) -> Point:
        return sum(c(x) for c in self.components) / len(self.components)

    @property
    def dim(self) -> Optional[int]:
        return self.components[0].dim

    def to_descriptor(self) -> Dict[str, Any]:
        return {"kind": "average", "components": [c.to_descriptor() for c in self.components]}


def lip_operator_from_descriptor(desc: Dict[str, Any]) -> LipOperator:
    kind = desc.get("kind")
    if kind == "affine":
        return AffineOperator(desc["M"], desc.get("q", 0.0),
                              desc.get("lipschitz"), desc.get("strong_mod"))
    if kind == "average":
        return AverageOperator([lip_operator_from_descriptor(c) for c in desc["components"]])
    raise ParameterError(f"unknown Lipschitz operator kind: {kind!r}")


# ── Empirical checks of declared constants ─────────────────────────────────

def _sample_pairs(sample_count: int, radius: float, seed: int, dim: int):
    if sample_count < 2:
        raise ParameterError(f"sample_count must be >= 2, got {sample_count}")
    if radius <= 0:
        raise ParameterError(f"radius must be positive, got {radius}")
    rng = np.random.default_rng(seed)
    xs = rng.uniform(-radius, radius, size=(sample_count, dim))
    ys = rng.uniform(-radius, radius, size=(sample_count, dim))
    return xs, ys


def _resolve_dim(B: LipOperator, dim: Optional[int]) -> int:
    dim = dim if dim is not None else B.dim
    if dim is None:
        raise ParameterError("operator dimension unknown; pass dim explicitly")
    return dim


def estimate_lipschitz(
    B: LipOperator, sample_count: int, radius: float, seed: int, dim: Optional[int] = None
) -> float:
    """Largest sampled ``||Bx - By|| / ||x - y||`` over random pairs in a cube."""
    xs, ys = _sample_pairs(sample_count, radius, seed, _resolve_dim(B, dim))
    best, used = 0.0, 0
    for x, y in zip(xs, ys):
        dist = np.linalg.norm(x - y)
        if dist == 0.0:
            continue
        used += 1
        best = max(best, float(np.linalg.norm(B(x) - B(y)) / dist))
    if used == 0:
        raise SamplingError("all sampled pairs were degenerate")
    if best > B.lipschitz * (1 + 1e-9):
        logger.warning(f"Sampled Lipschitz ratio {best:.6g} exceeds declared L={B.lipschitz:.6g}")
    return best


def estimate_monotonicity(
    B: LipOperator, sample_count: int, radius: float, seed: int, dim: Optional[int] = None
) -> float:
    """Smallest sampled ``<Bx - By, x - y> / ||x - y||^2`` (compare with declared mu)."""
    xs, ys = _sample_pairs(sample_count, radius, seed, _resolve_dim(B, dim))
    worst, used = float("inf"), 0
    for x, y in zip(xs, ys):
        diff = x - y
        sq = float(diff @ diff)
        if sq == 0.0:
            continue
        used += 1
        worst = min(worst, float((B(x) - B(y)) @ diff) / sq)
    if used == 0:
        raise SamplingError("all sampled pairs were degenerate")
    return worst
