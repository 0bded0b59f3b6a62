"""Benchmark record shared by every problem generator, plus its JSON form."""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np

from ..core.errors import ConfigError
from ..core.fbf import fixed_point_residual
from ..core.operators import (
    AffineOperator,
    LipOperator,
    MonotoneMap,
    Point,
    QuadraticFunction,
    lip_operator_from_descriptor,
    monotone_map_from_descriptor,
    prox_function_from_descriptor,
)
from ..core.oracles import StochasticOracle
from ..core.saddle import SaddleProblem, saddle_residual

logger = logging.getLogger(__name__)

REFERENCE_TOL = 1e-9

INCLUSION = "inclusion"
SADDLE = "saddle"


def least_squares_components(data: np.ndarray, targets: np.ndarray) -> Tuple[AffineOperator, ...]:
    """Per-row gradients ``x -> a_i (a_i'x - b_i)`` of ``(a_i'x - b_i)^2 / 2``."""
    return tuple(
        AffineOperator(np.outer(a, a), -b * a, lipschitz=float(a @ a), strong_mod=0.0)
        for a, b in zip(data, targets)
    )


@dataclass
class Benchmark:
    """
    One generated problem instance.

    Inclusion families fill *A* and *B* (plus *components* for finite-sum
    operators); the saddle family fills *saddle* and ``reference_dual``.
    *provenance* says where the reference came from: ``constructed`` when it
    was planted by the generator, otherwise the name of the solver run.
    """

    name: str
    family: str
    generator_seed: int
    params: Dict[str, Any]
    reference: Point
    provenance: str
    A: Optional[MonotoneMap] = None
    B: Optional[LipOperator] = None
    components: Tuple[LipOperator, ...] = ()
    saddle: Optional[SaddleProblem] = None
    reference_dual: Optional[Point] = None
    data: Dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    @property
    def kind(self) -> str:
        return SADDLE if self.saddle is not None else INCLUSION

    @property
    def dim(self) -> int:
        return int(self.reference.size)

    # ── Reference solution ────────────────────────────────────────────────

    def residual(self) -> float:
        if self.kind == SADDLE:
            return saddle_residual(self.saddle, self.reference, self.reference_dual)
        return fixed_point_residual(self.A, self.B, self.reference, 1.0)

    def check_reference(self, tol: float = REFERENCE_TOL) -> float:
        res = self.residual()
        if not res <= tol:
            raise ConfigError(
                f"benchmark {self.name!r}: reference residual {res:.3e} exceeds {tol:g} "
                f"(provenance {self.provenance})"
            )
        logger.debug(f"Benchmark {self.name}: reference residual {res:.3e}")
        return res

    # ── Oracles ───────────────────────────────────────────────────────────

    def oracle(self, noise: Optional[Dict[str, Any]] = None) -> StochasticOracle:
        """Stochastic oracle for *B* described by an experiment ``noise`` block."""
        if self.kind == SADDLE:
            raise ConfigError(f"benchmark {self.name!r} is a saddle problem; use saddle_problem()")
        return StochasticOracle.from_descriptor(noise or {}, self.B, self.components)

    def saddle_problem(self, noise: Optional[Dict[str, Any]] = None) -> SaddleProblem:
        """The saddle problem with both gradient oracles following *noise*."""
        if self.kind != SADDLE:
            raise ConfigError(f"benchmark {self.name!r} is not a saddle problem")
        noise = noise or {}
        return self.saddle.with_oracles(
            StochasticOracle.from_descriptor(noise, self.saddle.h.gradient()),
            StochasticOracle.from_descriptor(noise, self.saddle.ell.gradient()),
        )

    # ── JSON ──────────────────────────────────────────────────────────────

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {
            "name": self.name,
            "family": self.family,
            "generator_seed": self.generator_seed,
            "params": self.params,
            "provenance": self.provenance,
            "reference": self.reference.tolist(),
        }
        if self.kind == SADDLE:
            p = self.saddle
            out["reference_dual"] = self.reference_dual.tolist()
            out["pieces"] = {
                "f": p.f.to_descriptor(),
                "g_star": p.g_star.to_descriptor(),
                "h": p.h.to_descriptor(),
                "ell": p.ell.to_descriptor(),
                "K": p.K.tolist(),
                "K_norm": p.K_norm,
            }
        else:
            out["pieces"] = {"A": self.A.to_descriptor()}
            if self.data:
                out["pieces"]["data"] = {k: v.tolist() for k, v in self.data.items()}
            else:
                out["pieces"]["B"] = self.B.to_descriptor()
        return out

    def to_json(self, path: str) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")
        logger.info(f"Benchmark {self.name} written → {path}")

    @classmethod
    def from_dict(cls, raw: Dict[str, Any], check: bool = True) -> "Benchmark":
        try:
            pieces = raw["pieces"]
            common = dict(
                name=raw["name"],
                family=raw["family"],
                generator_seed=int(raw["generator_seed"]),
                params=dict(raw.get("params", {})),
                reference=np.asarray(raw["reference"], dtype=float),
                provenance=raw["provenance"],
            )
        except KeyError as exc:
            raise ConfigError(f"benchmark JSON is missing key {exc}") from exc

        if "K" in pieces:
            saddle = SaddleProblem.create(
                prox_function_from_descriptor(pieces["f"]),
                prox_function_from_descriptor(pieces["g_star"]),
                prox_function_from_descriptor(pieces["h"]),
                prox_function_from_descriptor(pieces["ell"]),
                np.asarray(pieces["K"], dtype=float),
                float(pieces["K_norm"]),
            )
            bench = cls(**common, saddle=saddle,
                        reference_dual=np.asarray(raw["reference_dual"], dtype=float))
        elif "data" in pieces:
            data = {k: np.asarray(v, dtype=float) for k, v in pieces["data"].items()}
            components = least_squares_components(data["A"], data["b"])
            bench = cls(**common, A=monotone_map_from_descriptor(pieces["A"]),
                        B=StochasticOracle.finite_sum(components).base,
                        components=components, data=data)
        else:
            bench = cls(**common, A=monotone_map_from_descriptor(pieces["A"]),
                        B=lip_operator_from_descriptor(pieces["B"]))
        if check:
            bench.check_reference()
        return bench

    @classmethod
    def from_json(cls, path: str, check: bool = True) -> "Benchmark":
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read benchmark {path}: {exc}") from exc
        return cls.from_dict(raw, check)


def quadratic_smooth(center: Sequence[float]) -> QuadraticFunction:
    """``x -> ||x - center||^2 / 2`` as a dimension-aware quadratic."""
    c = np.asarray(center, dtype=float)
    return QuadraticFunction(1.0, -c, 0.5 * float(c @ c))