"""
Experiment configuration and the per-replication work units.

A YAML experiment file is merged over ``config/settings.yaml`` key by key,
then CLI flags override the ``run`` block.  ``build_fbf_plan`` and
``build_pd_plan`` turn a config into a picklable plan whose ``replicate``
method is what the worker pool executes.
"""

import copy
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import yaml

from .errors import ConfigError, DivergenceError, FbfToolsError
from .fbf import FbfConfig, run_fbf
from .operators import Point
from .oracles import MASK64, EpsilonSchedule, StepSchedule, validate_summability
from .saddle import SaddleProblem, gap_certificate, run_pd, step_from_margin
from ..problems import REGISTRY, Benchmark

logger = logging.getLogger(__name__)

SETTINGS_PATH = "config/settings.yaml"

STATUS_OK = "ok"
STATUS_DIVERGED = "diverged"
STATUS_FAILED = "failed"

_BUILTIN_DEFAULTS: Dict[str, Any] = {
    "noise": {},
    "eps": {"eps0": 0.0, "theta": 2.0},
    "step": {"kind": "constant"},
    "inertia": 0.0,
    "x_init": 0.0,
    "v_init": 0.0,
    "run": {"replications": 1, "horizon": 1000, "seed": 0, "workers": 1},
    "saddle": {"step_eps": 0.1, "variance": "analytic"},
    "override_conditions": False,
}


# ── YAML loading ───────────────────────────────────────────────────────────

def deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """Recursive dict merge; *override* wins on conflicting leaves."""
    out = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_yaml(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with path.open(encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def load_settings(path: Optional[str] = None) -> Dict[str, Any]:
    """Global defaults; a missing default settings file is not an error."""
    if path is None:
        if not Path(SETTINGS_PATH).exists():
            return {}
        path = SETTINGS_PATH
    return load_yaml(path)


# ── Experiment config ──────────────────────────────────────────────────────

@dataclass
class ExperimentConfig:
    name: str
    benchmark: Dict[str, Any]
    noise: Dict[str, Any] = field(default_factory=dict)
    eps: Dict[str, Any] = field(default_factory=dict)
    step: Dict[str, Any] = field(default_factory=dict)
    inertia: float = 0.0
    x_init: Any = 0.0
    v_init: Any = 0.0
    replications: int = 1
    horizon: int = 1000
    seed: int = 0
    workers: int = 1
    record_every: Optional[int] = None
    fit: Optional[Dict[str, Any]] = None
    saddle: Dict[str, Any] = field(default_factory=dict)
    override_conditions: bool = False
    out: Optional[str] = None

    def __post_init__(self):
        if not self.benchmark:
            raise ConfigError(f"experiment {self.name!r} names no benchmark")
        if self.replications < 1:
            raise ConfigError(f"replications must be >= 1, got {self.replications}")
        if self.horizon < 1:
            raise ConfigError(f"horizon must be >= 1, got {self.horizon}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if not 0 <= self.seed <= MASK64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if not 0.0 <= self.inertia <= 1.0:
            raise ConfigError(f"inertia must lie in [0, 1], got {self.inertia}")

    @classmethod
    def from_dict(cls, raw: Dict[str, Any], settings: Optional[Dict[str, Any]] = None) -> "ExperimentConfig":
        """Build from parsed YAML; *settings* and the built-in defaults fill gaps."""
        defaults = deep_merge(_BUILTIN_DEFAULTS, (settings or {}).get("experiment", {}))
        merged = deep_merge(defaults, raw)
        run = merged.get("run", {})
        try:
            return cls(
                name=str(merged.get("name", "experiment")),
                benchmark=dict(merged.get("benchmark") or {}),
                noise=dict(merged["noise"]),
                eps=dict(merged["eps"]),
                step=dict(merged["step"]),
                inertia=float(merged["inertia"]),
                x_init=merged["x_init"],
                v_init=merged["v_init"],
                replications=int(run["replications"]),
                horizon=int(run["horizon"]),
                seed=int(run["seed"]),
                workers=int(run["workers"]),
                record_every=run.get("record_every"),
                fit=merged.get("fit"),
                saddle=dict(merged["saddle"]),
                override_conditions=bool(merged["override_conditions"]),
                out=merged.get("out"),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"malformed experiment config: {exc}") from exc

    @classmethod
    def load(cls, path: str, settings: Optional[Dict[str, Any]] = None) -> "ExperimentConfig":
        return cls.from_dict(load_yaml(path), settings)

    def with_overrides(self, **overrides: Any) -> "ExperimentConfig":
        """Copy with every non-None keyword applied (CLI flags)."""
        data = asdict(self)
        data.update({k: v for k, v in overrides.items() if v is not None})
        return ExperimentConfig(**data)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def stream_id_for(seed: int, idx: int) -> int:
    """Per-replication stream id: master seed XOR replication index."""
    return seed ^ idx


def broadcast_point(value: Any, dim: int) -> Point:
    arr = np.asarray(value, dtype=float)
    try:
        return np.broadcast_to(arr, (dim,)).astype(float)
    except ValueError as exc:
        raise ConfigError(f"initial point of shape {arr.shape} does not fit dimension {dim}") from exc


# ── Benchmarks ─────────────────────────────────────────────────────────────

def load_benchmark(desc: Dict[str, Any]) -> Benchmark:
    """``{file: path}`` loads a stored instance; ``{kind: ..., **params}`` generates one."""
    if "file" in desc:
        return Benchmark.from_json(desc["file"])
    params = dict(desc)
    kind = params.pop("kind", None)
    if kind not in REGISTRY:
        raise ConfigError(f"unknown benchmark kind {kind!r}; expected one of {sorted(REGISTRY)}")
    try:
        return REGISTRY[kind](**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for benchmark {kind!r}: {exc}") from exc


# ── Replication results ────────────────────────────────────────────────────

@dataclass
class ReplicationResult:
    """One replication's recorded series (partial when it diverged)."""

    idx: int
    stream_id: int
    status: str
    n: List[int] = field(default_factory=list)
    values: List[float] = field(default_factory=list)
    bound: List[float] = field(default_factory=list)
    steps: int = 0
    error: Optional[str] = None
    meta: Dict[str, Any] = field(default_factory=dict)


# ── Plans ──────────────────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class FbfPlan:
    """Everything a worker process needs to run one stochastic Tseng replication."""

    config: FbfConfig
    x_init: Point
    reference: Point
    seed: int

    kind = "fbf"

    def replicate(self, idx: int) -> ReplicationResult:
        sid = stream_id_for(self.seed, idx)
        try:
            traj = run_fbf(self.config, self.x_init, self.reference, seed=self.seed, stream_id=sid)
        except DivergenceError as exc:
            traj = exc.trajectory
            return ReplicationResult(
                idx, sid, STATUS_DIVERGED,
                list(traj.n) if traj else [], list(traj.sq_dist) if traj else [],
                steps=traj.n[-1] if traj and traj.n else 0, error=str(exc),
            )
        return ReplicationResult(idx, sid, STATUS_OK, list(traj.n), list(traj.sq_dist),
                                 steps=self.config.horizon)


@dataclass(frozen=True, eq=False)
class PdPlan:
    """One primal-dual replication: ergodic gap and certificate per recorded N."""

    problem: SaddleProblem
    x0: Point
    v0: Point
    steps: StepSchedule
    eps: EpsilonSchedule
    theta: float
    horizon: int
    comparison: Tuple[Point, Point]
    seed: int
    record_every: Optional[int] = None
    step_eps: float = 0.1
    variance: Union[str, float] = "analytic"
    override: bool = False

    kind = "pd"

    def replicate(self, idx: int) -> ReplicationResult:
        sid = stream_id_for(self.seed, idx)
        try:
            traj = run_pd(
                self.problem, self.x0, self.v0, self.steps, self.eps, self.theta,
                self.horizon, self.comparison, seed=self.seed, stream_id=sid,
                record_every=self.record_every, step_eps=self.step_eps,
                variance=self.variance, override=self.override,
            )
        except DivergenceError as exc:
            traj = exc.trajectory
            return ReplicationResult(
                idx, sid, STATUS_DIVERGED,
                list(traj.N) if traj else [], list(traj.gap) if traj else [],
                list(traj.bound) if traj else [],
                steps=traj.final.n if traj and traj.final else 0, error=str(exc),
            )
        cert = gap_certificate(traj.final, self.comparison, self.step_eps, self.variance,
                               empirical_gap=traj.gap[-1] if traj.gap else None)
        return ReplicationResult(idx, sid, STATUS_OK, list(traj.N), list(traj.gap), list(traj.bound),
                                 steps=traj.final.n, meta={"certificate": cert.as_dict()})


def run_replication(plan, idx: int) -> ReplicationResult:
    """Module-level entry point so process pools can pickle the call."""
    try:
        return plan.replicate(idx)
    except FbfToolsError as exc:
        return ReplicationResult(idx, stream_id_for(plan.seed, idx), STATUS_FAILED, error=str(exc))


# ── Builders ───────────────────────────────────────────────────────────────

def _require_regime(report, override: bool, label: str) -> None:
    if report.regime is not None:
        logger.info(f"{label}: convergence regime '{report.regime}'")
        return
    msg = (f"{label}: schedules satisfy no convergence regime "
           f"(noise {report.noise_verdict}, weighted {report.weighted_verdict})")
    if not override:
        raise ConfigError(msg + "; set override_conditions to run anyway")
    logger.warning(msg + " — continuing under override_conditions")


def build_fbf_plan(cfg: ExperimentConfig, benchmark: Optional[Benchmark] = None) -> FbfPlan:
    bench = benchmark if benchmark is not None else load_benchmark(cfg.benchmark)
    if bench.kind != "inclusion":
        raise ConfigError(f"benchmark {bench.name!r} is a saddle problem; use pd-run")
    noise = cfg.noise or {"model": bench.params.get("noise", "gaussian_decay")}
    oracle = bench.oracle(noise)
    steps = StepSchedule.from_descriptor(cfg.step, oracle.base.lipschitz, oracle.base.strong_mod or None)
    eps = EpsilonSchedule.from_descriptor(cfg.eps)

    report = validate_summability(oracle, steps, max(cfg.horizon, 10), bench.dim)
    _require_regime(report, cfg.override_conditions, cfg.name)

    fbf_cfg = FbfConfig(bench.A, oracle, steps, eps, cfg.inertia, cfg.horizon,
                        cfg.record_every, cfg.override_conditions)
    return FbfPlan(fbf_cfg, broadcast_point(cfg.x_init, bench.dim), bench.reference, cfg.seed)


def build_pd_plan(cfg: ExperimentConfig, benchmark: Optional[Benchmark] = None) -> PdPlan:
    bench = benchmark if benchmark is not None else load_benchmark(cfg.benchmark)
    if bench.kind != "saddle":
        raise ConfigError(f"benchmark {bench.name!r} is not a saddle problem; use run")
    problem = bench.saddle_problem(cfg.noise)

    step_eps = float(cfg.saddle.get("step_eps", 0.1))
    if "eps_prime" in cfg.saddle:
        lam, step_eps = step_from_margin(problem, float(cfg.saddle["eps_prime"]))
    else:
        lam = cfg.step.get("value") or 0.9 * problem.max_step(step_eps)
    steps = StepSchedule.constant(float(lam), margin=min(0.05, float(lam) / 2))
    eps = EpsilonSchedule.from_descriptor(cfg.eps)

    for label, oracle in (("h", problem.h_oracle), ("ell", problem.ell_oracle)):
        report = validate_summability(oracle, steps, max(cfg.horizon, 10), 1)
        _require_regime(report, cfg.override_conditions, f"{cfg.name} ({label} oracle)")

    return PdPlan(
        problem=problem,
        x0=broadcast_point(cfg.x_init, problem.d_primal),
        v0=broadcast_point(cfg.v_init, problem.d_dual),
        steps=steps,
        eps=eps,
        theta=cfg.inertia,
        horizon=cfg.horizon,
        comparison=(bench.reference, bench.reference_dual),
        seed=cfg.seed,
        record_every=cfg.record_every,
        step_eps=step_eps,
        variance=cfg.saddle.get("variance", "analytic"),
        override=cfg.override_conditions,
    )
