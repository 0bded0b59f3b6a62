"""
Property suites behind ``fbf-tools validate``.

Each suite runs a batch of named checks and stops at nothing: every check
is recorded with a pass flag and a short detail string.  The report names
the first failing check so the exit status can point at it.
"""

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Dict, List, Optional

import numpy as np
from scipy import linalg

from .errors import FbfToolsError
from .fbf import FbfConfig, FbfState, check_lemma32, fbf_step, run_fbf, solve_tseng
from .operators import (
    AffineOperator,
    BoxIndicator,
    L1Norm,
    QuadraticFunction,
    ZeroFunction,
    conjugate_prox,
    estimate_lipschitz,
    estimate_monotonicity,
    prox,
)
from .oracles import EpsilonSchedule, RngStream, StepSchedule, StochasticOracle, draw_s, inertia_coefficient
from .rates import RecursionParams, fit_rate, lemma36_bound, phi_c, simulate_recursion
from .saddle import PdState, gap, gap_certificate, pd_step, power_iteration_norm, ergodic_averages
from ..problems import make_bilinear_saddle, make_lasso, make_skew_affine, make_strongly_monotone_affine

logger = logging.getLogger(__name__)

LEMMA36_GRID = {
    "a": (0.5, 1.0, 2.0),
    "alpha": (0.6, 0.75, 1.0),
    "beta": (1.5, 2.0, 3.0),
}


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class SuiteResult:
    suite: str
    checks: List[Check] = field(default_factory=list)
    seconds: float = 0.0

    def check(self, name: str, passed: bool, detail: str = "") -> bool:
        passed = bool(passed)
        self.checks.append(Check(name, passed, detail))
        if not passed:
            logger.error(f"[{self.suite}] FAILED {name}: {detail}")
        return passed

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def as_dict(self) -> Dict[str, Any]:
        return {"passed": self.passed, "seconds": round(self.seconds, 3),
                "checks": [asdict(c) for c in self.checks]}


def _firmly_nonexpansive(T, rng, dim: int, trials: int = 200) -> float:
    """Smallest ``<Tx - Ty, x - y> - ||Tx - Ty||^2`` over random pairs."""
    worst = math.inf
    for _ in range(trials):
        x, y = 3.0 * rng.standard_normal(dim), 3.0 * rng.standard_normal(dim)
        d = T(x) - T(y)
        worst = min(worst, float(d @ (x - y) - d @ d))
    return worst


# ── Suites ─────────────────────────────────────────────────────────────────

def suite_operators(res: SuiteResult) -> None:
    rng = np.random.default_rng(11)
    dim = 6
    S = rng.standard_normal((dim, dim))
    Q = S @ S.T / dim
    catalog = {
        "box": BoxIndicator(-1.0, 1.0),
        "l1": L1Norm(0.7),
        "quadratic": QuadraticFunction(Q, rng.standard_normal(dim)),
        "zero": ZeroFunction(),
    }
    for name, f in catalog.items():
        for lam in (0.1, 1.0, 5.0):
            worst = _firmly_nonexpansive(lambda z: f.prox_step(lam, z), rng, dim)
            res.check(f"firm_nonexpansive[{name}, lam={lam}]", worst >= -1e-10, f"min slack {worst:.3e}")
            x = 2.0 * rng.standard_normal(dim)
            agree = np.max(np.abs(f.prox_step(lam, x) - f.subdifferential().resolvent(lam, x)))
            res.check(f"prox_resolvent[{name}, lam={lam}]", agree <= 1e-12, f"max diff {agree:.3e}")

    # conjugate pairs with closed forms
    for lam in (0.3, 2.0):
        x = 3.0 * rng.standard_normal(dim)
        err = np.max(np.abs(conjugate_prox(BoxIndicator(-1.0, 1.0), lam, x) - prox(L1Norm(1.0), lam, x)))
        res.check(f"moreau[box* = l1, lam={lam}]", err <= 1e-12, f"max diff {err:.3e}")
        err = np.max(np.abs(conjugate_prox(L1Norm(0.5), lam, x) - np.clip(x, -0.5, 0.5)))
        res.check(f"moreau[l1* = box, lam={lam}]", err <= 1e-12, f"max diff {err:.3e}")
        err = np.max(np.abs(conjugate_prox(QuadraticFunction(1.0), lam, x) - x / (1.0 + lam)))
        res.check(f"moreau[self-conjugate quadratic, lam={lam}]", err <= 1e-12, f"max diff {err:.3e}")

    bench = make_strongly_monotone_affine(10, 1.0, 4.0, seed=3)
    est = estimate_lipschitz(bench.B, 500, 2.0, seed=1)
    res.check("declared_lipschitz", est <= bench.B.lipschitz * (1 + 1e-9), f"estimate {est:.6g}")
    mono = estimate_monotonicity(bench.B, 500, 2.0, seed=1)
    res.check("declared_modulus", mono >= bench.B.strong_mod * (1 - 1e-9), f"estimate {mono:.6g}")


def suite_oracles(res: SuiteResult) -> None:
    B = AffineOperator(np.diag([1.0, 2.0, 3.0]), [0.5, -1.0, 0.0])
    y = np.array([0.3, -0.2, 1.0])
    draws = 100_000
    oracle = StochasticOracle(B, "gaussian_constant", sigma0=0.5)
    rng = RngStream(99, 0)
    samples = np.array([draw_s(oracle, y, 0, rng) for _ in range(draws)])
    dev = np.max(np.abs(samples.mean(axis=0) - B(y)))
    tol = 4.0 * 0.5 / math.sqrt(draws)
    res.check("gaussian_unbiased", dev <= tol, f"max deviation {dev:.3e} vs {tol:.3e}")

    comps = [AffineOperator(np.eye(3), [1.0, 0.0, 0.0]), AffineOperator(3.0 * np.eye(3), [-1.0, 0.0, 0.0])]
    fs = StochasticOracle.finite_sum(comps)
    exact = np.mean([c(y) for c in comps], axis=0)
    res.check("finite_sum_mean", np.allclose(fs.base(y), exact, atol=1e-14), "enumerated component mean")
    rng = RngStream(7, 0)
    samples = np.array([draw_s(fs, y, 0, rng) for _ in range(draws)])
    spread = np.max(np.std([c(y) for c in comps], axis=0))
    dev = np.max(np.abs(samples.mean(axis=0) - exact))
    res.check("finite_sum_unbiased", dev <= 4.0 * spread / math.sqrt(draws) + 1e-12, f"max deviation {dev:.3e}")

    a, b = RngStream(5, 3), RngStream(5, 3)
    same = all(np.array_equal(a.normal(0, 4), b.normal(0, 4)) for _ in range(10))
    res.check("stream_reproducible", same, "equal keys give equal draws")
    c = RngStream(5, 4)
    res.check("stream_distinct", not np.array_equal(RngStream(5, 3).normal(0, 8), c.normal(0, 8)),
              "distinct stream ids differ")

    rng_np = np.random.default_rng(0)
    worst = -math.inf
    for _ in range(500):
        x, xp = rng_np.standard_normal(4), rng_np.standard_normal(4)
        eps_n, theta = rng_np.uniform(0, 1), rng_np.uniform(0, 1)
        alpha = inertia_coefficient(x, xp, eps_n, theta)
        worst = max(worst, alpha * np.linalg.norm(x - xp) - eps_n)
    res.check("inertia_bound", worst <= 1e-12, f"max alpha*||dx|| - eps {worst:.3e}")


def _three_benchmarks():
    return [
        make_strongly_monotone_affine(8, 1.0, 4.0, seed=1),
        make_skew_affine(8, 2.0, seed=2),
        make_lasso(30, 6, 0.05, seed=3),
    ]


def suite_fbf(res: SuiteResult) -> None:
    bench = make_strongly_monotone_affine(20, 1.0, 4.0, seed=5)
    lam = 0.9 / bench.B.lipschitz
    cfg = FbfConfig(bench.A, StochasticOracle.exact(bench.B), StepSchedule.constant(lam),
                    EpsilonSchedule(0.0), 0.0, horizon=1000, record_every=1)
    traj = run_fbf(cfg, np.full(bench.dim, 0.5), seed=1)
    # independent deterministic Tseng
    x = np.full(bench.dim, 0.5)
    worst = 0.0
    M, q = bench.B.M, bench.B.q
    for k in range(1, 1001):
        Bx = M @ x + q
        y = np.clip(x - lam * Bx, -1.0, 1.0)
        x = y - lam * ((M @ y + q) - Bx)
        worst = max(worst, float(np.max(np.abs(traj.x[k] - x))))
    res.check("deterministic_reduction", worst <= 1e-12, f"max per-iterate diff {worst:.3e}")

    traj2 = run_fbf(cfg, np.full(bench.dim, 0.5), seed=2)
    res.check("seed_independent_when_exact", np.array_equal(traj.x[-1], traj2.x[-1]), "zero noise ignores seed")

    x_ref, residual, _ = solve_tseng(bench.A, bench.B, np.zeros(bench.dim))
    res.check("solve_tseng_matches_reference", np.linalg.norm(x_ref - bench.reference) <= 1e-8,
              f"distance {np.linalg.norm(x_ref - bench.reference):.3e}")

    for b in _three_benchmarks():
        oracles = {"exact": StochasticOracle.exact(b.B)}
        if b.components:
            oracles["finite_sum"] = StochasticOracle.finite_sum(b.components, base=b.B)
        else:
            delta = 0.3 * np.ones(b.dim)
            oracles["two_atom"] = StochasticOracle.finite_sum(
                [AffineOperator(b.B.M, b.B.q + delta), AffineOperator(b.B.M, b.B.q - delta)], base=b.B)
        for mode, oracle in oracles.items():
            lam = 0.9 / b.B.lipschitz
            cfg = FbfConfig(b.A, oracle, StepSchedule.constant(lam), EpsilonSchedule(0.1), 0.5, horizon=1000)
            state = FbfState.start(np.zeros(b.dim), RngStream(17, 0))
            worst = math.inf
            for _ in range(cfg.horizon):
                state = fbf_step(state, cfg)
                worst = min(worst, check_lemma32(state, oracle, b.reference))
            res.check(f"lemma32[{b.family}, {mode}]", worst >= -1e-10, f"min RHS-LHS {worst:.3e}")


def suite_lemma36(res: SuiteResult) -> None:
    horizon = 10 ** 4
    for a in LEMMA36_GRID["a"]:
        for alpha in LEMMA36_GRID["alpha"]:
            for beta in LEMMA36_GRID["beta"]:
                if a > beta:
                    continue
                params = RecursionParams(a, 1.0, alpha, beta, s_init=1.0)
                s = simulate_recursion(params, horizon + 1)
                worst = -math.inf
                for n in range(2 * params.n0, horizon + 1):
                    bound = lemma36_bound(params, n)
                    worst = max(worst, (s[n + 1] - bound) / max(bound, 1e-300))
                res.check(f"bound_dominates[a={a}, alpha={alpha}, beta={beta}]", worst <= 1e-9,
                          f"max relative excess {worst:.3e}")


def suite_rates(res: SuiteResult) -> None:
    n = np.arange(1, 10 ** 4 + 1, dtype=float)
    v = fit_rate(n, 5.0 / n)
    res.check("fit_exact_power", abs(v.fitted_slope + 1.0) <= 1e-9, f"slope {v.fitted_slope:.12f}")
    v = fit_rate(n, n ** -1.25, theory={"alpha": 0.75, "a": 1.0, "beta": 2.0})
    res.check("theory_slope_alpha_lt_1", math.isclose(v.theory_slope, -1.25), f"theory {v.theory_slope}")
    gap_c = abs(phi_c(1e-9, 50.0) - math.log(50.0))
    res.check("phi_continuity", gap_c <= 1e-7, f"|phi(1e-9) - log| {gap_c:.3e}")


def suite_saddle(res: SuiteResult) -> None:
    rng = np.random.default_rng(21)
    for label, K in (("identity", np.eye(3)), ("diag", np.diag([1.0, 5.0])),
                     ("random", rng.standard_normal((20, 30)))):
        est = power_iteration_norm(K)
        true = float(linalg.svdvals(K)[0])
        res.check(f"power_iteration[{label}]", abs(est - true) <= 1e-6 * true,
                  f"estimate {est:.12g} vs svd {true:.12g}")

    bench = make_bilinear_saddle(10, 8, seed=4, offset_scale=2.0)
    problem = bench.saddle
    xs, vs = bench.reference, bench.reference_dual
    centre = gap(problem, xs, vs)
    worst = math.inf
    for _ in range(1000):
        x = rng.uniform(-1, 1, problem.d_primal)
        v = rng.uniform(-1, 1, problem.d_dual)
        worst = min(worst, centre - gap(problem, xs, v), gap(problem, x, vs) - centre)
    res.check("saddle_ordering", worst >= -1e-9, f"min slack {worst:.3e}")

    lam = 0.9 * problem.max_step(0.1)
    state = PdState.start(np.zeros(problem.d_primal), np.zeros(problem.d_dual), RngStream(3, 0))
    worst = math.inf
    for _ in range(2000):
        state = pd_step(state, problem, lam, 0.0, 0.0)
        y_hat, z_hat = ergodic_averages(state)
        emp = gap(problem, y_hat, vs) - gap(problem, xs, z_hat)
        cert = gap_certificate(state, (xs, vs), 0.1)
        worst = min(worst, cert.bound_value - emp)
    res.check("certificate_dominates_exact_run", worst >= -1e-12, f"min bound - gap {worst:.3e}")


def suite_problems(res: SuiteResult) -> None:
    for b in _three_benchmarks() + [make_bilinear_saddle(10, 8, seed=4, offset_scale=2.0)]:
        r = b.residual()
        res.check(f"reference_residual[{b.name}]", r <= 1e-9, f"residual {r:.3e}")
    a1 = make_strongly_monotone_affine(12, 0.5, 3.0, seed=9)
    a2 = make_strongly_monotone_affine(12, 0.5, 3.0, seed=9)
    res.check("seed_determinism", np.array_equal(a1.B.M, a2.B.M) and np.array_equal(a1.reference, a2.reference),
              "identical seeds give identical instances")
    b = make_bilinear_saddle(10, 8, seed=4)
    est = power_iteration_norm(b.saddle.K)
    res.check("declared_K_norm", est <= b.saddle.K_norm * 1.01, f"estimate {est:.6g} vs {b.saddle.K_norm:.6g}")


SUITES: Dict[str, Callable[[SuiteResult], None]] = {
    "operators": suite_operators,
    "oracles": suite_oracles,
    "fbf": suite_fbf,
    "lemma36": suite_lemma36,
    "rates": suite_rates,
    "saddle": suite_saddle,
    "problems": suite_problems,
}


def run_suites(selector: str = "all") -> Dict[str, Any]:
    """
    Run the selected suite (or every suite for ``"all"``) and return a
    machine-readable report.  An exception inside a suite counts as a
    failing check named after the exception type.
    """
    names = list(SUITES) if selector == "all" else [selector]
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise FbfToolsError(f"unknown suite {unknown[0]!r}; expected one of {['all', *SUITES]}")

    report: Dict[str, Any] = {"selector": selector, "suites": {}}
    first_failure: Optional[str] = None
    for name in names:
        res = SuiteResult(name)
        started = time.monotonic()
        logger.info(f"Running suite '{name}'…")
        try:
            SUITES[name](res)
        except Exception as exc:
            res.check(f"raised {type(exc).__name__}", False, str(exc))
        res.seconds = time.monotonic() - started
        report["suites"][name] = res.as_dict()
        if first_failure is None:
            failing = next((c for c in res.checks if not c.passed), None)
            if failing:
                first_failure = f"{name}: {failing.name} ({failing.detail})"
        logger.info(f"Suite '{name}': {'PASS' if res.passed else 'FAIL'} "
                    f"({len(res.checks)} checks, {res.seconds:.1f}s)")

    report["passed"] = first_failure is None
    report["first_failure"] = first_failure
    return report
