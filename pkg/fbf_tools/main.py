"""CLI entry point for fbf-tools."""

import asyncio
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import click
import yaml

from .core.db import RunDB
from .core.errors import DomainError, FbfToolsError
from .core.experiment import ExperimentConfig, build_fbf_plan, build_pd_plan, load_settings
from .core.oracles import MASK64
from .core.rates import fit_rate
from .core.replicator import Replicator
from .core.reporter import aggregate, generate_report, print_summary, read_csv
from .core.validate import SUITES, run_suites
from .problems import REGISTRY

WORKERS_ENV = "FBF_TOOLS_WORKERS"


def _setup_logging(log_dir: str, level: str) -> None:
    log_path = Path(log_dir)
    log_path.mkdir(parents=True, exist_ok=True)
    numeric = getattr(logging, level.upper(), logging.INFO)
    fmt = "%(asctime)s [%(levelname)-8s] %(name)s — %(message)s"
    logging.basicConfig(
        level=numeric,
        format=fmt,
        handlers=[
            logging.StreamHandler(),
            logging.FileHandler(log_path / "fbf_tools.log"),
        ],
    )


def _fail(message: str) -> None:
    click.echo(f"Error: {message}", err=True)
    sys.exit(1)


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option(
    "--settings",
    default=None,
    metavar="FILE",
    help="Global settings YAML (default: config/settings.yaml when present).",
)
@click.option(
    "--log-dir",
    default=None,
    help="Directory for log files (default from settings, else 'logs').",
)
@click.option(
    "--log-level",
    default=None,
    type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False),
    help="Log level (default from settings, else INFO).",
)
@click.pass_context
def cli(ctx, settings, log_dir, log_level):
    """
    fbf-tools — stochastic inertial forward-backward-forward experiments.

    \b
    Examples:
        fbf-tools run --config config/strongly_monotone.yaml
        fbf-tools pd-run --config config/bilinear_saddle.yaml --replications 10
        fbf-tools rate-fit output/strongly_monotone.csv --window 1000 100000
        fbf-tools validate --suite all
        fbf-tools gen-benchmark --kind affine -p d=20 -p mu=1 -p L=4 --out bench.json
    """
    try:
        loaded = load_settings(settings)
    except FbfToolsError as exc:
        _fail(str(exc))
    log_cfg = loaded.get("logging", {})
    _setup_logging(log_dir or log_cfg.get("log_dir", "logs"), log_level or log_cfg.get("level", "INFO"))
    ctx.obj = {"settings": loaded}


# ── Shared run options ─────────────────────────────────────────────────────

def _run_options(fn):
    options = [
        click.option("--config", "-c", "config_path", required=True, metavar="FILE",
                     help="Experiment YAML."),
        click.option("--seed", type=click.IntRange(0, MASK64), default=None,
                     help="Master seed (overrides run.seed)."),
        click.option("--replications", "-r", type=click.IntRange(min=1), default=None,
                     help="Number of replications R (overrides run.replications)."),
        click.option("--horizon", "-n", type=click.IntRange(min=1), default=None,
                     help="Iterations per replication N (overrides run.horizon)."),
        click.option("--out", "-o", default=None, metavar="CSV",
                     help="Aggregate CSV path (default: output/<name>.csv)."),
        click.option("--override-conditions", is_flag=True, default=None,
                     help="Run even if step/noise conditions fail (falsification runs)."),
        click.option("--workers", "-w", type=click.IntRange(min=1), default=None,
                     envvar=WORKERS_ENV, metavar="N",
                     help=f"Worker processes (overrides run.workers; env {WORKERS_ENV})."),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


def _experiment(ctx, config_path, **overrides) -> ExperimentConfig:
    cfg = ExperimentConfig.load(config_path, ctx.obj["settings"])
    cfg = cfg.with_overrides(**overrides)
    if cfg.out is None:
        cfg = cfg.with_overrides(out=str(Path("output") / f"{cfg.name}.csv"))
    return cfg


async def _execute(plan, cfg: ExperimentConfig) -> Tuple[list, Dict[str, Any]]:
    db = RunDB(str(Path(cfg.out).with_suffix(".db")))
    await db.open()
    try:
        await db.reset()
        await db.set_state("config", cfg.to_dict())
        results = await Replicator(plan, db, cfg.replications, cfg.workers).run()
        run_summary = await db.get_summary()
    finally:
        await db.close()
    return results, run_summary


def _fit_block(cfg: ExperimentConfig, rows) -> Optional[Dict[str, Any]]:
    if not cfg.fit:
        return None
    window = cfg.fit.get("window")
    try:
        verdict = fit_rate([r.n for r in rows], [r.mean for r in rows],
                           tuple(window) if window else None, cfg.fit.get("theory"))
    except DomainError as exc:
        logging.getLogger(__name__).warning(f"Rate fit skipped: {exc}")
        return {"error": str(exc)}
    return verdict.as_dict()


@cli.command("run")
@_run_options
@click.pass_context
def cmd_run(ctx, config_path, seed, replications, horizon, out, override_conditions, workers):
    """Monte-Carlo replications of the stochastic inertial Tseng method."""
    try:
        cfg = _experiment(ctx, config_path, seed=seed, replications=replications, horizon=horizon,
                          out=out, override_conditions=override_conditions, workers=workers)
        plan = build_fbf_plan(cfg)
        results, run_summary = asyncio.run(_execute(plan, cfg))
        rows = aggregate(results)
        extra = {}
        fit = _fit_block(cfg, rows)
        if fit is not None:
            extra["fit"] = fit
        summary = generate_report(cfg.out, cfg.name, "fbf", rows, run_summary, extra)
    except (FbfToolsError, OSError) as exc:
        _fail(str(exc))
    print_summary(summary)


@cli.command("pd-run")
@_run_options
@click.pass_context
def cmd_pd_run(ctx, config_path, seed, replications, horizon, out, override_conditions, workers):
    """Monte-Carlo replications of the stochastic primal-dual iteration."""
    try:
        cfg = _experiment(ctx, config_path, seed=seed, replications=replications, horizon=horizon,
                          out=out, override_conditions=override_conditions, workers=workers)
        plan = build_pd_plan(cfg)
        results, run_summary = asyncio.run(_execute(plan, cfg))
        rows = aggregate(results)
        extra: Dict[str, Any] = {}
        certified = next((r.meta["certificate"] for r in results if "certificate" in r.meta), None)
        if certified is not None and rows:
            extra["certificate"] = {**certified, "N": rows[-1].n, "bound": rows[-1].bound,
                                    "empirical_gap": rows[-1].mean}
        summary = generate_report(cfg.out, cfg.name, "pd", rows, run_summary, extra)
    except (FbfToolsError, OSError) as exc:
        _fail(str(exc))
    print_summary(summary)


@cli.command("rate-fit")
@click.argument("csv_path", type=click.Path(dir_okay=False))
@click.option("--window", nargs=2, type=float, default=None, metavar="LO HI",
              help="Fit window in n (default: final decade).")
@click.option("--alpha", type=float, default=None, help="Step exponent alpha for the theory slope.")
@click.option("--a", "a_coef", type=float, default=None, help="Step coefficient a for the theory slope.")
@click.option("--beta", type=float, default=None, help="Perturbation exponent beta for the theory slope.")
@click.option("--out", "-o", default=None, metavar="JSON", help="Write the verdict here as well.")
def cmd_rate_fit(csv_path, window, alpha, a_coef, beta, out):
    """Fit the log-log slope of a run CSV and compare it with theory."""
    theory = None
    if None not in (alpha, a_coef, beta):
        theory = {"alpha": alpha, "a": a_coef, "beta": beta}
    elif any(v is not None for v in (alpha, a_coef, beta)):
        _fail("--alpha, --a and --beta must be given together")
    try:
        n, mean = read_csv(csv_path)
        verdict = fit_rate(n, mean, tuple(window) if window else None, theory)
    except FbfToolsError as exc:
        _fail(str(exc))
    payload = json.dumps(verdict.as_dict(), indent=2)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(payload + "\n", encoding="utf-8")
    click.echo(payload)


@cli.command("validate")
@click.option("--suite", "-s", default="all", show_default=True,
              type=click.Choice(["all", *SUITES]), help="Suite to run.")
@click.option("--out", "-o", default=None, metavar="JSON", help="Write the report here as well.")
def cmd_validate(suite, out):
    """Run property suites; exit 0 iff every check passes."""
    report = run_suites(suite)
    payload = json.dumps(report, indent=2)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(payload + "\n", encoding="utf-8")
    click.echo(payload)
    if not report["passed"]:
        click.echo(f"FAILED — {report['first_failure']}", err=True)
        sys.exit(1)


@cli.command("gen-benchmark")
@click.option("--kind", "-k", required=True, type=click.Choice(sorted(REGISTRY.keys())),
              help="Benchmark family.")
@click.option("--param", "-p", "params", multiple=True, metavar="KEY=VALUE",
              help="Generator parameter (repeatable), e.g. -p d=20 -p mu=1.")
@click.option("--seed", type=click.IntRange(0, MASK64), default=0, show_default=True)
@click.option("--out", "-o", required=True, metavar="JSON", help="Where to write the instance.")
def cmd_gen_benchmark(kind, params, seed, out):
    """Generate a benchmark instance with its reference solution as JSON."""
    kwargs: Dict[str, Any] = {"seed": seed}
    for item in params:
        key, sep, value = item.partition("=")
        if not sep or not key:
            _fail(f"--param expects KEY=VALUE, got {item!r}")
        kwargs[key.strip()] = yaml.safe_load(value)
    try:
        bench = REGISTRY[kind](**kwargs)
    except TypeError as exc:
        _fail(f"bad parameters for {kind}: {exc}")
    except FbfToolsError as exc:
        _fail(str(exc))
    bench.to_json(out)
    click.echo(f"{bench.name}: reference residual {bench.residual():.3e} ({bench.provenance}) → {out}")


if __name__ == "__main__":
    cli()
