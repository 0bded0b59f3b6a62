"""Aggregate replications and write CSV + JSON reports after a run."""

import csv
import json
import logging
import math
from collections import OrderedDict
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import click
import numpy as np

from .errors import ConfigError, CsvParseError
from .experiment import ReplicationResult

logger = logging.getLogger(__name__)

FBF_HEADER = ["n", "mean_sq_dist", "std", "min", "max", "count"]
PD_HEADER = ["N", "mean_gap", "std", "bound"]


@dataclass(frozen=True)
class AggregateRow:
    """Across-replication statistics at one recorded index."""

    n: int
    mean: float
    std: float
    min: float
    max: float
    count: int
    bound: Optional[float] = None


def aggregate(results: Sequence[ReplicationResult]) -> List[AggregateRow]:
    """
    Reduce per-replication series in the given (replication-index) order.

    Points with a missing value (NaN: no reference, infeasible pair) are
    left out, so ``count`` is below R only where replications diverged or
    were excluded.  ``std`` uses divisor ``count - 1`` and is 0 for one value.
    """
    values: "OrderedDict[int, List[float]]" = OrderedDict()
    bounds: Dict[int, List[float]] = {}
    for res in results:
        for i, (n, v) in enumerate(zip(res.n, res.values)):
            if v is None or math.isnan(v):
                values.setdefault(n, [])
                continue
            values.setdefault(n, []).append(float(v))
            if res.bound:
                bounds.setdefault(n, []).append(float(res.bound[i]))

    rows: List[AggregateRow] = []
    for n in sorted(values):
        vals = np.asarray(values[n])
        if vals.size == 0:
            continue
        std = float(np.std(vals, ddof=1)) if vals.size > 1 else 0.0
        bound = float(np.mean(bounds[n])) if n in bounds else None
        rows.append(AggregateRow(int(n), float(np.mean(vals)), std,
                                 float(vals.min()), float(vals.max()), int(vals.size), bound))
    return rows


# ── CSV ────────────────────────────────────────────────────────────────────

def _fmt(value: float) -> str:
    return f"{value:.17g}"


def write_csv(path: str, rows: Sequence[AggregateRow], saddle: bool = False) -> None:
    """RFC-4180 CSV with ``\\n`` line endings and 17 significant digits."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if saddle:
            writer.writerow(PD_HEADER)
            for r in rows:
                writer.writerow([r.n, _fmt(r.mean), _fmt(r.std),
                                 _fmt(r.bound) if r.bound is not None else "nan"])
        else:
            writer.writerow(FBF_HEADER)
            for r in rows:
                writer.writerow([r.n, _fmt(r.mean), _fmt(r.std), _fmt(r.min), _fmt(r.max), r.count])
    logger.info(f"Aggregate CSV   → {path}")


def read_csv(path: str) -> Tuple[np.ndarray, np.ndarray]:
    """
    ``(n, mean)`` columns of a harness CSV (either header).  Malformed rows
    raise :class:`CsvParseError` naming the line.
    """
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc

    n_col: List[float] = []
    m_col: List[float] = []
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header not in (FBF_HEADER, PD_HEADER):
            raise CsvParseError(path, 1, f"unexpected header {header!r}")
        width = len(header)
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != width:
                raise CsvParseError(path, line, f"expected {width} fields, got {len(row)}")
            try:
                n_col.append(float(int(row[0])))
                m_col.append(float(row[1]))
            except ValueError as exc:
                raise CsvParseError(path, line, str(exc)) from exc
    return np.asarray(n_col), np.asarray(m_col)


# ── Reports ────────────────────────────────────────────────────────────────

def generate_report(
    out_path: str,
    name: str,
    kind: str,
    rows: Sequence[AggregateRow],
    run_summary: Dict[str, Any],
    extra: Optional[Dict[str, Any]] = None,
) -> Dict[str, Any]:
    """
    Write the aggregate CSV to *out_path* and a JSON summary next to it
    (same stem, ``.json``).  Returns the summary dict.
    """
    write_csv(out_path, rows, saddle=(kind == "pd"))

    ts = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%SZ")
    last = rows[-1] if rows else None
    summary = {
        "name": name,
        "kind": kind,
        "generated_at": ts,
        "csv": str(out_path),
        **run_summary,
        "final": asdict(last) if last else None,
        **(extra or {}),
    }
    json_path = Path(out_path).with_suffix(".json")
    json_path.write_text(json.dumps(summary, indent=2, default=str) + "\n", encoding="utf-8")
    logger.info(f"Summary report  → {json_path}")
    return summary


def print_summary(summary: Dict[str, Any]) -> None:
    """Print a human-readable summary table to the terminal."""
    total = sum(summary.get(k, 0) for k in ("ok", "diverged", "failed", "pending"))

    click.echo("")
    click.echo("=" * 52)
    click.echo(f"  RUN SUMMARY — {summary.get('name', '')}")
    click.echo("=" * 52)
    click.echo(f"  {'Completed':<14} {summary.get('ok', 0):>6}")
    click.echo(f"  {'Diverged':<14} {summary.get('diverged', 0):>6}")
    click.echo(f"  {'Failed':<14} {summary.get('failed', 0):>6}")
    click.echo(f"  {'Total':<14} {total:>6}")
    final = summary.get("final")
    if final:
        click.echo(f"  {'Final n':<14} {final['n']:>6}")
        click.echo(f"  {'Final mean':<14} {final['mean']:.6g}")
        if final.get("bound") is not None:
            click.echo(f"  {'Final bound':<14} {final['bound']:.6g}")
    fit = summary.get("fit")
    if fit and "fitted_slope" in fit:
        theory = fit.get("theory_slope")
        click.echo(f"  {'Fitted slope':<14} {fit['fitted_slope']:.4f}"
                   + (f"  (theory {theory:.4f})" if theory is not None else ""))
    click.echo("=" * 52)

    problems = summary.get("problem_details", [])
    if problems:
        click.echo(f"\n  Replications with problems (first 10 of {len(problems)}):")
        for item in problems[:10]:
            click.echo(f"    • #{item['idx']} [{item['status']}]: {item.get('error') or 'unknown error'}")
        if len(problems) > 10:
            click.echo(f"    … and {len(problems) - 10} more — see the run store")

    click.echo("")
