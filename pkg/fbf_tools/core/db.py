"""SQLite-backed run store: replication status and recorded series."""

import json
import logging
import math
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional

import aiosqlite

from .experiment import ReplicationResult

logger = logging.getLogger(__name__)

MEMORY = ":memory:"


class RunDB:
    """
    Async SQLite database with WAL mode so worker coroutines can record
    results while others are still running.

    Tables
    ------
    replications: one row per replication; status, stream id, error, metadata.
    series      : recorded (n, value, bound) points per replication.
    run_state   : key/value pairs for the run (config snapshot, timings).

    SQLite stores NaN as NULL; reads map NULL back to NaN.
    Stream ids are unsigned 64-bit; they are stored as the signed integer with
    the same bits.
    """

    STATUS_PENDING  = "pending"
    STATUS_RUNNING  = "running"
    STATUS_OK       = "ok"
    STATUS_DIVERGED = "diverged"
    STATUS_FAILED   = "failed"

    def __init__(self, db_path: str):
        self.db_path = db_path
        self._db: Optional[aiosqlite.Connection] = None

    async def open(self) -> None:
        if self.db_path != MEMORY:
            Path(self.db_path).parent.mkdir(parents=True, exist_ok=True)
        self._db = await aiosqlite.connect(self.db_path)
        self._db.row_factory = aiosqlite.Row
        await self._db.execute("PRAGMA journal_mode=WAL")
        await self._db.execute("PRAGMA synchronous=NORMAL")
        await self._create_tables()
        logger.debug(f"Run store opened: {self.db_path}")

    async def close(self) -> None:
        if self._db:
            await self._db.close()
            self._db = None

    async def __aenter__(self) -> "RunDB":
        await self.open()
        return self

    async def __aexit__(self, *exc) -> None:
        await self.close()

    async def _create_tables(self) -> None:
        await self._db.executescript("""
            CREATE TABLE IF NOT EXISTS replications (
                idx          INTEGER PRIMARY KEY,
                stream_id    INTEGER NOT NULL,
                status       TEXT    NOT NULL DEFAULT 'pending',
                steps        INTEGER NOT NULL DEFAULT 0,
                error        TEXT,
                meta         TEXT,
                started_at   TEXT,
                finished_at  TEXT
            );

            CREATE INDEX IF NOT EXISTS idx_replications_status
                ON replications(status);

            CREATE TABLE IF NOT EXISTS series (
                idx    INTEGER NOT NULL,
                n      INTEGER NOT NULL,
                value  REAL,
                bound  REAL,
                PRIMARY KEY (idx, n)
            );

            CREATE TABLE IF NOT EXISTS run_state (
                key   TEXT PRIMARY KEY,
                value TEXT NOT NULL
            );
        """)
        await self._db.commit()

    # ── Replication lifecycle ──────────────────────────────────────────────

    async def register(self, idx: int, stream_id: int) -> None:
        await self._db.execute(
            "INSERT OR REPLACE INTO replications (idx, stream_id, status) VALUES (?, ?, 'pending')",
            (idx, _to_signed(stream_id)),
        )
        await self._db.commit()

    async def mark_running(self, idx: int) -> None:
        await self._db.execute(
            "UPDATE replications SET status='running', started_at=? WHERE idx=?",
            (_now(), idx),
        )
        await self._db.commit()

    async def mark_failed(self, idx: int, error: str) -> None:
        await self._db.execute(
            "UPDATE replications SET status='failed', error=?, finished_at=? WHERE idx=?",
            (error, _now(), idx),
        )
        await self._db.commit()

    async def store_result(self, result: ReplicationResult) -> None:
        """Persist status and series of one finished replication (replaces earlier rows)."""
        await self._db.execute(
            """
            INSERT OR REPLACE INTO replications
                (idx, stream_id, status, steps, error, meta, started_at, finished_at)
            VALUES (?, ?, ?, ?, ?, ?,
                    (SELECT started_at FROM replications WHERE idx=?), ?)
            """,
            (result.idx, _to_signed(result.stream_id), result.status, result.steps, result.error,
             json.dumps(result.meta) if result.meta else None, result.idx, _now()),
        )
        await self._db.execute("DELETE FROM series WHERE idx=?", (result.idx,))
        bounds = result.bound or [None] * len(result.n)
        await self._db.executemany(
            "INSERT INTO series (idx, n, value, bound) VALUES (?, ?, ?, ?)",
            [(result.idx, int(n), _nullable(v), _nullable(b))
             for n, v, b in zip(result.n, result.values, bounds)],
        )
        await self._db.commit()

    # ── Reads ──────────────────────────────────────────────────────────────

    async def load_results(self) -> List[ReplicationResult]:
        """All replications ordered by index, with their series ordered by n."""
        async with self._db.execute(
            "SELECT idx, stream_id, status, steps, error, meta FROM replications ORDER BY idx"
        ) as cur:
            rows = await cur.fetchall()

        results: List[ReplicationResult] = []
        for row in rows:
            async with self._db.execute(
                "SELECT n, value, bound FROM series WHERE idx=? ORDER BY n", (row["idx"],)
            ) as cur:
                points = await cur.fetchall()
            results.append(ReplicationResult(
                idx=row["idx"],
                stream_id=_to_unsigned(row["stream_id"]),
                status=row["status"],
                n=[p["n"] for p in points],
                values=[_nan(p["value"]) for p in points],
                bound=_bounds([p["bound"] for p in points]),
                steps=row["steps"],
                error=row["error"],
                meta=json.loads(row["meta"]) if row["meta"] else {},
            ))
        return results

    # ── Run-level state ────────────────────────────────────────────────────

    async def set_state(self, key: str, value: Any) -> None:
        await self._db.execute(
            "INSERT OR REPLACE INTO run_state (key, value) VALUES (?, ?)",
            (key, json.dumps(value, default=str)),
        )
        await self._db.commit()

    async def get_state(self, key: str, default: Any = None) -> Any:
        async with self._db.execute("SELECT value FROM run_state WHERE key=?", (key,)) as cur:
            row = await cur.fetchone()
            return json.loads(row["value"]) if row else default

    async def reset(self) -> None:
        await self._db.execute("DELETE FROM replications")
        await self._db.execute("DELETE FROM series")
        await self._db.execute("DELETE FROM run_state")
        await self._db.commit()
        logger.debug("Run store reset.")

    # ── Summary ────────────────────────────────────────────────────────────

    async def get_summary(self) -> Dict[str, Any]:
        async with self._db.execute(
            "SELECT status, COUNT(*) AS n FROM replications GROUP BY status"
        ) as cur:
            counts = {row["status"]: row["n"] for row in await cur.fetchall()}

        async with self._db.execute(
            """
            SELECT idx, stream_id, status, steps, error
              FROM replications WHERE status IN ('diverged', 'failed')
             ORDER BY idx
            """
        ) as cur:
            problem_details: List[Dict] = [
                {**dict(r), "stream_id": _to_unsigned(r["stream_id"])} for r in await cur.fetchall()
            ]

        return {
            "ok":              counts.get("ok", 0),
            "diverged":        counts.get("diverged", 0),
            "failed":          counts.get("failed", 0),
            "pending":         counts.get("pending", 0) + counts.get("running", 0),
            "problem_details": problem_details,
        }


_SIGN_BIT = 1 << 63


def _to_signed(stream_id: int) -> int:
    stream_id = int(stream_id)
    return stream_id - (1 << 64) if stream_id >= _SIGN_BIT else stream_id


def _to_unsigned(stored: int) -> int:
    return stored + (1 << 64) if stored < 0 else stored


def _nullable(value: Optional[float]) -> Optional[float]:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return None
    return float(value)


def _nan(value: Optional[float]) -> float:
    return math.nan if value is None else float(value)


def _bounds(raw: List[Optional[float]]) -> List[float]:
    return [_nan(b) for b in raw] if any(b is not None for b in raw) else []


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()
