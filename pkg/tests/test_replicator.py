import asyncio
import math

import pytest

from fbf_tools.core.db import MEMORY, RunDB
from fbf_tools.core.experiment import (
    STATUS_DIVERGED,
    STATUS_OK,
    ExperimentConfig,
    ReplicationResult,
    build_fbf_plan,
)
from fbf_tools.core.replicator import Replicator


def _plan(bench, replications=4, horizon=25):
    cfg = ExperimentConfig.from_dict({
        "benchmark": {"kind": "affine"},
        "noise": {"model": "gaussian_decay", "sigma0": 0.3, "p": 1.0},
        "inertia": 0.2,
        "eps": {"eps0": 0.1, "theta": 2.0},
        "run": {"replications": replications, "horizon": horizon, "seed": 17},
    })
    return build_fbf_plan(cfg, bench)


async def _replicate(plan, replications, workers):
    async with RunDB(MEMORY) as db:
        results = await Replicator(plan, db, replications, workers).run()
        summary = await db.get_summary()
        elapsed = await db.get_state("elapsed_seconds")
    return results, summary, elapsed


# ── Run store ──────────────────────────────────────────────────────────────

def test_store_round_trip_maps_nan_to_null_and_back():
    async def scenario():
        async with RunDB(MEMORY) as db:
            await db.register(0, 5)
            await db.register(1, 4)
            await db.store_result(ReplicationResult(
                0, 5, STATUS_OK, [9, 19], [0.5, math.nan], [1.0, 0.8],
                steps=20, meta={"certificate": {"S": 0.0}},
            ))
            await db.store_result(ReplicationResult(
                1, 4, STATUS_DIVERGED, [0, 1], [1.0, 4.0], steps=1, error="blew up",
            ))
            async with db._db.execute("SELECT value FROM series WHERE idx=0 AND n=19") as cur:
                raw = await cur.fetchone()
            return raw["value"], await db.load_results(), await db.get_summary()

    raw, results, summary = asyncio.run(scenario())
    assert raw is None
    first, second = results
    assert first.values[0] == 0.5 and math.isnan(first.values[1])
    assert first.bound == [1.0, 0.8]
    assert first.meta == {"certificate": {"S": 0.0}}
    assert second.bound == []
    assert second.error == "blew up"
    assert summary["ok"] == 1 and summary["diverged"] == 1 and summary["failed"] == 0
    assert [d["idx"] for d in summary["problem_details"]] == [1]


def test_pending_and_failed_counts():
    async def scenario():
        async with RunDB(MEMORY) as db:
            for idx in range(3):
                await db.register(idx, idx)
            await db.mark_running(1)
            await db.mark_failed(2, "worker crashed")
            return await db.get_summary()

    summary = asyncio.run(scenario())
    assert summary["pending"] == 2
    assert summary["failed"] == 1
    assert summary["problem_details"][0]["error"] == "worker crashed"


def test_state_values_and_reset():
    async def scenario():
        async with RunDB(MEMORY) as db:
            await db.set_state("config", {"horizon": 10})
            before = await db.get_state("config")
            await db.reset()
            return before, await db.get_state("config", "gone")

    assert asyncio.run(scenario()) == ({"horizon": 10}, "gone")


def test_file_backed_store_persists(tmp_path):
    path = str(tmp_path / "runs" / "store.db")

    async def write():
        async with RunDB(path) as db:
            await db.register(0, 0)
            await db.store_result(ReplicationResult(0, 0, STATUS_OK, [0], [2.0], steps=0))

    async def read():
        async with RunDB(path) as db:
            return await db.load_results()

    asyncio.run(write())
    (result,) = asyncio.run(read())
    assert result.values == [2.0]


# ── Replicator ─────────────────────────────────────────────────────────────

def test_single_worker_run_is_ordered_and_complete(small_affine):
    plan = _plan(small_affine)
    results, summary, elapsed = asyncio.run(_replicate(plan, 4, 1))
    assert [r.idx for r in results] == [0, 1, 2, 3]
    assert [r.stream_id for r in results] == [17, 16, 19, 18]
    assert all(r.status == STATUS_OK and r.n == list(range(26)) for r in results)
    assert summary["ok"] == 4
    assert elapsed >= 0
    assert results[0].values != results[1].values


def test_runs_repeat_exactly(small_affine):
    plan = _plan(small_affine, replications=3)
    first, _, _ = asyncio.run(_replicate(plan, 3, 1))
    second, _, _ = asyncio.run(_replicate(plan, 3, 1))
    assert [r.values for r in first] == [r.values for r in second]


@pytest.mark.slow
def test_worker_count_does_not_change_results(small_affine):
    plan = _plan(small_affine, replications=4)
    serial, _, _ = asyncio.run(_replicate(plan, 4, 1))
    pooled, _, _ = asyncio.run(_replicate(plan, 4, 2))
    assert [r.values for r in serial] == [r.values for r in pooled]


def test_worker_count_is_capped_by_replications(small_affine):
    replicator = Replicator(_plan(small_affine, replications=2), RunDB(MEMORY), 2, workers=8)
    assert replicator.n_workers == 2


def test_store_keeps_full_width_stream_ids():
    top = (1 << 64) - 1

    async def scenario():
        async with RunDB(MEMORY) as db:
            await db.register(0, top)
            await db.register(1, top - 1)
            await db.store_result(ReplicationResult(0, top, STATUS_OK, [0], [1.0], steps=0))
            await db.store_result(ReplicationResult(1, top - 1, STATUS_DIVERGED, [0], [2.0], error="x"))
            return await db.load_results(), await db.get_summary()

    results, summary = asyncio.run(scenario())
    assert [r.stream_id for r in results] == [top, top - 1]
    assert summary["problem_details"][0]["stream_id"] == top - 1
