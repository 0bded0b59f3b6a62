"""
Concurrent Monte-Carlo replication runner.

Architecture
------------
Queue
    Replication indices ``0..R-1`` are registered in the run store and
    pushed onto an asyncio.Queue.

Workers (concurrent)
    N worker coroutines drain the queue.  Each hands the CPU-bound
    replication to an executor through ``loop.run_in_executor``: a process
    pool for N > 1, a single thread for N = 1.  A replication owns its
    RngStream (keyed by master seed XOR index) so results do not depend on
    which worker ran it.

Reduction
    Results are read back from the store ordered by replication index, so
    the aggregate is identical for every worker count.
"""

import asyncio
import logging
import time
from concurrent.futures import Executor, ProcessPoolExecutor, ThreadPoolExecutor
from typing import List, Tuple

from .db import RunDB
from .experiment import (
    STATUS_DIVERGED,
    STATUS_OK,
    ReplicationResult,
    run_replication,
    stream_id_for,
)

logger = logging.getLogger(__name__)


class Replicator:

    def __init__(self, plan, db: RunDB, replications: int, workers: int = 1):
        self.plan         = plan
        self.db           = db
        self.replications = replications
        self.n_workers    = max(1, min(workers, replications))

    def _executor(self) -> Executor:
        if self.n_workers == 1:
            return ThreadPoolExecutor(max_workers=1)
        return ProcessPoolExecutor(max_workers=self.n_workers)

    # ── Public entry point ─────────────────────────────────────────────────

    async def run(self) -> List[ReplicationResult]:
        """
        Execute every replication and return the stored results in index order.
        """
        queue: asyncio.Queue[int] = asyncio.Queue()
        for idx in range(self.replications):
            await self.db.register(idx, stream_id_for(self.plan.seed, idx))
            queue.put_nowait(idx)

        logger.info(
            f"Queued {self.replications} replication(s) of {self.plan.kind}. "
            f"Starting {self.n_workers} worker(s)."
        )
        started = time.monotonic()

        with self._executor() as executor:
            tasks = [
                asyncio.create_task(self._worker(i, queue, executor))
                for i in range(self.n_workers)
            ]
            results = await asyncio.gather(*tasks, return_exceptions=False)

        ok       = sum(r[0] for r in results)
        diverged = sum(r[1] for r in results)
        failed   = sum(r[2] for r in results)
        elapsed  = time.monotonic() - started
        await self.db.set_state("elapsed_seconds", round(elapsed, 3))

        logger.info(
            f"Replications complete — ok: {ok}, diverged: {diverged}, "
            f"failed: {failed} ({elapsed:.1f}s)"
        )
        return await self.db.load_results()

    # ── Worker coroutines ──────────────────────────────────────────────────

    async def _worker(
        self, worker_id: int, queue: asyncio.Queue, executor: Executor
    ) -> Tuple[int, int, int]:
        ok = diverged = failed = 0
        log = logging.getLogger(f"{__name__}.w{worker_id}")
        loop = asyncio.get_running_loop()

        while True:
            try:
                idx = queue.get_nowait()
            except asyncio.QueueEmpty:
                break

            await self.db.mark_running(idx)
            try:
                result = await loop.run_in_executor(executor, run_replication, self.plan, idx)
            except Exception as exc:
                log.error(f"[FAIL] replication {idx}: {exc}")
                await self.db.mark_failed(idx, str(exc))
                failed += 1
                queue.task_done()
                continue

            await self.db.store_result(result)
            if result.status == STATUS_OK:
                log.debug(f"[OK]   replication {idx} ({result.steps} steps)")
                ok += 1
            elif result.status == STATUS_DIVERGED:
                log.warning(f"[DIV]  replication {idx}: {result.error}")
                diverged += 1
            else:
                log.error(f"[FAIL] replication {idx}: {result.error}")
                failed += 1
            queue.task_done()

        return ok, diverged, failed
