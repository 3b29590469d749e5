"""Seeded per-sample execution, serial or over a process pool.

Each task sees only ``(payload, sample_index)`` and runs with BLAS pinned to
one thread, so results do not depend on the worker count or on scheduling.
"""

from __future__ import annotations

import multiprocessing as mp
from concurrent.futures import ProcessPoolExecutor

import numpy as np
from threadpoolctl import threadpool_limits

# numerical failures that become a flagged row instead of aborting a batch
SAMPLE_ERRORS = (np.linalg.LinAlgError, ArithmeticError, ValueError, RuntimeError)


def _guarded(fn, payload, index):
    with threadpool_limits(limits=1):
        try:
            row = fn(payload, index)
            row.setdefault("flagged", False)
        except SAMPLE_ERRORS as exc:
            row = {"flagged": True, "error": f"{type(exc).__name__}: {exc}"}
    row["sample_index"] = int(index)
    return row


def _call(args):
    return _guarded(*args)


def map_samples(fn, payload, indices, workers: int = 1) -> list:
    """Run ``fn(payload, i)`` for every ``i``; rows come back sorted by index.

    ``fn`` must be a module-level function and ``payload`` picklable when
    ``workers > 1``.
    """
    indices = [int(i) for i in indices]
    if workers <= 1 or len(indices) <= 1:
        rows = [_guarded(fn, payload, i) for i in indices]
    else:
        ctx = mp.get_context("spawn")
        with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
            rows = list(pool.map(_call, [(fn, payload, i) for i in indices]))
    return sorted(rows, key=lambda r: r["sample_index"])
