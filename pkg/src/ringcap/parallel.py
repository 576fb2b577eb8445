"""Order-preserving fan-out of independent solves."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def worker_count() -> int:
    raw = os.environ.get("RINGCAP_THREADS", "1")
    try:
        k = int(raw)
    except ValueError:
        raise ValueError(f"RINGCAP_THREADS must be an integer, got {raw!r}") from None
    return max(1, k)


def pmap(fn, items) -> list:
    """[fn(x) for x in items], run on up to RINGCAP_THREADS threads.

    Results come back in input order, so outputs do not depend on scheduling.
    """
    items = list(items)
    k = min(worker_count(), len(items))
    if k <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=k) as ex:
        return list(ex.map(fn, items))
