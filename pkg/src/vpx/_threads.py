"""Worker-count policy (``VPX_THREADS``)."""
from __future__ import annotations

import os


def num_threads() -> int:
    raw = os.environ.get("VPX_THREADS")
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise ValueError(f"VPX_THREADS must be an integer, got {raw!r}") from None
        if n < 1:
            raise ValueError("VPX_THREADS must be >= 1")
        return n
    return os.cpu_count() or 1


def limit_threads():
    """Cap BLAS pools at ``num_threads()``; returns the threadpoolctl handle."""
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=num_threads())
