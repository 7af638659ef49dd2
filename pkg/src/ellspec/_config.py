"""Process-wide knobs: size of the worker pool shared by the quadrature
and Monte Carlo layers."""

import os

_max_workers = os.cpu_count() or 1


def set_max_workers(n: int) -> None:
    global _max_workers
    if n < 1:
        raise ValueError("need at least one worker")
    _max_workers = int(n)


def get_max_workers() -> int:
    return _max_workers
