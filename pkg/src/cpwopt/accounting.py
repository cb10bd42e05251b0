"""Lightweight scratch-allocation accounting for the sparse kernels.

The sparse code paths report the element counts of their transient
buffers through :func:`note_scratch`, and refuse-by-contract dense
materializations report through :func:`note_dense`.  Tests wrap a region
in :func:`track` and assert bounds on the recorded peaks.  When no
tracker is active the hooks are no-ops.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from dataclasses import dataclass, field

_local = threading.local()


@dataclass
class AllocationLog:
    peak_scratch_elems: int = 0
    dense_allocations: list[int] = field(default_factory=list)

    def scratch(self, n: int) -> None:
        if n > self.peak_scratch_elems:
            self.peak_scratch_elems = n

    def dense(self, n: int) -> None:
        self.dense_allocations.append(n)


def _tracker() -> AllocationLog | None:
    return getattr(_local, "log", None)


def note_scratch(n_elements: int) -> None:
    log = _tracker()
    if log is not None:
        log.scratch(int(n_elements))


def note_dense(n_elements: int) -> None:
    log = _tracker()
    if log is not None:
        log.dense(int(n_elements))


@contextmanager
def track():
    """Record kernel scratch peaks within the enclosed region."""
    prev = _tracker()
    log = AllocationLog()
    _local.log = log
    try:
        yield log
    finally:
        _local.log = prev
