"""Runtime multiply-accumulate counter.

Primitives that do dense arithmetic (matrix products and convolutions) report
their MACs here during the forward pass. Counting is scoped with a context
manager and is local to the calling thread/context, so concurrent tapes never
mix their counts. Backward passes are not counted.
"""
from __future__ import annotations

import contextvars
from collections import defaultdict
from contextlib import contextmanager
from collections.abc import Iterator

_ACTIVE: contextvars.ContextVar["FlopCounter | None"] = contextvars.ContextVar("cea_flop_counter", default=None)


class FlopCounter:
    """Accumulates MACs per primitive kind."""

    def __init__(self) -> None:
        self.by_kind: dict[str, int] = defaultdict(int)

    @property
    def total(self) -> int:
        return sum(self.by_kind.values())

    def add(self, kind: str, macs: int) -> None:
        self.by_kind[kind] += int(macs)


def record_macs(kind: str, macs: int) -> None:
    """Add ``macs`` to the active counter, if any."""
    counter = _ACTIVE.get()
    if counter is not None:
        counter.add(kind, macs)


@contextmanager
def count_macs() -> Iterator[FlopCounter]:
    """Count MACs of every primitive executed inside the block.

    Usage:
        with count_macs() as counter:
            restore(image, state, config)
        print(counter.total)
    """
    counter = FlopCounter()
    token = _ACTIVE.set(counter)
    try:
        yield counter
    finally:
        _ACTIVE.reset(token)
