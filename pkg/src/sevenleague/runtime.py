"""Execution backends for per-path work.

Paths are split into contiguous, balanced groups and each group is handed
to one worker. Tasks only write their own rows of caller-owned arrays, and
all randomness is keyed by path id, so the backend never changes results.
Worker threads run numpy kernels that release the GIL.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

__all__ = [
    "Partition",
    "partition_paths",
    "GroupTaskError",
    "SequentialBackend",
    "PoolBackend",
    "parse_backend",
    "for_each_group",
    "timed",
]


@dataclass(frozen=True)
class Partition:
    groups: tuple[tuple[int, int], ...]  # half-open [lo, hi) ranges

    def __len__(self):
        return len(self.groups)

    @property
    def sizes(self) -> list[int]:
        return [hi - lo for lo, hi in self.groups]


def partition_paths(n_paths: int, n_groups: int) -> Partition:
    """Contiguous ranges whose sizes differ by at most one."""
    if n_groups < 1:
        raise ValueError("n_groups must be >= 1")
    if n_paths <= 0:
        return Partition(())
    k = min(n_groups, n_paths)
    base, extra = divmod(n_paths, k)
    groups, lo = [], 0
    for g in range(k):
        hi = lo + base + (1 if g < extra else 0)
        groups.append((lo, hi))
        lo = hi
    return Partition(tuple(groups))


class GroupTaskError(RuntimeError):
    def __init__(self, group_index: int, group: tuple[int, int], cause: BaseException):
        super().__init__(f"task failed in group {group_index} (paths {group[0]}..{group[1] - 1}): {cause!r}")
        self.group_index = group_index
        self.group = group


class SequentialBackend:
    n_workers = 1
    name = "seq"

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False

    def for_each_group(self, partition: Partition, task, *args) -> None:
        for g, (lo, hi) in enumerate(partition.groups):
            try:
                task(lo, hi, *args)
            except Exception as exc:
                raise GroupTaskError(g, (lo, hi), exc) from exc

    def __repr__(self):
        return "SequentialBackend()"


class PoolBackend:
    """Thread pool of ``n_workers``; one group per worker per step.

    The executor lives for the duration of a ``with`` block so that it is
    reused across time steps; outside a block each call spins up its own.
    """

    def __init__(self, n_workers: int | None = None):
        if n_workers is None:
            n_workers = os.cpu_count() or 1
        if n_workers < 1:
            raise ValueError("n_workers must be >= 1")
        self.n_workers = int(n_workers)
        self._executor = None
        self._depth = 0

    @property
    def name(self):
        return f"pool:{self.n_workers}"

    def __enter__(self):
        if self._depth == 0:
            self._executor = ThreadPoolExecutor(max_workers=self.n_workers)
        self._depth += 1
        return self

    def __exit__(self, *exc):
        self._depth -= 1
        if self._depth == 0:
            self._executor.shutdown(wait=True)
            self._executor = None
        return False

    def for_each_group(self, partition: Partition, task, *args) -> None:
        if not partition.groups:
            return
        with self:
            futures = [self._executor.submit(task, lo, hi, *args) for lo, hi in partition.groups]
            # barrier: wait for every group, then report the first failure by group order
            errors = [f.exception() for f in futures]
        for g, err in enumerate(errors):
            if err is not None:
                raise GroupTaskError(g, partition.groups[g], err) from err

    def __repr__(self):
        return f"PoolBackend(n_workers={self.n_workers})"


def parse_backend(spec: str | None):
    """``seq`` | ``pool`` | ``pool:K``."""
    if spec in (None, "", "seq", "sequential"):
        return SequentialBackend()
    if spec == "pool":
        return PoolBackend()
    if spec.startswith("pool:"):
        try:
            k = int(spec.split(":", 1)[1])
        except ValueError:
            raise ValueError(f"bad worker count in backend {spec!r}") from None
        return PoolBackend(k)
    raise ValueError(f"unknown backend {spec!r} (expected seq, pool or pool:K)")


def for_each_group(backend, partition: Partition, task, *args) -> None:
    backend.for_each_group(partition, task, *args)


def timed(run):
    """Run ``run()`` and return ``(result, wall_seconds)``."""
    t0 = time.perf_counter()
    result = run()
    return result, time.perf_counter() - t0
