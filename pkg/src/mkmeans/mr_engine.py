"""Deterministic local map/shuffle/reduce over a thread pool.

The worker count only controls how many map (and reduce) tasks run at the
same time.  Chunking is decided by the caller, values are shuffled into a
fixed order before reduction, and keys are reduced in ascending order, so
a job's output does not depend on ``workers``.  Kernels in
:mod:`mkmeans.kernels` release the GIL, which is what makes threads useful
here.
"""
from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Sequence

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class KeyedRecord:
    key: Any
    value: Any


@dataclass(frozen=True)
class EngineConfig:
    workers: int = 1
    chunk_size: int = 1 << 16

    def __post_init__(self):
        if int(self.workers) < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")
        if int(self.chunk_size) < 1:
            raise ValueError(f"chunk_size must be >= 1, got {self.chunk_size}")


@dataclass(frozen=True)
class JobStats:
    phase: str
    workers: int
    records: int
    seconds: float


class JobError(RuntimeError):
    """A map or reduce function raised; carries where it happened."""

    def __init__(self, stage: str, *, chunk: int | None = None, key: Any = None, cause: BaseException):
        where = f"chunk {chunk}" if stage == "map" else f"key {key!r}"
        super().__init__(f"{stage} failed at {where}: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.chunk = chunk
        self.key = key
        self.__cause__ = cause


def partition(records: Sequence, n: int) -> list[list]:
    """Split into ``n`` contiguous chunks whose sizes differ by at most one."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    records = list(records)
    q, r = divmod(len(records), n)
    out, pos = [], 0
    for i in range(n):
        size = q + (1 if i < r else 0)
        out.append(records[pos : pos + size])
        pos += size
    return out


def block_ranges(n: int, chunk_size: int) -> list[tuple[int, int]]:
    """``[start, stop)`` ranges covering ``range(n)`` in steps of ``chunk_size``."""
    return [(s, min(s + chunk_size, n)) for s in range(0, n, chunk_size)]


def _as_pair(item):
    if isinstance(item, KeyedRecord):
        return item.key, item.value
    key, value = item
    return key, value


@dataclass
class Engine:
    """Runs jobs on a pool of ``config.workers`` threads.

    Use as a context manager (or call :meth:`close`) to release the pool.
    Timings of every job are appended to :attr:`stats`.
    """

    config: EngineConfig = field(default_factory=EngineConfig)
    stats: list[JobStats] = field(default_factory=list)

    def __post_init__(self):
        self._pool = ThreadPoolExecutor(max_workers=self.config.workers) if self.config.workers > 1 else None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def close(self):
        if self._pool is not None:
            self._pool.shutdown(wait=True)
            self._pool = None

    @property
    def workers(self) -> int:
        return self.config.workers

    def _map(self, fn: Callable, items: Sequence) -> list:
        if self._pool is None or len(items) <= 1:
            return [fn(item) for item in items]
        return list(self._pool.map(fn, items))

    def run_job(
        self,
        chunks: Sequence[Iterable],
        map_fn: Callable[[Any], Iterable],
        reduce_fn: Callable[[Any, list], Any],
        *,
        sort_key: Callable[[Any], Any] | None = None,
        phase: str = "job",
    ) -> dict:
        """Map every record of every chunk, shuffle by key, reduce per key.

        ``map_fn(record)`` returns an iterable of ``(key, value)`` pairs or
        :class:`KeyedRecord`.  Values for a key reach ``reduce_fn`` ordered by
        ``sort_key(value)`` when given, otherwise by where they were emitted
        (chunk index, record index, emission index).  The result maps each key
        to its reduce output, in ascending key order.
        """
        t0 = time.perf_counter()

        def map_task(indexed):
            ci, chunk = indexed
            out = []
            nrec = 0
            try:
                for ri, record in enumerate(chunk):
                    nrec += 1
                    for ei, item in enumerate(map_fn(record)):
                        key, value = _as_pair(item)
                        out.append((key, (ci, ri, ei), value))
            except Exception as exc:
                raise JobError("map", chunk=ci, cause=exc) from exc
            return nrec, out

        mapped = self._map(map_task, list(enumerate(chunks)))

        # shuffle barrier
        groups: dict[Any, list] = {}
        nrecords = 0
        for nrec, emitted in mapped:
            nrecords += nrec
            for key, pos, value in emitted:
                groups.setdefault(key, []).append((pos, value))
        try:
            keys = sorted(groups)
        except TypeError as exc:
            raise TypeError(f"job keys must be mutually comparable: {exc}") from None

        def reduce_task(key):
            entries = groups[key]
            if sort_key is None:
                entries.sort(key=lambda e: e[0])
                values = [v for _, v in entries]
            else:
                entries.sort(key=lambda e: (sort_key(e[1]), e[0]))
                values = [v for _, v in entries]
            try:
                return reduce_fn(key, values)
            except Exception as exc:
                raise JobError("reduce", key=key, cause=exc) from exc

        results = self._map(reduce_task, keys)
        seconds = time.perf_counter() - t0
        self.stats.append(JobStats(phase, self.workers, nrecords, seconds))
        log.debug("job %s: %d records, %d keys, %.3fs", phase, nrecords, len(keys), seconds)
        return dict(zip(keys, results))

    def map_blocks(self, n: int, fn: Callable[[int, int, int], Any], *, phase: str = "job") -> list:
        """Map ``fn(block_index, start, stop)`` over fixed-size index blocks.

        A thin specialization of :meth:`run_job` for array-backed data: one
        record per chunk, one value per record, all under a single key.
        Returns the per-block results in block order.
        """
        blocks = block_ranges(n, self.config.chunk_size)
        chunks = [[(bi, s, e)] for bi, (s, e) in enumerate(blocks)]
        out = self.run_job(
            chunks,
            lambda rec: [(0, fn(*rec))],
            lambda _key, values: values,
            phase=phase,
        )
        self.stats[-1] = JobStats(phase, self.workers, n, self.stats[-1].seconds)
        return out.get(0, [])


def run_job(chunks, map_fn, reduce_fn, config: EngineConfig | None = None, *, sort_key=None, phase="job") -> dict:
    """One-shot :meth:`Engine.run_job` with a temporary pool."""
    with Engine(config or EngineConfig()) as engine:
        return engine.run_job(chunks, map_fn, reduce_fn, sort_key=sort_key, phase=phase)
