"""Device/tier microbenchmark: fixed-size transfers under a thread grid.

One run measures a single cell (pattern x rw-mix x transfer size x jobs x
queue depth) against either a raw file or a storage tier and produces one
report row. Each of ``jobs`` workers keeps ``qd`` operations outstanding by
running ``qd`` issuing threads; sequential workers walk disjoint contiguous
stripes, random workers sample offsets uniformly with no no-revisit
guarantee.

Raw-file targets attempt O_DIRECT (page-aligned buffers via anonymous mmap,
``preadv``/``pwritev``) and fall back to buffered I/O with a warning where
the platform or filesystem refuses it; the report records which mode ran in
its ``direct`` column. Workers can optionally run as separate OS processes
for file targets.
"""

from __future__ import annotations

import logging
import math
import mmap
import multiprocessing
import os
import random
import threading
import time
from array import array
from dataclasses import dataclass

from ..errors import ConfigError
from ..tier import TierConfig, open_tier, parse_tier_spec
from .report import BenchReport

log = logging.getLogger("stagespace.devbench")

PATTERNS = ("seq", "rand")
RW_MODES = ("read", "write", "mix50")

DEFAULT_SIZE = 256 << 20


@dataclass
class DevbenchConfig:
    target: str
    pattern: str = "seq"
    rw: str = "write"
    bs: int = 4096
    jobs: int = 1
    qd: int = 1
    runtime_s: float = 2.0
    total_bytes: int = 0  # 0 = unbounded (runtime-capped)
    size_bytes: int = DEFAULT_SIZE
    seed: int = 0
    direct: bool | None = None  # None = attempt O_DIRECT on files
    use_processes: bool = False

    def validate(self) -> "DevbenchConfig":
        if self.pattern not in PATTERNS:
            raise ConfigError(f"pattern must be one of {PATTERNS}")
        if self.rw not in RW_MODES:
            raise ConfigError(f"rw must be one of {RW_MODES}")
        if self.bs < 512:
            raise ConfigError("transfer size must be >= 512 bytes")
        if self.jobs < 1 or self.qd < 1:
            raise ConfigError("jobs and qd must be >= 1")
        if self.runtime_s < 0 or self.total_bytes < 0:
            raise ConfigError("caps cannot be negative")
        if self.runtime_s == 0 and self.total_bytes == 0:
            raise ConfigError("at most one of runtime_s/total_bytes may be "
                              "0 (unbounded)")
        if self.size_bytes < self.bs * self.jobs:
            raise ConfigError(f"target size {self.size_bytes} too small for "
                              f"{self.jobs} jobs x {self.bs}-byte transfers")
        tier = self.tier_config()
        if tier is not None and self.use_processes:
            raise ConfigError("process workers require a raw-file target")
        return self

    def tier_config(self) -> TierConfig | None:
        """A target parseable as a tier spec is one; anything else is a
        file path."""
        try:
            return parse_tier_spec(self.target)
        except ConfigError:
            return None


class _Budget:
    """Pre-issue reservation so bytes_moved is exactly ops x bs."""

    def __init__(self, bs: int, total_bytes: int, deadline: float | None):
        self._lock = threading.Lock()
        self._bs = bs
        self._left = total_bytes // bs if total_bytes else None
        self._deadline = deadline

    def reserve(self) -> bool:
        if self._deadline is not None and time.monotonic() >= self._deadline:
            return False
        if self._left is None:
            return True
        with self._lock:
            if self._left == 0:
                return False
            self._left -= 1
            return True


class _SeqCursor:
    """Per-job wrap-around cursor over that job's stripe of op slots."""

    def __init__(self, first_op: int, op_count: int):
        self._lock = threading.Lock()
        self._first = first_op
        self._count = op_count
        self._next = 0

    def next_index(self) -> int:
        with self._lock:
            index = self._next
            self._next = (self._next + 1) % self._count
        return self._first + index


def _percentile99(latencies: array) -> float:
    if not latencies:
        return 0.0
    ordered = sorted(latencies)
    return ordered[max(0, math.ceil(0.99 * len(ordered)) - 1)]


# --------------------------------------------------------------------------
# targets


class _FileTarget:
    """Raw-file backend; resolves the O_DIRECT question once up front."""

    def __init__(self, cfg: DevbenchConfig):
        self.path = cfg.target
        self.bs = cfg.bs
        fd = os.open(cfg.target, os.O_RDWR | os.O_CREAT, 0o644)
        try:
            if os.fstat(fd).st_size < cfg.size_bytes:
                os.ftruncate(fd, cfg.size_bytes)
        finally:
            os.close(fd)
        self.direct = self._probe_direct(cfg)

    def _probe_direct(self, cfg: DevbenchConfig) -> bool:
        if cfg.direct is False:
            return False
        if not hasattr(os, "O_DIRECT"):
            if cfg.direct is True:
                raise ConfigError("O_DIRECT is not available on this platform")
            return False
        try:
            fd = os.open(self.path, os.O_RDWR | os.O_DIRECT)
        except OSError as exc:
            if cfg.direct is True:
                raise ConfigError(f"O_DIRECT open failed: {exc}") from None
            log.warning("O_DIRECT unavailable on %s (%s); falling back to "
                        "buffered I/O", self.path, exc)
            return False
        try:
            with mmap.mmap(-1, self.bs) as buf:
                os.preadv(fd, [buf], 0)
        except OSError as exc:
            if cfg.direct is True:
                raise ConfigError(f"O_DIRECT transfer failed: {exc}") from None
            log.warning("O_DIRECT rejected %d-byte transfers on %s (%s); "
                        "falling back to buffered I/O", self.bs, self.path,
                        exc)
            return False
        finally:
            os.close(fd)
        return True

    def opener(self):
        flags = os.O_RDWR | (os.O_DIRECT if self.direct else 0)
        return os.open(self.path, flags)

    def close(self):
        pass


class _TierTarget:
    """Tier backend: a pool of bs-sized chunks indexed like file offsets."""

    direct = False

    def __init__(self, cfg: DevbenchConfig, tier_cfg: TierConfig):
        if tier_cfg.capacity_bytes < cfg.size_bytes:
            raise ConfigError(f"tier capacity {tier_cfg.capacity_bytes} "
                              f"smaller than bench size {cfg.size_bytes}")
        self.tier = open_tier(tier_cfg)
        self.handles = [self.tier.allocate(cfg.bs)
                        for _ in range(cfg.size_bytes // cfg.bs)]

    def close(self):
        self.tier.close()


# --------------------------------------------------------------------------
# workers


def _issue_loop(cfg: DevbenchConfig, target, job: int, thread_seed: int,
                budget: _Budget, cursor: _SeqCursor | None, start_gate,
                out: list):
    """One issuing thread: reserve, pick a slot, transfer, record latency."""
    total_ops = cfg.size_bytes // cfg.bs
    rng = random.Random(thread_seed)
    latencies = array("d")
    is_file = isinstance(target, _FileTarget)
    fd = target.opener() if is_file else -1
    buf = mmap.mmap(-1, cfg.bs)  # page-aligned, as O_DIRECT requires
    buf.write(os.urandom(cfg.bs))
    payload = bytes(buf) if not is_file else None
    ops = 0
    try:
        start_gate.wait()
        t_start = time.monotonic()
        while budget.reserve():
            index = cursor.next_index() if cursor is not None \
                else rng.randrange(total_ops)
            do_read = cfg.rw == "read" or (cfg.rw == "mix50"
                                           and rng.random() < 0.5)
            t0 = time.perf_counter()
            if is_file:
                offset = index * cfg.bs
                if do_read:
                    got = os.preadv(fd, [buf], offset)
                else:
                    got = os.pwritev(fd, [buf], offset)
                if got != cfg.bs:
                    raise OSError(f"short transfer: {got} of {cfg.bs}")
            else:
                handle = target.handles[index]
                if do_read:
                    target.tier.read_chunk(handle)
                else:
                    target.tier.write_chunk(handle, payload)
            latencies.append(time.perf_counter() - t0)
            ops += 1
        t_end = time.monotonic()
        out.append((ops, t_start, t_end, latencies))
    except Exception as exc:  # noqa: BLE001 - re-raised by the coordinator
        out.append(exc)
    finally:
        if fd >= 0:
            os.close(fd)
        buf.close()


def _run_job_threads(cfg: DevbenchConfig, target, job: int, budget: _Budget,
                     start_gate) -> list:
    stripe_ops = (cfg.size_bytes // cfg.bs) // cfg.jobs
    cursor = _SeqCursor(job * stripe_ops, stripe_ops) \
        if cfg.pattern == "seq" else None
    out: list = []
    threads = []
    for slot in range(cfg.qd):
        thread_seed = (cfg.seed * 1_000_003 + job * 1009 + slot) & (2**63 - 1)
        t = threading.Thread(
            target=_issue_loop,
            args=(cfg, target, job, thread_seed, budget, cursor, start_gate,
                  out),
            name=f"devbench-j{job}q{slot}")
        t.start()
        threads.append(t)
    for t in threads:
        t.join()
    return out


def _job_process(cfg: DevbenchConfig, job: int, deadline: float | None,
                 job_bytes: int, queue):
    try:
        target = _FileTarget(cfg)
        budget = _Budget(cfg.bs, job_bytes, deadline)
        gate = threading.Barrier(cfg.qd)
        queue.put((job, _run_job_threads(cfg, target, job, budget, gate)))
    except Exception as exc:  # noqa: BLE001 - surfaced by the parent
        queue.put((job, exc))


def _prefill(cfg: DevbenchConfig, target):
    """Make every read slot hit real data, not holes (untimed)."""
    if cfg.rw == "write":
        return
    if isinstance(target, _FileTarget):
        block = os.urandom(1 << 20)
        fd = os.open(target.path, os.O_RDWR)
        try:
            written = 0
            while written < cfg.size_bytes:
                step = min(len(block), cfg.size_bytes - written)
                os.pwrite(fd, block[:step], written)
                written += step
            os.fsync(fd)
        finally:
            os.close(fd)
    else:
        payload = os.urandom(cfg.bs)
        for handle in target.handles:
            target.tier.write_chunk(handle, payload)


def run_devbench(config: DevbenchConfig) -> BenchReport:
    """Execute one cell and return a single-row devbench report."""
    cfg = config.validate()
    tier_cfg = cfg.tier_config()
    target = _TierTarget(cfg, tier_cfg) if tier_cfg is not None \
        else _FileTarget(cfg)
    try:
        _prefill(cfg, target)
        deadline = (time.monotonic() + cfg.runtime_s) if cfg.runtime_s \
            else None
        if cfg.use_processes:
            results = _run_processes(cfg, deadline)
        else:
            budget = _Budget(cfg.bs, cfg.total_bytes, deadline)
            gate = threading.Barrier(cfg.jobs * cfg.qd)
            per_job = [[] for _ in range(cfg.jobs)]
            runners = [threading.Thread(
                target=lambda j=job: per_job[j].extend(
                    _run_job_threads(cfg, target, j, budget, gate)),
                name=f"devbench-job{job}") for job in range(cfg.jobs)]
            for t in runners:
                t.start()
            for t in runners:
                t.join()
            results = [r for group in per_job for r in group]
    finally:
        target.close()

    failures = [r for r in results if isinstance(r, Exception)]
    if failures:
        raise failures[0]
    ops = sum(r[0] for r in results)
    starts = [r[1] for r in results]
    ends = [r[2] for r in results]
    latencies = array("d")
    for r in results:
        latencies.extend(r[3])
    elapsed = (max(ends) - min(starts)) if results and ops else 0.0
    bytes_moved = ops * cfg.bs
    mib_per_s = bytes_moved / (1 << 20) / elapsed if elapsed else 0.0
    iops = ops / elapsed if elapsed else 0.0
    mean_lat_us = (sum(latencies) / len(latencies)) * 1e6 if latencies \
        else 0.0
    p99_lat_us = _percentile99(latencies) * 1e6

    report = BenchReport("devbench")
    report.add(cfg.pattern, cfg.rw, cfg.bs, cfg.jobs, cfg.qd,
               int(target.direct), round(mib_per_s, 3), round(iops, 3),
               round(mean_lat_us, 3), round(p99_lat_us, 3))
    return report


def _run_processes(cfg: DevbenchConfig, deadline: float | None) -> list:
    """One OS process per job; the bytes cap is split evenly across jobs."""
    ctx = multiprocessing.get_context("fork")
    queue = ctx.SimpleQueue()
    share, extra = divmod(cfg.total_bytes // cfg.bs if cfg.total_bytes else 0,
                          cfg.jobs)
    procs = []
    for job in range(cfg.jobs):
        job_ops = share + (1 if job < extra else 0)
        proc = ctx.Process(target=_job_process,
                           args=(cfg, job, deadline, job_ops * cfg.bs, queue))
        proc.start()
        procs.append(proc)
    results = []
    for _ in procs:
        job, payload = queue.get()
        if isinstance(payload, Exception):
            for p in procs:
                p.terminate()
            raise payload
        results.extend(payload)
    for p in procs:
        p.join()
    return results
