"""Chunk storage backends: heap arena, memory-mapped file, latency wrapper.

A tier hands out non-overlapping arena regions (chunks), stores payload
bytes in them, and reports usage counters. The mmap tier persists its
chunk table inside the backing file so flushed chunks survive process
death; the heap tier keeps everything in process memory; the delayed
wrapper injects a configurable latency model on the data path for device
emulation at desk scale.

On-disk layout of an mmap tier file (little-endian):

    bytes 0..16    magic "STAGESPACE-TIER1"
    bytes 16..24   u64 arena capacity
    bytes 24..32   u64 chunk table high-water slot count
    bytes 32..     chunk table: 40-byte slots (u64 offset, u64 length,
                   u64 generation, 16-byte chunk key); slot count fixed
                   when the file is created, derived from the capacity
    arena          starts at the next page boundary, capacity bytes

A slot with length 0 is dead. Chunks are only ever persisted by
flush_chunk, so a reopened tier contains exactly the flushed chunks.
"""

import mmap
import os
import struct
import threading
import time
from dataclasses import dataclass, field

from stagespace.errors import CapacityError, ConfigError, LifecycleError

MAGIC = b"STAGESPACE-TIER1"
HEADER_SIZE = 32
SLOT_SIZE = 40
NULL_KEY = b"\x00" * 16
MIB = 1 << 20

DEFAULT_CAPACITY = 256 * MIB


@dataclass(frozen=True)
class ChunkHandle:
    """Ticket for one stored chunk; valid only against the issuing tier."""

    offset: int
    length: int
    generation: int


@dataclass
class TierStats:
    used_bytes: int
    capacity_bytes: int
    chunk_count: int
    cumulative_read_bytes: int
    cumulative_write_bytes: int


@dataclass
class TierConfig:
    """Parameters for one backend; `inner` is set for kind='delayed' only."""

    kind: str  # heap | mmap | delayed
    capacity_bytes: int = DEFAULT_CAPACITY
    backing_path: str | None = None
    delay_per_op_us: float = 0.0
    delay_per_mib_us: float = 0.0
    inner: "TierConfig | None" = None

    def validate(self):
        if self.kind not in ("heap", "mmap", "delayed"):
            raise ConfigError(f"unknown tier kind {self.kind!r}")
        if self.kind == "delayed":
            if self.inner is None:
                raise ConfigError("delayed tier needs an inner tier")
            if self.inner.kind == "delayed":
                raise ConfigError("delayed tier cannot wrap another delayed tier")
            self.inner.validate()
            return
        if self.capacity_bytes <= 0:
            raise ConfigError("capacity_bytes must be > 0")
        if self.kind == "mmap" and not self.backing_path:
            raise ConfigError("mmap tier needs a backing_path")


@dataclass
class _Chunk:
    handle: ChunkHandle
    key: bytes
    written: bool = False
    flushed: bool = False
    slot: int = -1
    data: bytearray | None = None  # heap tier payload


class _BaseTier:
    """Allocator bookkeeping shared by the heap and mmap tiers.

    The lock covers allocator state and counters; payload copies happen
    outside it so reads and writes on distinct handles overlap.
    """

    def __init__(self, capacity: int):
        self._lock = threading.Lock()
        self.capacity_bytes = capacity
        self._live: dict[int, _Chunk] = {}  # offset -> chunk
        self._free_by_len: dict[int, list[int]] = {}
        self._bump = 0
        self._next_gen = 1
        self._used = 0
        self._cum_read = 0
        self._cum_write = 0

    # -- allocation ------------------------------------------------------

    def allocate(self, length: int, key: bytes = NULL_KEY) -> ChunkHandle:
        if length <= 0:
            raise ValueError("chunk length must be > 0")
        if len(key) != 16:
            raise ValueError("chunk key must be 16 bytes")
        with self._lock:
            if self._used + length > self.capacity_bytes:
                raise CapacityError(
                    f"tier full: {self._used} used + {length} > {self.capacity_bytes}")
            free = self._free_by_len.get(length)
            if free:
                offset = free.pop()
            else:
                offset = self._reserve_arena(length)
            gen = self._next_gen
            self._next_gen += 1
            chunk = _Chunk(ChunkHandle(offset, length, gen), bytes(key))
            self._attach(chunk)
            self._live[offset] = chunk
            self._used += length
            return chunk.handle

    def _reserve_arena(self, length: int) -> int:
        # Bump allocation; freed regions are reused exact-fit only, never
        # coalesced (chunks die in whole-version batches of equal sizes).
        offset = self._bump
        self._bump += length
        return offset

    def _attach(self, chunk: _Chunk):
        raise NotImplementedError

    def _lookup(self, handle: ChunkHandle) -> _Chunk:
        chunk = self._live.get(handle.offset)
        if chunk is None or chunk.handle != handle:
            raise LifecycleError(f"stale or unknown handle {handle}")
        return chunk

    # -- data path -------------------------------------------------------

    def write_chunk(self, handle: ChunkHandle, data) -> None:
        if len(data) != handle.length:
            raise ValueError(f"payload is {len(data)} bytes, handle holds {handle.length}")
        with self._lock:
            chunk = self._lookup(handle)
            self._cum_write += handle.length
        self._store(chunk, data)
        chunk.written = True

    def read_chunk(self, handle: ChunkHandle) -> bytes:
        with self._lock:
            chunk = self._lookup(handle)
            if not chunk.written:
                raise LifecycleError(f"handle {handle} was never written")
            self._cum_read += handle.length
        return self._load(chunk)

    def flush_chunk(self, handle: ChunkHandle) -> None:
        with self._lock:
            chunk = self._lookup(handle)
            if not chunk.written:
                raise LifecycleError(f"handle {handle} was never written")
        self._persist(chunk)

    def free_chunk(self, handle: ChunkHandle) -> None:
        with self._lock:
            chunk = self._lookup(handle)
            del self._live[handle.offset]
            self._used -= handle.length
            self._free_by_len.setdefault(handle.length, []).append(handle.offset)
            self._detach(chunk)

    # -- introspection ----------------------------------------------------

    def stats(self) -> TierStats:
        with self._lock:
            return TierStats(self._used, self.capacity_bytes, len(self._live),
                             self._cum_read, self._cum_write)

    def chunks(self) -> list[tuple[bytes, ChunkHandle]]:
        """(key, handle) for every live chunk."""
        with self._lock:
            return [(c.key, c.handle) for c in self._live.values()]

    def close(self):
        pass

    # storage hooks

    def _store(self, chunk: _Chunk, data):
        raise NotImplementedError

    def _load(self, chunk: _Chunk) -> bytes:
        raise NotImplementedError

    def _persist(self, chunk: _Chunk):
        raise NotImplementedError

    def _detach(self, chunk: _Chunk):
        pass


class HeapTier(_BaseTier):
    """DRAM-role tier; flush is a no-op and nothing survives the process."""

    kind = "heap"

    def _attach(self, chunk: _Chunk):
        chunk.data = bytearray(chunk.handle.length)

    def _store(self, chunk: _Chunk, data):
        buf = chunk.data
        if buf is None:
            raise LifecycleError(f"handle {chunk.handle} was freed")
        buf[:] = data

    def _load(self, chunk: _Chunk) -> bytes:
        buf = chunk.data
        if buf is None:
            raise LifecycleError(f"handle {chunk.handle} was freed")
        return bytes(buf)

    def _persist(self, chunk: _Chunk):
        chunk.flushed = True

    def _detach(self, chunk: _Chunk):
        chunk.data = None


def _table_capacity(capacity_bytes: int) -> int:
    # Fixed at creation; must be re-derivable from the persisted capacity.
    return min(max(capacity_bytes // (64 * 1024), 1024), 1 << 20)


def _page_align(n: int) -> int:
    page = mmap.ALLOCATIONGRANULARITY
    return (n + page - 1) // page * page


class MmapTier(_BaseTier):
    """Block-device-role tier over one memory-mapped backing file.

    Writes land in the mapping and the OS pages them; flush_chunk msyncs
    the chunk's arena range and then its table slot, so a flushed chunk is
    recoverable after an unclean exit.
    """

    kind = "mmap"

    def __init__(self, path: str, capacity: int):
        existing = os.path.exists(path) and os.path.getsize(path) > 0
        if existing:
            persisted = self._read_persisted_capacity(path)
            if capacity and capacity < persisted:
                raise ConfigError(
                    f"configured capacity {capacity} is smaller than persisted arena {persisted}")
            capacity = persisted
        elif capacity <= 0:
            raise ConfigError("capacity_bytes must be > 0 for a new tier file")
        super().__init__(capacity)
        self._path = path
        self._table_cap = _table_capacity(capacity)
        self._arena_base = _page_align(HEADER_SIZE + SLOT_SIZE * self._table_cap)
        self._high_water = 0
        self._free_slots: list[int] = []
        try:
            self._fd = os.open(path, os.O_RDWR | os.O_CREAT, 0o644)
        except OSError as e:
            raise ConfigError(f"cannot open backing file {path}: {e}") from e
        total = self._arena_base + capacity
        if os.fstat(self._fd).st_size < total:
            os.ftruncate(self._fd, total)
        self._mm = mmap.mmap(self._fd, total)
        if existing:
            self._recover()
        else:
            self._mm[0:16] = MAGIC
            self._mm[16:32] = struct.pack("<QQ", capacity, 0)
            self._msync(0, HEADER_SIZE)

    @staticmethod
    def _read_persisted_capacity(path: str) -> int:
        with open(path, "rb") as f:
            head = f.read(HEADER_SIZE)
        if len(head) < HEADER_SIZE or head[:16] != MAGIC:
            raise ConfigError(f"{path} is not a tier file (bad magic)")
        return struct.unpack("<Q", head[16:24])[0]

    def _recover(self):
        capacity, high_water = struct.unpack("<QQ", self._mm[16:32])
        if high_water > self._table_cap:
            raise ConfigError("persisted chunk table larger than derived table capacity")
        self._high_water = high_water
        max_gen = 0
        for slot in range(high_water):
            base = HEADER_SIZE + slot * SLOT_SIZE
            offset, length, gen = struct.unpack("<QQQ", self._mm[base:base + 24])
            key = bytes(self._mm[base + 24:base + 40])
            if length == 0:
                self._free_slots.append(slot)
                continue
            chunk = _Chunk(ChunkHandle(offset, length, gen), key,
                           written=True, flushed=True, slot=slot)
            self._live[offset] = chunk
            self._used += length
            self._bump = max(self._bump, offset + length)
            max_gen = max(max_gen, gen)
        self._next_gen = max_gen + 1
        # Arena gaps from pre-crash frees are not tracked across reopen;
        # they are reclaimed only when matching-size frees happen again.

    def _attach(self, chunk: _Chunk):
        if self._free_slots:
            chunk.slot = self._free_slots.pop()
        elif self._high_water < self._table_cap:
            chunk.slot = self._high_water
            self._high_water += 1
        else:
            # undo the arena reservation made by allocate()
            self._free_by_len.setdefault(chunk.handle.length, []).append(chunk.handle.offset)
            raise CapacityError(f"chunk table full ({self._table_cap} slots)")

    def _arena_range(self, chunk: _Chunk) -> tuple[int, int]:
        start = self._arena_base + chunk.handle.offset
        return start, start + chunk.handle.length

    def _store(self, chunk: _Chunk, data):
        a, b = self._arena_range(chunk)
        self._mm[a:b] = data

    def _load(self, chunk: _Chunk) -> bytes:
        a, b = self._arena_range(chunk)
        return self._mm[a:b]

    def _persist(self, chunk: _Chunk):
        a, b = self._arena_range(chunk)
        self._msync(a, b - a)
        with self._lock:
            self._write_slot(chunk.slot, chunk.handle, chunk.key)
            self._mm[24:32] = struct.pack("<Q", self._high_water)
            slot_base = HEADER_SIZE + chunk.slot * SLOT_SIZE
            self._msync(0, HEADER_SIZE)
            self._msync(slot_base, SLOT_SIZE)
            chunk.flushed = True

    def _write_slot(self, slot: int, handle: ChunkHandle, key: bytes):
        base = HEADER_SIZE + slot * SLOT_SIZE
        self._mm[base:base + 40] = struct.pack("<QQQ", handle.offset, handle.length,
                                               handle.generation) + key

    def _detach(self, chunk: _Chunk):
        if chunk.flushed:
            base = HEADER_SIZE + chunk.slot * SLOT_SIZE
            self._mm[base:base + 40] = struct.pack("<QQQ", 0, 0, 0) + NULL_KEY
            self._msync(base, SLOT_SIZE)
        if chunk.slot >= 0:
            self._free_slots.append(chunk.slot)

    def _msync(self, start: int, length: int):
        page = mmap.ALLOCATIONGRANULARITY
        a = start - start % page
        self._mm.flush(a, start + length - a)

    def close(self):
        if self._mm is not None:
            self._mm.flush()
            self._mm.close()
            os.close(self._fd)
            self._mm = None


class DelayedTier:
    """Latency-injection wrapper emulating a slower device over any tier.

    The per-operation latency models command overhead and overlaps freely
    across threads; the per-MiB component models transfer bandwidth, a
    shared device resource, and is serialized per tier instance. Results
    are byte-identical to the wrapped tier's.
    """

    kind = "delayed"

    def __init__(self, inner, delay_per_op_us: float, delay_per_mib_us: float):
        self.inner = inner
        self.delay_per_op_us = delay_per_op_us
        self.delay_per_mib_us = delay_per_mib_us
        self._bw_lock = threading.Lock()

    def _delay(self, nbytes: int):
        if self.delay_per_mib_us:
            hold = self.delay_per_mib_us * nbytes / MIB / 1e6
            with self._bw_lock:
                time.sleep(hold)
        if self.delay_per_op_us:
            time.sleep(self.delay_per_op_us / 1e6)

    @property
    def capacity_bytes(self):
        return self.inner.capacity_bytes

    def allocate(self, length: int, key: bytes = NULL_KEY) -> ChunkHandle:
        return self.inner.allocate(length, key)

    def write_chunk(self, handle: ChunkHandle, data) -> None:
        self._delay(handle.length)
        self.inner.write_chunk(handle, data)

    def read_chunk(self, handle: ChunkHandle) -> bytes:
        self._delay(handle.length)
        return self.inner.read_chunk(handle)

    def flush_chunk(self, handle: ChunkHandle) -> None:
        self.inner.flush_chunk(handle)

    def free_chunk(self, handle: ChunkHandle) -> None:
        self.inner.free_chunk(handle)

    def stats(self) -> TierStats:
        return self.inner.stats()

    def chunks(self):
        return self.inner.chunks()

    def close(self):
        self.inner.close()


def open_tier(config: TierConfig):
    """Build a ready tier from its config; mmap tiers reopen existing files."""
    config.validate()
    if config.kind == "heap":
        return HeapTier(config.capacity_bytes)
    if config.kind == "mmap":
        return MmapTier(config.backing_path, config.capacity_bytes)
    inner = open_tier(config.inner)
    return DelayedTier(inner, config.delay_per_op_us, config.delay_per_mib_us)


_SIZE_SUFFIX = {"k": 1 << 10, "m": 1 << 20, "g": 1 << 30, "t": 1 << 40}


def parse_size(text: str) -> int:
    """Parse '4096', '64K', '256M', '4G' into bytes."""
    t = text.strip().lower().removesuffix("b").removesuffix("i")
    if t and t[-1] in _SIZE_SUFFIX:
        return int(float(t[:-1]) * _SIZE_SUFFIX[t[-1]])
    return int(t)


def parse_tier_spec(spec: str, default_capacity: int = DEFAULT_CAPACITY) -> TierConfig:
    """Parse a tier spec string.

    Grammar:
        heap[:CAPACITY]
        mmap:PATH[:CAPACITY]
        delayed:PER_OP_US:PER_MIB_US:INNER_SPEC
    """
    parts = spec.split(":")
    kind = parts[0].lower()
    if kind == "heap":
        if len(parts) > 2:
            raise ConfigError(f"bad heap spec {spec!r}")
        cap = parse_size(parts[1]) if len(parts) == 2 else default_capacity
        return TierConfig("heap", capacity_bytes=cap)
    if kind == "mmap":
        if len(parts) < 2:
            raise ConfigError(f"mmap spec needs a path: {spec!r}")
        path, cap = parts[1], default_capacity
        if len(parts) == 3:
            cap = parse_size(parts[2])
        elif len(parts) > 3:
            raise ConfigError(f"bad mmap spec {spec!r}")
        return TierConfig("mmap", capacity_bytes=cap, backing_path=path)
    if kind == "delayed":
        if len(parts) < 4:
            raise ConfigError(f"delayed spec needs per-op us, per-MiB us and inner spec: {spec!r}")
        inner = parse_tier_spec(":".join(parts[3:]), default_capacity)
        return TierConfig("delayed", delay_per_op_us=float(parts[1]),
                          delay_per_mib_us=float(parts[2]), inner=inner,
                          capacity_bytes=inner.capacity_bytes)
    raise ConfigError(f"unknown tier kind in spec {spec!r}")
