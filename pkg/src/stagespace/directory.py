"""Metadata layer: block sharding, descriptor registry, coverage tests.

Each staging server owns the distribution blocks that hash to it; all
servers additionally learn about every stored chunk through notifications,
so any directory can answer coverage and stat queries. Payload bytes stay
with the owner.
"""

import threading
from dataclasses import dataclass
from itertools import product

from stagespace.errors import ConfigError
from stagespace.geometry import NDBox, contains, covers, intersect, volume
from stagespace.hashutil import hash_var_coords
from stagespace.tier import ChunkHandle

DEFAULT_MAX_VERSIONS = 10
MAX_VAR_BYTES = 255


@dataclass(frozen=True)
class ObjectDescriptor:
    """One stored chunk: where a (var, version, box) payload lives."""

    var: str
    version: int
    box: NDBox
    element_size: int
    owner: int
    handle: ChunkHandle

    def __post_init__(self):
        if len(self.var.encode("utf-8")) > MAX_VAR_BYTES:
            raise ValueError("variable name longer than 255 bytes")
        if self.version < 0:
            raise ValueError("version must be >= 0")
        if self.element_size < 1:
            raise ValueError("element_size must be >= 1")
        if self.handle is not None and volume(self.box) * self.element_size != self.handle.length:
            raise ValueError("chunk length does not match box volume * element_size")

    def key(self) -> tuple:
        return (self.var, self.version, self.box)


def default_block_extent(global_box: NDBox, server_count: int) -> tuple[int, ...]:
    """Split the first dimension into ~4 blocks per server; a block spans
    the full extent of every other dimension."""
    ext = global_box.extents
    target = max(1, ext[0] // (4 * server_count))
    step = max(d for d in range(1, target + 1) if ext[0] % d == 0)
    return (step,) + ext[1:]


@dataclass(frozen=True)
class DistGrid:
    """Fixed spatial sharding: which server owns which distribution block."""

    global_box: NDBox
    block_extent: tuple[int, ...]
    server_count: int

    def __post_init__(self):
        object.__setattr__(self, "block_extent", tuple(int(x) for x in self.block_extent))
        if self.server_count < 1:
            raise ConfigError("server_count must be >= 1")
        if len(self.block_extent) != self.global_box.ndims:
            raise ConfigError("block_extent length must equal ndims")
        for ext, step in zip(self.global_box.extents, self.block_extent):
            if step < 1 or ext % step:
                raise ConfigError(f"block extent {step} does not divide global extent {ext}")

    @property
    def blocks_per_dim(self) -> tuple[int, ...]:
        return tuple(e // s for e, s in zip(self.global_box.extents, self.block_extent))

    def block_box(self, coords: tuple[int, ...]) -> NDBox:
        self._check_coords(coords)
        lo = tuple(self.global_box.lower[d] + coords[d] * self.block_extent[d]
                   for d in range(self.global_box.ndims))
        up = tuple(l + self.block_extent[d] for d, l in enumerate(lo))
        return NDBox(lo, up)

    def _check_coords(self, coords):
        per_dim = self.blocks_per_dim
        if len(coords) != len(per_dim):
            raise ValueError("block coordinate dimensionality mismatch")
        for c, n in zip(coords, per_dim):
            if not 0 <= c < n:
                raise ValueError(f"block coordinate {coords} outside grid {per_dim}")


def shard_owner(grid: DistGrid, var: str, block_coords: tuple[int, ...]) -> int:
    """Owning server of one distribution block; version-independent."""
    grid._check_coords(block_coords)
    if grid.server_count == 1:
        return 0
    return hash_var_coords(var, tuple(block_coords)) % grid.server_count


def blocks_of(grid: DistGrid, box: NDBox) -> list[tuple[int, ...]]:
    """Block coordinates intersecting box, row-major; box must lie in the grid."""
    if not contains(grid.global_box, box):
        raise ValueError(f"box {box} outside global domain {grid.global_box}")
    ranges = []
    for d in range(box.ndims):
        lo = (box.lower[d] - grid.global_box.lower[d]) // grid.block_extent[d]
        hi = (box.upper[d] - 1 - grid.global_box.lower[d]) // grid.block_extent[d]
        ranges.append(range(lo, hi + 1))
    return list(product(*ranges))


class Directory:
    """Descriptor registry for one server process.

    Thread-safe; queries are linearizable with respect to register calls.
    Holds at most max_versions versions per variable: registering a new
    version beyond that evicts the variable's oldest version and reports
    the dropped descriptors so the caller can free local chunks.
    """

    def __init__(self, max_versions: int = DEFAULT_MAX_VERSIONS):
        if max_versions < 1:
            raise ConfigError("max_versions must be >= 1")
        self.max_versions = max_versions
        self._lock = threading.Lock()
        # (var, version) -> {(box): descriptor}, insertion-ordered = register order
        self._entries: dict[tuple[str, int], dict[NDBox, ObjectDescriptor]] = {}

    def register(self, desc: ObjectDescriptor) -> list[ObjectDescriptor]:
        """Insert or replace a descriptor; returns descriptors evicted by the
        per-variable version ring (possibly including the new one when it is
        older than everything retained)."""
        with self._lock:
            slot = self._entries.setdefault((desc.var, desc.version), {})
            # re-registering the same (var, version, box) makes it the newest write
            slot.pop(desc.box, None)
            slot[desc.box] = desc
            return self._evict_locked(desc.var)

    def _evict_locked(self, var: str) -> list[ObjectDescriptor]:
        versions = sorted(v for (w, v) in self._entries if w == var)
        dropped = []
        while len(versions) > self.max_versions:
            oldest = versions.pop(0)
            dropped.extend(self._entries.pop((var, oldest)).values())
        return dropped

    def query(self, var: str, version: int, box: NDBox) -> list[ObjectDescriptor]:
        """Registered descriptors of (var, version) intersecting box, in
        register order (the order that defines last-writer-wins)."""
        with self._lock:
            slot = self._entries.get((var, version))
            if not slot:
                return []
            return [d for d in slot.values() if intersect(d.box, box) is not None]

    def is_covered(self, var: str, version: int, box: NDBox) -> bool:
        return covers(box, [d.box for d in self.query(var, version, box)])

    def element_size_of(self, var: str, version: int) -> int | None:
        """element_size fixed by the first registered chunk, or None."""
        with self._lock:
            slot = self._entries.get((var, version))
            if not slot:
                return None
            return next(iter(slot.values())).element_size

    def descriptor_count(self) -> int:
        with self._lock:
            return sum(len(s) for s in self._entries.values())

    def snapshot(self) -> set[tuple]:
        """Comparable view of all metadata (handles excluded: owner-local)."""
        with self._lock:
            return {(d.var, d.version, d.box, d.element_size, d.owner)
                    for s in self._entries.values() for d in s.values()}

    def drop_all(self) -> list[ObjectDescriptor]:
        with self._lock:
            dropped = [d for s in self._entries.values() for d in s.values()]
            self._entries.clear()
            return dropped
