"""Integer box algebra over half-open N-dimensional regions.

Boxes are [lower, upper) per dimension, 1 to 3 dimensions, and element
payloads are row-major with the last dimension contiguous. Everything the
put/get path does -- splitting requests across owners, testing coverage,
assembling responses -- reduces to the handful of operations here.
"""

from dataclasses import dataclass, field
from itertools import product

from stagespace import kernels

MAX_DIMS = 3


@dataclass(frozen=True)
class NDBox:
    """Half-open integer box: element e is inside iff lower[d] <= e[d] < upper[d]."""

    lower: tuple[int, ...]
    upper: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "lower", tuple(int(x) for x in self.lower))
        object.__setattr__(self, "upper", tuple(int(x) for x in self.upper))
        nd = len(self.lower)
        if nd != len(self.upper):
            raise ValueError("lower and upper must have the same length")
        if not 1 <= nd <= MAX_DIMS:
            raise ValueError(f"ndims must be in 1..{MAX_DIMS}, got {nd}")
        for lo, up in zip(self.lower, self.upper):
            if lo >= up:
                raise ValueError(f"empty or inverted extent [{lo}, {up})")

    @property
    def ndims(self) -> int:
        return len(self.lower)

    @property
    def extents(self) -> tuple[int, ...]:
        return tuple(u - l for l, u in zip(self.lower, self.upper))

    def __str__(self):
        return "x".join(f"[{l},{u})" for l, u in zip(self.lower, self.upper))


def _check_same_ndims(a: NDBox, b: NDBox):
    if a.ndims != b.ndims:
        raise ValueError(f"dimension mismatch: {a.ndims} vs {b.ndims}")


def volume(box: NDBox) -> int:
    """Number of elements in the box."""
    v = 1
    for e in box.extents:
        v *= e
    return v


def intersect(a: NDBox, b: NDBox) -> NDBox | None:
    """Maximal box contained in both, or None when interiors are disjoint."""
    _check_same_ndims(a, b)
    lo = tuple(max(x, y) for x, y in zip(a.lower, b.lower))
    up = tuple(min(x, y) for x, y in zip(a.upper, b.upper))
    if any(l >= u for l, u in zip(lo, up)):
        return None
    return NDBox(lo, up)


def contains(outer: NDBox, inner: NDBox) -> bool:
    """True iff every element of inner lies in outer."""
    _check_same_ndims(outer, inner)
    return all(ol <= il and iu <= ou
               for ol, ou, il, iu in zip(outer.lower, outer.upper, inner.lower, inner.upper))


def subtract(box: NDBox, hole: NDBox) -> list[NDBox]:
    """Disjoint boxes covering box minus hole; hole must be contained in box."""
    if not contains(box, hole):
        raise ValueError(f"hole {hole} not contained in {box}")
    out = []
    lo = list(box.lower)
    up = list(box.upper)
    # Peel two slabs per dimension; what remains matches the hole in all
    # processed dimensions, so the leftover after the loop is the hole itself.
    for d in range(box.ndims):
        if lo[d] < hole.lower[d]:
            out.append(NDBox(tuple(lo[:d] + [lo[d]] + lo[d + 1:]),
                             tuple(up[:d] + [hole.lower[d]] + up[d + 1:])))
        if hole.upper[d] < up[d]:
            out.append(NDBox(tuple(lo[:d] + [hole.upper[d]] + lo[d + 1:]),
                             tuple(up[:d] + [up[d]] + up[d + 1:])))
        lo[d], up[d] = hole.lower[d], hole.upper[d]
    return out


def covers(target: NDBox, pieces: list[NDBox]) -> bool:
    """True iff every element of target lies in at least one piece."""
    remaining = [target]
    for piece in pieces:
        _check_same_ndims(target, piece)
        if not remaining:
            return True
        nxt = []
        for box in remaining:
            inter = intersect(box, piece)
            if inter is None:
                nxt.append(box)
            else:
                nxt.extend(subtract(box, inter))
        remaining = nxt
    return not remaining


def decompose_grid(global_box: NDBox, parts_per_dim: list[int]) -> list[NDBox]:
    """Tile global_box into product(parts_per_dim) equal boxes, row-major.

    Every extent must be divisible by its part count; ragged decompositions
    are rejected.
    """
    if len(parts_per_dim) != global_box.ndims:
        raise ValueError("parts_per_dim length must equal ndims")
    steps = []
    for ext, parts in zip(global_box.extents, parts_per_dim):
        if parts < 1:
            raise ValueError(f"part count must be >= 1, got {parts}")
        if ext % parts:
            raise ValueError(f"extent {ext} not divisible by {parts} parts")
        steps.append(ext // parts)
    out = []
    for coords in product(*(range(p) for p in parts_per_dim)):
        lo = tuple(global_box.lower[d] + coords[d] * steps[d] for d in range(global_box.ndims))
        up = tuple(l + steps[d] for d, l in enumerate(lo))
        out.append(NDBox(lo, up))
    return out


@dataclass
class RegionBuffer:
    """Row-major payload for one box: volume(box) * element_size bytes."""

    box: NDBox
    element_size: int
    data: bytearray = field(repr=False, default=None)

    def __post_init__(self):
        if self.element_size < 1:
            raise ValueError("element_size must be >= 1")
        expect = volume(self.box) * self.element_size
        if self.data is None:
            self.data = bytearray(expect)
        elif len(self.data) != expect:
            raise ValueError(f"payload is {len(self.data)} bytes, box needs {expect}")

    @property
    def nbytes(self) -> int:
        return len(self.data)


def copy_region(src: RegionBuffer, dst: RegionBuffer, region: NDBox) -> int:
    """Copy every element of region from src to dst; returns elements copied.

    region must be contained in both buffers' boxes and element sizes must
    match. Bytes of dst outside region are untouched.
    """
    if src.element_size != dst.element_size:
        raise ValueError("element_size mismatch")
    if not contains(src.box, region):
        raise ValueError(f"region {region} not contained in source box {src.box}")
    if not contains(dst.box, region):
        raise ValueError(f"region {region} not contained in destination box {dst.box}")
    kernels.copy_region_bytes(
        dst.data, dst.box.lower, dst.box.extents,
        src.data, src.box.lower, src.box.extents,
        region.lower, region.extents, src.element_size,
    )
    return volume(region)
