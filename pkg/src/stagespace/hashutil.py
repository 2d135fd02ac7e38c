"""64-bit hashing primitives used for shard placement and data patterns."""

import struct

MASK64 = (1 << 64) - 1

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3

# Golden-ratio increment, the usual sequence constant for 64-bit mixing.
GOLDEN = 0x9E3779B97F4A7C15

_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB


def fnv1a64(data: bytes) -> int:
    """FNV-1a over a byte string, reduced mod 2**64."""
    h = FNV_OFFSET
    for b in data:
        h = ((h ^ b) * FNV_PRIME) & MASK64
    return h


def mix64(x: int) -> int:
    """Finalizer-strength avalanche of a 64-bit value (splitmix-style)."""
    x &= MASK64
    x ^= x >> 30
    x = (x * _M1) & MASK64
    x ^= x >> 27
    x = (x * _M2) & MASK64
    x ^= x >> 31
    return x


def hash_var_coords(var: str, coords: tuple[int, ...]) -> int:
    """Placement hash of a variable name plus per-dimension block indices."""
    data = var.encode("utf-8") + b"\x00" + struct.pack(f"<{len(coords)}q", *coords)
    return mix64(fnv1a64(data))
