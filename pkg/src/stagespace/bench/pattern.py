"""Seeded data pattern shared by writers and readers.

Every element's value is a pure function of (variable, version, global
coordinate), so readers can verify bytes without any reference copy and a
chunk copied to the wrong place can never verify clean. The per-element
work is done by :mod:`stagespace.kernels`; this module only fixes how the
(var, version) pair maps to the kernel seed.
"""

from __future__ import annotations

from ..geometry import NDBox, RegionBuffer
from ..hashutil import GOLDEN, MASK64, fnv1a64, mix64
from ..kernels import fill_pattern, verify_pattern


def pattern_seed(var: str, version: int) -> int:
    """Deterministic 64-bit kernel seed for one (var, version) pair."""
    return mix64(fnv1a64(var.encode("utf-8")) ^ ((version + 1) * GOLDEN
                                                 & MASK64))


def fill_buffer(buf: RegionBuffer, global_box: NDBox, var: str,
                version: int):
    """Fill buf with the global pattern restricted to buf.box."""
    fill_pattern(buf.data, buf.box.lower, buf.box.extents,
                 global_box.lower, global_box.extents, buf.element_size,
                 pattern_seed(var, version))


def verify_buffer(buf: RegionBuffer, global_box: NDBox, var: str,
                  version: int) -> int:
    """Return -1 when buf matches the pattern, else the global row-major
    linear index of the first mismatching element."""
    return verify_pattern(bytes(buf.data), buf.box.lower, buf.box.extents,
                          global_box.lower, global_box.extents,
                          buf.element_size, pattern_seed(var, version))
