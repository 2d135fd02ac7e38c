"""Side-by-side benchmark of the byte-kernel backends.

Runs fill/verify/copy over the same 2-D region against every importable
backend (compiled extension and pure-Python fallback) and reports the best
of ``repeats`` timings per cell, so the two implementations can be compared
like for like.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

from ..errors import ConfigError
from ..kernels import available_backends, load_backend
from .report import BenchReport

OPS = ("fill", "verify", "copy")

COLS = 4096


@dataclass
class KernelbenchConfig:
    size_bytes: int = 16 << 20
    repeats: int = 3
    element_size: int = 8
    backends: tuple[str, ...] = ()  # empty = every importable backend

    def validate(self) -> "KernelbenchConfig":
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")
        if self.element_size < 1:
            raise ConfigError("element_size must be >= 1")
        if self.size_bytes < COLS * self.element_size:
            raise ConfigError(f"size_bytes must be at least one "
                              f"{COLS}-element row")
        known = available_backends()
        for name in self.backends:
            if name not in known:
                raise ConfigError(f"backend {name!r} not importable here "
                                  f"(have {known})")
        return self


def _best_of(repeats: int, fn) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def run_kernelbench(config: KernelbenchConfig) -> BenchReport:
    cfg = config.validate()
    names = list(cfg.backends) or available_backends()
    rows = cfg.size_bytes // cfg.element_size // COLS
    ext = (rows, COLS)
    lo = (0, 0)
    nbytes = rows * COLS * cfg.element_size
    # Interior window for the copy op, the scatter/gather shape the data
    # path actually uses.
    win_lo = (rows // 4, COLS // 4)
    win_ext = (max(1, rows // 2), COLS // 2)
    win_bytes = win_ext[0] * win_ext[1] * cfg.element_size

    src = bytearray(nbytes)
    dst = bytearray(nbytes)
    seed = 0x1D0C5EED  # fixed bench seed
    report = BenchReport("kernelbench")
    for name in names:
        impl = load_backend(name)
        elapsed = _best_of(cfg.repeats, lambda: impl.fill_pattern(
            src, lo, ext, lo, ext, cfg.element_size, seed))
        report.add(name, "fill", nbytes, round(elapsed, 6),
                   round(nbytes / (1 << 20) / elapsed, 3))
        elapsed = _best_of(cfg.repeats, lambda: impl.verify_pattern(
            src, lo, ext, lo, ext, cfg.element_size, seed))
        report.add(name, "verify", nbytes, round(elapsed, 6),
                   round(nbytes / (1 << 20) / elapsed, 3))
        elapsed = _best_of(cfg.repeats, lambda: impl.copy_region_bytes(
            dst, lo, ext, src, lo, ext, win_lo, win_ext, cfg.element_size))
        report.add(name, "copy", win_bytes, round(elapsed, 6),
                   round(win_bytes / (1 << 20) / elapsed, 3))
    return report
