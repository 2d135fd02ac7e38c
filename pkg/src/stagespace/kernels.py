"""Backend selection for the hot byte kernels.

The compiled extension is preferred when importable; the numpy fallback is
functionally identical. Set STAGESPACE_KERNELS=python (or =cython) to force
a backend, e.g. for the backend-comparison benchmark.
"""

import os
import sys

_FORCE = os.environ.get("STAGESPACE_KERNELS", "").strip().lower()
if _FORCE not in ("", "cython", "python"):
    raise ImportError(f"STAGESPACE_KERNELS must be 'cython' or 'python', got {_FORCE!r}")

_impl = None
BACKEND = None

# The compiled kernels store pattern words with native byte order and are
# only correct on little-endian targets.
if _FORCE != "python" and sys.byteorder == "little":
    try:
        from stagespace import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:
        if _FORCE == "cython":
            raise

if _impl is None:
    from stagespace import _pykernels as _impl
    BACKEND = "python"

copy_region_bytes = _impl.copy_region_bytes
fill_pattern = _impl.fill_pattern
verify_pattern = _impl.verify_pattern


def available_backends() -> list[str]:
    names = []
    try:
        import stagespace._ckernels  # noqa: F401
        names.append("cython")
    except ImportError:
        pass
    names.append("python")
    return names


def load_backend(name: str):
    """Return the named backend module (for benchmarking both side by side)."""
    if name == "cython":
        from stagespace import _ckernels
        return _ckernels
    if name == "python":
        from stagespace import _pykernels
        return _pykernels
    raise ValueError(f"unknown kernel backend {name!r}")
