"""Pure-Python (numpy) implementations of the hot byte kernels.

Fallback for when the compiled extension is unavailable; also the
reference the extension is cross-checked against in the test suite.
All functions share the compiled backend's contract: boxes are given as
(lower, extents) tuples, payloads are row-major with the last dimension
contiguous, and pattern words are little-endian.
"""

import numpy as np

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)

_PATTERN_ESIZES = (1, 2, 4, 8)


def _mix64(x: np.ndarray) -> np.ndarray:
    x = x.copy()
    x ^= x >> np.uint64(30)
    x *= _M1
    x ^= x >> np.uint64(27)
    x *= _M2
    x ^= x >> np.uint64(31)
    return x


def _as_elems(buf, extents, esize):
    arr = np.frombuffer(buf, dtype=np.uint8)
    return arr.reshape(tuple(extents) + (esize,))


def _box_slices(box_lo, lo, ext):
    return tuple(slice(l - bl, l - bl + e) for bl, l, e in zip(box_lo, lo, ext))


def copy_region_bytes(dst, dst_lo, dst_ext, src, src_lo, src_ext, lo, ext, esize):
    """Copy the [lo, lo+ext) region between two row-major buffers."""
    s = _as_elems(src, src_ext, esize)
    d = _as_elems(dst, dst_ext, esize)
    d[_box_slices(dst_lo, lo, ext)] = s[_box_slices(src_lo, lo, ext)]


def _linear_indices(box_lo, box_ext, glob_lo, glob_ext):
    """Row-major linear index within the global box, per element of the local box."""
    ndims = len(box_ext)
    strides = [1] * ndims
    for d in range(ndims - 2, -1, -1):
        strides[d] = strides[d + 1] * glob_ext[d + 1]
    total = np.zeros(tuple(box_ext), dtype=np.uint64)
    for d in range(ndims):
        axis = (np.uint64(box_lo[d] - glob_lo[d])
                + np.arange(box_ext[d], dtype=np.uint64)) * np.uint64(strides[d])
        shape = [1] * ndims
        shape[d] = box_ext[d]
        total += axis.reshape(shape)
    return total


def _pattern_words(box_lo, box_ext, glob_lo, glob_ext, seed):
    lin = _linear_indices(box_lo, box_ext, glob_lo, glob_ext)
    return _mix64(np.uint64(seed) ^ ((lin + np.uint64(1)) * _GOLDEN))


def fill_pattern(buf, box_lo, box_ext, glob_lo, glob_ext, esize, seed):
    """Fill buf with the position-seeded pattern over its box."""
    if esize not in _PATTERN_ESIZES:
        raise ValueError(f"pattern element_size must be one of {_PATTERN_ESIZES}")
    words = _pattern_words(box_lo, box_ext, glob_lo, glob_ext, seed)
    out = _as_elems(buf, box_ext, esize)
    le = words.astype("<u8").view(np.uint8).reshape(tuple(box_ext) + (8,))
    out[...] = le[..., :esize]


def verify_pattern(buf, box_lo, box_ext, glob_lo, glob_ext, esize, seed) -> int:
    """Return the global linear index of the first mismatching element, or -1."""
    if esize not in _PATTERN_ESIZES:
        raise ValueError(f"pattern element_size must be one of {_PATTERN_ESIZES}")
    words = _pattern_words(box_lo, box_ext, glob_lo, glob_ext, seed)
    actual = _as_elems(buf, box_ext, esize)
    expect = words.astype("<u8").view(np.uint8).reshape(tuple(box_ext) + (8,))[..., :esize]
    bad = (actual != expect).any(axis=-1).ravel()
    pos = int(np.argmax(bad))
    if not bad[pos]:
        return -1
    return int(_linear_indices(box_lo, box_ext, glob_lo, glob_ext).ravel()[pos])
