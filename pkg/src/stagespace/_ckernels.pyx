# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled byte kernels: strided region copy and seeded pattern fill/verify.

Same contract as _pykernels; assumes a little-endian target (enforced by
the backend selector).
"""

from libc.stdint cimport int64_t, uint64_t
from libc.string cimport memcpy


cdef inline uint64_t _mix64(uint64_t x) nogil:
    x ^= x >> 30
    x *= 0xBF58476D1CE4E5B9ULL
    x ^= x >> 27
    x *= 0x94D049BB133111EBULL
    x ^= x >> 31
    return x


cdef uint64_t _GOLDEN = 0x9E3779B97F4A7C15ULL


cdef inline void _pad3(object lo, object ext, int64_t *plo, int64_t *pext):
    # Left-pad to 3 dims with unit extents so loops are always triple.
    cdef int nd = len(lo)
    cdef int d
    for d in range(3):
        plo[d] = 0
        pext[d] = 1
    for d in range(nd):
        plo[3 - nd + d] = lo[d]
        pext[3 - nd + d] = ext[d]


def copy_region_bytes(unsigned char[::1] dst, dst_lo, dst_ext,
                      const unsigned char[::1] src, src_lo, src_ext,
                      lo, ext, int64_t esize):
    cdef int64_t dlo[3], dext[3], slo[3], sext[3], rlo[3], rext[3]
    _pad3(dst_lo, dst_ext, dlo, dext)
    _pad3(src_lo, src_ext, slo, sext)
    _pad3(lo, ext, rlo, rext)
    cdef int64_t row = rext[2] * esize
    cdef int64_t i, j, soff, doff
    with nogil:
        for i in range(rext[0]):
            for j in range(rext[1]):
                soff = (((rlo[0] + i - slo[0]) * sext[1]
                         + (rlo[1] + j - slo[1])) * sext[2]
                        + (rlo[2] - slo[2])) * esize
                doff = (((rlo[0] + i - dlo[0]) * dext[1]
                         + (rlo[1] + j - dlo[1])) * dext[2]
                        + (rlo[2] - dlo[2])) * esize
                memcpy(&dst[doff], &src[soff], row)


def fill_pattern(unsigned char[::1] buf, box_lo, box_ext,
                 glob_lo, glob_ext, int64_t esize, uint64_t seed):
    if esize not in (1, 2, 4, 8):
        raise ValueError("pattern element_size must be one of (1, 2, 4, 8)")
    cdef int64_t blo[3], bext[3], glo[3], gext[3]
    _pad3(box_lo, box_ext, blo, bext)
    _pad3(glob_lo, glob_ext, glo, gext)
    cdef int64_t i, j, k, b, off
    cdef uint64_t lrow, w
    with nogil:
        for i in range(bext[0]):
            for j in range(bext[1]):
                lrow = ((<uint64_t> (blo[0] + i - glo[0]) * <uint64_t> gext[1]
                         + <uint64_t> (blo[1] + j - glo[1])) * <uint64_t> gext[2]
                        + <uint64_t> (blo[2] - glo[2]))
                off = ((i * bext[1] + j) * bext[2]) * esize
                if esize == 8:
                    for k in range(bext[2]):
                        w = _mix64(seed ^ ((lrow + k + 1) * _GOLDEN))
                        memcpy(&buf[off], &w, 8)
                        off += 8
                else:
                    for k in range(bext[2]):
                        w = _mix64(seed ^ ((lrow + k + 1) * _GOLDEN))
                        for b in range(esize):
                            buf[off + b] = <unsigned char> (w >> (8 * b))
                        off += esize


def verify_pattern(const unsigned char[::1] buf, box_lo, box_ext,
                   glob_lo, glob_ext, int64_t esize, uint64_t seed):
    if esize not in (1, 2, 4, 8):
        raise ValueError("pattern element_size must be one of (1, 2, 4, 8)")
    cdef int64_t blo[3], bext[3], glo[3], gext[3]
    _pad3(box_lo, box_ext, blo, bext)
    _pad3(glob_lo, glob_ext, glo, gext)
    cdef int64_t i, j, k, b, off
    cdef uint64_t lrow, w, got
    cdef int64_t bad = -1
    with nogil:
        for i in range(bext[0]):
            if bad >= 0:
                break
            for j in range(bext[1]):
                if bad >= 0:
                    break
                lrow = ((<uint64_t> (blo[0] + i - glo[0]) * <uint64_t> gext[1]
                         + <uint64_t> (blo[1] + j - glo[1])) * <uint64_t> gext[2]
                        + <uint64_t> (blo[2] - glo[2]))
                off = ((i * bext[1] + j) * bext[2]) * esize
                if esize == 8:
                    for k in range(bext[2]):
                        w = _mix64(seed ^ ((lrow + k + 1) * _GOLDEN))
                        memcpy(&got, &buf[off], 8)
                        if got != w:
                            bad = <int64_t> (lrow + k)
                            break
                        off += 8
                else:
                    for k in range(bext[2]):
                        w = _mix64(seed ^ ((lrow + k + 1) * _GOLDEN))
                        for b in range(esize):
                            if buf[off + b] != <unsigned char> (w >> (8 * b)):
                                bad = <int64_t> (lrow + k)
                                break
                        if bad >= 0:
                            break
                        off += esize
    return bad
