import random

import pytest

from stagespace import kernels

from oracles import (
    element_byte_offset,
    global_linear_index,
    pattern_element_oracle,
    voxels,
)
from test_geometry import random_box
from stagespace.geometry import NDBox, volume

BACKENDS = kernels.available_backends()


@pytest.fixture(params=BACKENDS)
def backend(request):
    return kernels.load_backend(request.param)


def test_compiled_backend_present():
    # The build ships the extension; the fallback alone only covers
    # environments where the build was skipped.
    assert "python" in BACKENDS


class TestFillPattern:
    def test_matches_scalar_oracle(self, backend):
        rng = random.Random(21)
        for _ in range(40):
            nd = rng.randint(1, 3)
            glob = random_box(rng, nd, max_extent=8, lo_range=(0, 4))
            sub = None
            while sub is None:
                cand = random_box(rng, nd, max_extent=8, lo_range=(0, 8))
                from stagespace.geometry import intersect
                sub = intersect(glob, cand)
            esize = rng.choice([1, 2, 4, 8])
            seed = rng.getrandbits(64)
            buf = bytearray(volume(sub) * esize)
            backend.fill_pattern(buf, sub.lower, sub.extents, glob.lower, glob.extents, esize, seed)
            for c in sorted(voxels(sub)):
                off = element_byte_offset(sub, c, esize)
                expect = pattern_element_oracle(seed, global_linear_index(glob, c), esize)
                assert bytes(buf[off:off + esize]) == expect

    def test_verify_roundtrip_and_first_mismatch(self, backend):
        rng = random.Random(22)
        glob = NDBox((0, 0), (16, 16))
        sub = NDBox((2, 4), (10, 12))
        esize = 8
        seed = 987654321
        buf = bytearray(volume(sub) * esize)
        backend.fill_pattern(buf, sub.lower, sub.extents, glob.lower, glob.extents, esize, seed)
        assert backend.verify_pattern(buf, sub.lower, sub.extents,
                                      glob.lower, glob.extents, esize, seed) == -1
        # corrupt one element; reported index is its global linear index
        victim = rng.randrange(volume(sub))
        buf[victim * esize] ^= 0x5A
        got = backend.verify_pattern(buf, sub.lower, sub.extents,
                                     glob.lower, glob.extents, esize, seed)
        coords = sorted(voxels(sub))[victim]
        assert got == global_linear_index(glob, coords)

    def test_rejects_odd_element_size(self, backend):
        with pytest.raises(ValueError):
            backend.fill_pattern(bytearray(12), (0,), (4,), (0,), (4,), 3, 1)


class TestBackendParity:
    def test_fill_identical_across_backends(self):
        if len(BACKENDS) < 2:
            pytest.skip("compiled backend not built")
        rng = random.Random(23)
        mods = [kernels.load_backend(n) for n in BACKENDS]
        for _ in range(30):
            nd = rng.randint(1, 3)
            glob = random_box(rng, nd, max_extent=12, lo_range=(0, 2))
            sub = glob
            esize = rng.choice([1, 2, 4, 8])
            seed = rng.getrandbits(64)
            bufs = []
            for m in mods:
                b = bytearray(volume(sub) * esize)
                m.fill_pattern(b, sub.lower, sub.extents, glob.lower, glob.extents, esize, seed)
                bufs.append(b)
            assert all(b == bufs[0] for b in bufs)

    def test_copy_identical_across_backends(self):
        if len(BACKENDS) < 2:
            pytest.skip("compiled backend not built")
        rng = random.Random(24)
        mods = [kernels.load_backend(n) for n in BACKENDS]
        for _ in range(30):
            nd = rng.randint(1, 3)
            region = random_box(rng, nd, max_extent=5, lo_range=(0, 4))
            src_box = NDBox(tuple(l - rng.randint(0, 2) for l in region.lower),
                            tuple(u + rng.randint(0, 2) for u in region.upper))
            dst_box = NDBox(tuple(l - rng.randint(0, 2) for l in region.lower),
                            tuple(u + rng.randint(0, 2) for u in region.upper))
            esize = rng.choice([1, 4, 8])
            src = bytes(rng.getrandbits(8) for _ in range(volume(src_box) * esize))
            base = bytes(rng.getrandbits(8) for _ in range(volume(dst_box) * esize))
            outs = []
            for m in mods:
                dst = bytearray(base)
                m.copy_region_bytes(dst, dst_box.lower, dst_box.extents,
                                    src, src_box.lower, src_box.extents,
                                    region.lower, region.extents, esize)
                outs.append(dst)
            assert all(o == outs[0] for o in outs)
