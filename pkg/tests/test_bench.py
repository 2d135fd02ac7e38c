"""Benchmark driver tests: reports, devbench mechanics, scaling smoke."""

import random
import socket
import threading
import time

import pytest

from stagespace import wire
from stagespace.bench.devbench import (DevbenchConfig, _Budget, _SeqCursor,
                                       run_devbench)
from stagespace.bench.kernelbench import KernelbenchConfig, run_kernelbench
from stagespace.bench.pattern import fill_buffer, pattern_seed, verify_buffer
from stagespace.bench.report import (BenchReport, emit_report, parse_report,
                                     render_report)
from stagespace.bench.scaling import (BarrierHost, ScalingConfig, _barrier,
                                      run_scaling)
from stagespace.errors import ConfigError
from stagespace.geometry import NDBox, RegionBuffer


# --------------------------------------------------------------------------
# reports


def test_report_round_trip(tmp_path):
    rep = BenchReport("devbench")
    rep.add("seq", "write", 4096, 2, 4, 1, 812.5, 208000.0, 18.2, 44.9)
    rep.add("rand", "read", 65536, 8, 1, 0, 1423.031, 22768.5, 350.0, 912.25)
    path = tmp_path / "dev.csv"
    emit_report(rep, str(path))
    back = parse_report(str(path))
    assert back.kind == "devbench"
    assert back.rows == rep.rows


def test_report_emission_is_deterministic(tmp_path):
    rep = BenchReport("scaling")
    rep.add("strong", "writer", 4, 2, "0", 1 << 20, 0.25, "PASSED")
    rep.add("strong", "writer", 4, 2, "mean", 1 << 20, 0.25, "PASSED")
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    emit_report(rep, str(a))
    emit_report(parse_report(str(a)), str(b))
    assert a.read_bytes() == b.read_bytes()


def test_report_rejects_unknown_kind_and_short_rows():
    with pytest.raises(ConfigError):
        BenchReport("plotbench")
    rep = BenchReport("scaling")
    with pytest.raises(ValueError):
        rep.add("strong", "writer", 4)


def test_scaling_mean_row_survives_round_trip(tmp_path):
    rep = BenchReport("scaling")
    rep.add("weak", "reader", 8, 4, "mean", 123, 1.5, "FAILED")
    path = tmp_path / "s.csv"
    emit_report(rep, str(path))
    row = parse_report(str(path)).rows[0]
    assert row[4] == "mean" and isinstance(row[5], int)


def test_kernelbench_report_kind(tmp_path):
    rep = BenchReport("kernelbench")
    rep.add("python", "fill", 1 << 20, 0.5, 2.0)
    path = tmp_path / "k.csv"
    emit_report(rep, str(path))
    assert parse_report(str(path)).rows == rep.rows


# --------------------------------------------------------------------------
# seeded pattern


def test_pattern_seed_distinct_across_vars_and_versions():
    seeds = {pattern_seed(var, version)
             for var in ("u", "v", "rho", "energy")
             for version in range(64)}
    assert len(seeds) == 4 * 64


def test_pattern_fill_verify_round_trip():
    glob = NDBox((0, 0), (16, 32))
    buf = RegionBuffer(NDBox((3, 8), (9, 20)), 8)
    fill_buffer(buf, glob, "u", 5)
    assert verify_buffer(buf, glob, "u", 5) == -1
    assert verify_buffer(buf, glob, "u", 6) != -1
    assert verify_buffer(buf, glob, "w", 5) != -1


def test_pattern_detects_single_flipped_byte():
    rng = random.Random(11)
    glob = NDBox((0,), (4096,))
    for _ in range(20):
        buf = RegionBuffer(glob, 8)
        fill_buffer(buf, glob, "x", 3)
        index = rng.randrange(len(buf.data))
        buf.data[index] ^= 0x40
        assert verify_buffer(buf, glob, "x", 3) == index // 8


# --------------------------------------------------------------------------
# devbench


def test_devbench_config_validation():
    ok = DevbenchConfig(target="heap:8M", size_bytes=8 << 20)
    ok.validate()
    bad = [
        dict(pattern="zigzag"),
        dict(rw="trim"),
        dict(bs=256),
        dict(jobs=0),
        dict(qd=0),
        dict(runtime_s=0, total_bytes=0),
        dict(jobs=4, bs=4 << 20, size_bytes=8 << 20),
        dict(use_processes=True),  # tier target
    ]
    for overrides in bad:
        params = dict(target="heap:8M", size_bytes=8 << 20)
        params.update(overrides)
        with pytest.raises(ConfigError):
            DevbenchConfig(**params).validate()


def test_devbench_target_kind_detection(tmp_path):
    assert DevbenchConfig(target="heap:1M").tier_config() is not None
    assert DevbenchConfig(target="delayed:10:0:heap:1M").tier_config() \
        is not None
    assert DevbenchConfig(target=str(tmp_path / "x.img")).tier_config() \
        is None


def test_budget_grants_exactly_n_under_contention():
    budget = _Budget(bs=4096, total_bytes=4096 * 1000, deadline=None)
    grants = []
    lock = threading.Lock()

    def worker():
        mine = 0
        while budget.reserve():
            mine += 1
        with lock:
            grants.append(mine)

    threads = [threading.Thread(target=worker) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert sum(grants) == 1000


def test_budget_deadline_stops_grants():
    budget = _Budget(bs=512, total_bytes=0,
                     deadline=time.monotonic() + 0.05)
    assert budget.reserve()
    time.sleep(0.08)
    assert not budget.reserve()


def test_seq_cursor_walks_own_stripe_and_wraps():
    cursor = _SeqCursor(first_op=100, op_count=5)
    seen = [cursor.next_index() for _ in range(12)]
    assert seen[:5] == [100, 101, 102, 103, 104]
    assert seen[5:10] == seen[:5]
    assert min(seen) == 100 and max(seen) == 104


def test_devbench_tier_write_row_accounting():
    cfg = DevbenchConfig(target="heap:8M", pattern="rand", rw="write",
                         bs=4096, jobs=2, qd=2, runtime_s=0,
                         total_bytes=1 << 21, size_bytes=8 << 20, seed=5)
    row = run_devbench(cfg).rows[0]
    pattern, rw, bs, jobs, qd, direct, mib, iops, mean_lat, p99 = row
    assert (pattern, rw, bs, jobs, qd, direct) == ("rand", "write", 4096,
                                                   2, 2, 0)
    assert mib > 0 and iops > 0
    # bytes cap 2 MiB at 4 KiB transfers: throughput/iops ratio is the
    # transfer size (columns are rounded to 3 decimals independently)
    assert mib / iops == pytest.approx(4096 / (1 << 20), rel=1e-3)
    assert p99 >= mean_lat > 0


def test_devbench_tier_read_requires_no_warmup_crash():
    cfg = DevbenchConfig(target="heap:4M", pattern="seq", rw="read",
                         bs=4096, runtime_s=0, total_bytes=1 << 20,
                         size_bytes=4 << 20)
    row = run_devbench(cfg).rows[0]
    assert row[6] > 0


def test_devbench_file_roundtrip_and_direct_column(tmp_path):
    path = str(tmp_path / "bench.img")
    cfg = DevbenchConfig(target=path, pattern="seq", rw="mix50", bs=4096,
                         jobs=2, qd=1, runtime_s=0, total_bytes=1 << 21,
                         size_bytes=8 << 20, seed=9)
    row = run_devbench(cfg).rows[0]
    assert row[5] in (0, 1)
    assert row[6] > 0
    forced = DevbenchConfig(target=path, pattern="seq", rw="write", bs=4096,
                            runtime_s=0, total_bytes=1 << 20,
                            size_bytes=8 << 20, direct=False)
    assert run_devbench(forced).rows[0][5] == 0


def test_devbench_process_mode_matches_thread_accounting(tmp_path):
    path = str(tmp_path / "proc.img")
    cfg = DevbenchConfig(target=path, pattern="rand", rw="write", bs=8192,
                         jobs=2, qd=2, runtime_s=0, total_bytes=1 << 21,
                         size_bytes=8 << 20, use_processes=True)
    row = run_devbench(cfg).rows[0]
    assert row[6] / row[7] == pytest.approx(8192 / (1 << 20), rel=1e-3)


def test_devbench_delayed_tier_injects_latency():
    base = dict(pattern="rand", rw="write", bs=4096, jobs=1, qd=1,
                runtime_s=0.3, size_bytes=1 << 20)
    fast = run_devbench(DevbenchConfig(target="heap:1M", **base)).rows[0]
    slow = run_devbench(DevbenchConfig(target="delayed:2000:0:heap:1M",
                                       **base)).rows[0]
    assert slow[8] >= 2000.0  # mean latency floor = per-op delay
    assert slow[7] < fast[7]  # iops collapse under the injected delay


# --------------------------------------------------------------------------
# scaling


def test_scaling_config_validation():
    ok = ScalingConfig(mode="strong", writers=4, readers=4, servers=2,
                       timesteps=2, bytes_per=1 << 20)
    ok.validate()
    for overrides in (dict(mode="wide"), dict(writers=0),
                      dict(bytes_per=0), dict(bytes_per=12),
                      dict(writers=3), dict(readers=7), dict(servers=5)):
        params = dict(mode="strong", writers=4, readers=4, servers=2,
                      timesteps=2, bytes_per=1 << 20)
        params.update(overrides)
        with pytest.raises(ConfigError):
            ScalingConfig(**params).validate()


def test_scaling_weak_mode_total_scales_with_writers():
    cfg = ScalingConfig(mode="weak", writers=8, readers=4, servers=2,
                        timesteps=1, bytes_per=64 << 10)
    assert cfg.total_bytes() == 8 * (64 << 10)
    grid = cfg.grid()
    assert grid.global_box.extents[0] == 8
    assert grid.global_box.extents[0] * grid.global_box.extents[1] * 8 \
        == cfg.total_bytes()


def test_scaling_tier_backing_paths_are_per_server(tmp_path):
    cfg = ScalingConfig(mode="strong", writers=2, readers=2, servers=2,
                        timesteps=1, bytes_per=1 << 20,
                        tier=f"mmap:{tmp_path}/stage.dat")
    t0, t1 = cfg.tier_for(0), cfg.tier_for(1)
    assert t0.backing_path.endswith(".s0")
    assert t1.backing_path.endswith(".s1")
    wrapped = ScalingConfig(mode="strong", writers=2, readers=2, servers=2,
                            timesteps=1, bytes_per=1 << 20,
                            tier=f"delayed:10:0:mmap:{tmp_path}/d.dat")
    assert wrapped.tier_for(1).inner.backing_path.endswith(".s1")


def test_barrier_host_rendezvous_blocks_until_all_arrive():
    host = BarrierHost(parties=3, rounds=2)
    host.start()
    passed = []
    gate = threading.Barrier(3)

    def party(delay):
        sock = socket.create_connection(host.address, timeout=5)
        gate.wait()
        time.sleep(delay)
        _barrier(sock, 0)
        passed.append(time.monotonic())
        _barrier(sock, 1)
        sock.close()

    threads = [threading.Thread(target=party, args=(d,))
               for d in (0.0, 0.0, 0.15)]
    start = time.monotonic()
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    host.close()
    # nobody clears round 0 before the slowest party arrives
    assert all(when - start >= 0.14 for when in passed)


def test_barrier_rejects_wrong_round():
    host = BarrierHost(parties=1, rounds=1)
    host.start()
    sock = socket.create_connection(host.address, timeout=5)
    wire.send_message(sock, wire.MSG_BARRIER, 7)  # host expects round 0
    assert sock.recv(1) == b""  # host drops the rendezvous
    sock.close()
    host.close()


def test_scaling_smoke_strong(tmp_path):
    cfg = ScalingConfig(mode="strong", writers=2, readers=2, servers=1,
                        timesteps=2, bytes_per=256 << 10,
                        client_timeout_ms=20_000)
    report = run_scaling(cfg)
    assert report.kind == "scaling"
    assert len(report.rows) == 2 * (2 + 1)  # per-step rows + mean per role
    writer_rows = [r for r in report.rows if r[1] == "writer"]
    reader_rows = [r for r in report.rows if r[1] == "reader"]
    assert [r[4] for r in writer_rows] == ["0", "1", "mean"]
    assert [r[4] for r in reader_rows] == ["0", "1", "mean"]
    assert all(r[7] == "PASSED" for r in report.rows)
    assert all(r[5] == 256 << 10 for r in report.rows)
    per_step = [r[6] for r in writer_rows[:-1]]
    assert writer_rows[-1][6] == pytest.approx(sum(per_step) / 2, rel=1e-3)
    assert all(r[6] > 0 for r in report.rows)


# --------------------------------------------------------------------------
# kernel comparison


def test_kernelbench_covers_every_backend():
    from stagespace.kernels import available_backends
    report = run_kernelbench(KernelbenchConfig(size_bytes=1 << 20,
                                               repeats=1))
    backends = {row[0] for row in report.rows}
    assert backends == set(available_backends())
    assert {row[1] for row in report.rows} == {"fill", "verify", "copy"}
    assert all(row[4] > 0 for row in report.rows)


def test_kernelbench_backend_subset_and_rejection():
    report = run_kernelbench(KernelbenchConfig(size_bytes=1 << 20,
                                               repeats=1,
                                               backends=("python",)))
    assert {row[0] for row in report.rows} == {"python"}
    with pytest.raises(ConfigError):
        KernelbenchConfig(backends=("fortran",)).validate()


# --------------------------------------------------------------------------
# command line


def test_cli_devbench_grid_rows(tmp_path, capsys):
    from stagespace.cli import main
    out = tmp_path / "grid.csv"
    code = main(["devbench", "--target", "heap:8M", "--pattern", "seq,rand",
                 "--rw", "write", "--bs", "4K,8K", "--jobs", "1", "--qd",
                 "1", "--runtime", "0", "--total-bytes", "512K", "--size",
                 "8M", "--out", str(out)])
    assert code == 0
    report = parse_report(str(out))
    assert len(report.rows) == 4
    assert {(r[0], r[2]) for r in report.rows} \
        == {("seq", 4096), ("seq", 8192), ("rand", 4096), ("rand", 8192)}


def test_cli_rejects_bad_config(capsys):
    from stagespace.cli import main
    assert main(["devbench", "--target", "heap:8M", "--runtime", "0",
                 "--total-bytes", "0"]) == 2
    assert "at most one" in capsys.readouterr().err


def test_cli_kernelbench_stdout(capsys):
    from stagespace.cli import main
    assert main(["kernelbench", "--size", "1M", "--repeats", "1",
                 "--backends", "python", "--out", "-"]) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0] == "backend,op,bytes,elapsed_s,mib_per_s"
    assert len(out.splitlines()) == 4
