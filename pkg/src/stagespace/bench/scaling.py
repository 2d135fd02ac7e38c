"""Strong/weak scaling driver: writer and reader swarms over live servers.

The run stages a 2-D variable shaped ``writers x Y``: each writer owns one
row slab, each reader fetches one column slab, so every reader touches every
writer's data (fully transposed redistribution). Strong scaling fixes the
total bytes per timestep while clients vary; weak scaling fixes the bytes
per client.

Per timestep the drill is barrier -> all writers put version t -> barrier ->
all readers get version t and verify it against the seeded pattern.
Response time for a role is wall time from the first client starting to the
last finishing; pattern fill and verification run outside the timed window.
Servers and clients run as separate OS processes; the driver reuses the
protocol's barrier frames from a small in-driver rendezvous thread.
"""

from __future__ import annotations

import dataclasses
import logging
import multiprocessing
import os
import signal
import socket
import threading
import time
from dataclasses import dataclass
from queue import Empty

from .. import wire
from ..directory import DistGrid
from ..client import StagingSession
from ..errors import ConfigError
from ..geometry import NDBox, RegionBuffer
from ..server import ServerConfig, run_server
from ..tier import TierConfig, parse_tier_spec
from .pattern import fill_buffer, verify_buffer
from .report import BenchReport

log = logging.getLogger("stagespace.scaling")

MODES = ("strong", "weak")
VAR = "u"

SERVER_READY_TIMEOUT_S = 20.0
CLIENT_GRACE_S = 60.0


@dataclass
class ScalingConfig:
    mode: str  # strong | weak
    writers: int
    readers: int
    servers: int
    timesteps: int
    bytes_per: int  # strong: total per timestep; weak: per writer
    tier: str = "heap"
    element_size: int = 8
    max_versions: int = 10
    client_timeout_ms: int = 60_000

    def validate(self) -> "ScalingConfig":
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        for name in ("writers", "readers", "servers", "timesteps"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.bytes_per <= 0:
            raise ConfigError("bytes must be > 0")
        if self.bytes_per % self.element_size:
            raise ConfigError("bytes must be a multiple of element_size")
        total = self.total_bytes()
        elements = total // self.element_size
        if elements % self.writers:
            raise ConfigError(f"{elements} elements do not divide evenly "
                              f"over {self.writers} writers")
        y = elements // self.writers
        if y % self.readers:
            raise ConfigError(f"row length {y} does not divide evenly over "
                              f"{self.readers} readers")
        if y % self.servers:
            raise ConfigError(f"row length {y} does not divide evenly over "
                              f"{self.servers} servers")
        return self

    def total_bytes(self) -> int:
        return self.bytes_per if self.mode == "strong" \
            else self.bytes_per * self.writers

    def grid(self) -> DistGrid:
        y = self.total_bytes() // self.element_size // self.writers
        global_box = NDBox((0, 0), (self.writers, y))
        return DistGrid(global_box, (1, y // self.servers), self.servers)

    def tier_for(self, server_id: int) -> TierConfig:
        retained = min(self.timesteps, self.max_versions)
        capacity = 2 * self.total_bytes() * retained // self.servers \
            + (64 << 20)
        cfg = parse_tier_spec(self.tier, default_capacity=capacity)
        return _uniquify_backing(cfg, server_id)


def _uniquify_backing(cfg: TierConfig, server_id: int) -> TierConfig:
    """Give every server process its own backing file."""
    if cfg.kind == "mmap":
        return dataclasses.replace(
            cfg, backing_path=f"{cfg.backing_path}.s{server_id}")
    if cfg.kind == "delayed":
        return dataclasses.replace(
            cfg, inner=_uniquify_backing(cfg.inner, server_id))
    return cfg


# --------------------------------------------------------------------------
# barrier rendezvous


class BarrierHost:
    """Round-numbered rendezvous for a fixed set of client connections.

    Clients send a BARRIER frame with corr_id = round and block on the
    matching reply; the host answers once every party has checked in.
    """

    def __init__(self, parties: int, rounds: int):
        self.parties = parties
        self.rounds = rounds
        self._listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._listener.bind(("127.0.0.1", 0))
        self._listener.listen(parties)
        self.address = self._listener.getsockname()
        self._thread = threading.Thread(target=self._run,
                                        name="barrier-host", daemon=True)

    def start(self):
        self._thread.start()

    def _run(self):
        conns = []
        try:
            for _ in range(self.parties):
                conn, _ = self._listener.accept()
                conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                conns.append(conn)
            for rnd in range(self.rounds):
                for conn in conns:
                    msg = wire.read_message(conn)
                    if msg.msg_type != wire.MSG_BARRIER or msg.corr_id != rnd:
                        raise wire.ProtocolError(
                            f"barrier expected round {rnd}, got "
                            f"{msg.msg_type}/{msg.corr_id}")
                for conn in conns:
                    wire.send_message(conn, wire.MSG_BARRIER, rnd)
        except (OSError, wire.ProtocolError) as exc:
            log.warning("barrier host stopping: %s", exc)
        finally:
            for conn in conns:
                conn.close()
            self._listener.close()

    def close(self):
        try:
            self._listener.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._listener.close()
        self._thread.join(timeout=5)


def _barrier(sock: socket.socket, rnd: int):
    wire.send_message(sock, wire.MSG_BARRIER, rnd)
    msg = wire.read_message(sock)
    if msg.msg_type != wire.MSG_BARRIER or msg.corr_id != rnd:
        raise wire.ProtocolError(f"unexpected barrier reply for round {rnd}")


# --------------------------------------------------------------------------
# client processes


def _client_box(cfg: ScalingConfig, role: str, idx: int) -> NDBox:
    grid = cfg.grid()
    _, y = grid.global_box.extents
    if role == "writer":
        return NDBox((idx, 0), (idx + 1, y))
    width = y // cfg.readers
    return NDBox((0, idx * width), (cfg.writers, (idx + 1) * width))


def _client_main(cfg: ScalingConfig, role: str, idx: int,
                 servers: list[tuple[str, int]],
                 barrier_addr: tuple[str, int], queue):
    """One writer or reader process: lockstep timesteps, report timings."""
    rows = []  # (timestep, t_start, t_end, bytes_moved, ok)
    error = None
    try:
        grid = cfg.grid()
        box = _client_box(cfg, role, idx)
        session = StagingSession(servers, grid, cfg.element_size,
                                 timeout_ms=cfg.client_timeout_ms)
        bsock = socket.create_connection(barrier_addr, timeout=30)
        bsock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        nbytes = (box.extents[0] * box.extents[1]) * cfg.element_size
        buf = RegionBuffer(box, cfg.element_size) if role == "writer" \
            else None
        for t in range(cfg.timesteps):
            ok = True
            if role == "writer":
                fill_buffer(buf, grid.global_box, VAR, t)  # untimed
                _barrier(bsock, 2 * t)
                t0 = time.monotonic()
                try:
                    session.put(VAR, t, buf)
                except Exception as exc:  # noqa: BLE001 - keep lockstep
                    ok = False
                    log.error("writer %d put t=%d failed: %s", idx, t, exc)
                t1 = time.monotonic()
                _barrier(bsock, 2 * t + 1)
            else:
                _barrier(bsock, 2 * t)
                _barrier(bsock, 2 * t + 1)  # writers finished version t
                t0 = time.monotonic()
                try:
                    got = session.get(VAR, t, box)
                except Exception as exc:  # noqa: BLE001 - keep lockstep
                    ok = False
                    got = None
                    log.error("reader %d get t=%d failed: %s", idx, t, exc)
                t1 = time.monotonic()
                if got is not None:
                    first_bad = verify_buffer(got, grid.global_box, VAR, t)
                    if first_bad != -1:
                        ok = False
                        log.error("reader %d t=%d mismatch at linear "
                                  "index %d", idx, t, first_bad)
            rows.append((t, t0, t1, nbytes if ok else 0, ok))
        session.close()
        bsock.close()
    except Exception as exc:  # noqa: BLE001 - surfaced by the driver
        error = f"{type(exc).__name__}: {exc}"
    queue.put((role, idx, rows, error))


# --------------------------------------------------------------------------
# driver


def _reserve_ports(count: int) -> list[tuple[str, int]]:
    socks, addrs = [], []
    for _ in range(count):
        s = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        s.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        s.bind(("127.0.0.1", 0))
        socks.append(s)
        addrs.append(s.getsockname())
    for s in socks:
        s.close()
    return addrs


def _server_main(cfg: ScalingConfig, server_id: int,
                 peers: list[tuple[str, int]]):
    grid = cfg.grid()
    run_server(ServerConfig(server_id=server_id, peers=peers,
                            tier=cfg.tier_for(server_id),
                            global_box=grid.global_box,
                            block_extent=grid.block_extent,
                            max_versions=cfg.max_versions))


def _wait_listening(addrs: list[tuple[str, int]], deadline: float):
    for addr in addrs:
        while True:
            try:
                with socket.create_connection(addr, timeout=1):
                    break
            except OSError:
                if time.monotonic() > deadline:
                    raise ConfigError(f"server at {addr} never came up") \
                        from None
                time.sleep(0.05)


def start_servers(cfg: ScalingConfig):
    """Fork one staging server process per shard; returns (procs, addrs)."""
    ctx = multiprocessing.get_context("fork")
    addrs = _reserve_ports(cfg.servers)
    procs = [ctx.Process(target=_server_main, args=(cfg, i, addrs),
                         name=f"stage-server-{i}") for i in range(cfg.servers)]
    for p in procs:
        p.start()
    _wait_listening(addrs, time.monotonic() + SERVER_READY_TIMEOUT_S)
    return procs, addrs


def stop_servers(procs):
    for p in procs:
        if p.is_alive():
            p.terminate()  # SIGTERM -> graceful drain
    for p in procs:
        p.join(timeout=10)
        if p.is_alive():
            os.kill(p.pid, signal.SIGKILL)
            p.join(timeout=5)


def run_scaling(config: ScalingConfig,
                servers: list[tuple[str, int]] | None = None) -> BenchReport:
    """Run the full drill; pass ``servers`` to reuse an external cluster."""
    cfg = config.validate()
    own_servers = servers is None
    procs = []
    if own_servers:
        procs, servers = start_servers(cfg)
    try:
        return _run_clients(cfg, servers)
    finally:
        if own_servers:
            stop_servers(procs)


def _run_clients(cfg: ScalingConfig,
                 servers: list[tuple[str, int]]) -> BenchReport:
    parties = cfg.writers + cfg.readers
    host = BarrierHost(parties, rounds=2 * cfg.timesteps)
    host.start()
    ctx = multiprocessing.get_context("fork")
    queue = ctx.Queue()
    clients = []
    for role, count in (("writer", cfg.writers), ("reader", cfg.readers)):
        for idx in range(count):
            p = ctx.Process(target=_client_main,
                            args=(cfg, role, idx, servers, host.address,
                                  queue),
                            name=f"stage-{role}-{idx}")
            p.start()
            clients.append(p)

    results = {"writer": {}, "reader": {}}
    errors = []
    deadline = time.monotonic() + CLIENT_GRACE_S \
        + cfg.timesteps * (cfg.client_timeout_ms / 1000.0)
    try:
        for _ in clients:
            remaining = deadline - time.monotonic()
            try:
                role, idx, rows, error = queue.get(
                    timeout=max(0.0, remaining))
            except Empty:
                raise ConfigError("scaling clients stalled; aborting run") \
                    from None
            results[role][idx] = rows
            if error:
                errors.append(f"{role} {idx}: {error}")
        for p in clients:
            p.join(timeout=10)
    finally:
        for p in clients:
            if p.is_alive():
                p.terminate()
        host.close()
    for line in errors:
        log.error("client failed: %s", line)

    report = BenchReport("scaling")
    for role, count in (("writer", cfg.writers), ("reader", cfg.readers)):
        _emit_role(report, cfg, role, count, results[role],
                   failed_hard=bool(errors))
    return report


def _emit_role(report: BenchReport, cfg: ScalingConfig, role: str,
               count: int, per_client: dict[int, list], failed_hard: bool):
    responses = []
    all_ok = not failed_hard and len(per_client) == count
    for t in range(cfg.timesteps):
        samples = [rows[t] for rows in per_client.values()
                   if len(rows) > t]
        if not samples:
            report.add(cfg.mode, role, count, cfg.servers, str(t), 0, 0.0,
                       "FAILED")
            all_ok = False
            continue
        response = max(s[2] for s in samples) - min(s[1] for s in samples)
        nbytes = sum(s[3] for s in samples)
        ok = all(s[4] for s in samples) and len(samples) == count
        all_ok = all_ok and ok
        responses.append(response)
        report.add(cfg.mode, role, count, cfg.servers, str(t), nbytes,
                   round(response, 6), "PASSED" if ok else "FAILED")
    mean = sum(responses) / len(responses) if responses else 0.0
    report.add(cfg.mode, role, count, cfg.servers, "mean",
               cfg.total_bytes(), round(mean, 6),
               "PASSED" if all_ok else "FAILED")
