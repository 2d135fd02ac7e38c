"""Staging server: request handling, blocking gets, and peer notification.

One server owns a deterministic subset of distribution blocks (see
:mod:`stagespace.directory`) and stores the bytes for puts routed to it on a
single storage tier. The request path for PUT is strictly ordered: allocate,
write, flush, journal, register, wake blocked gets, enqueue peer NOTIFYs,
acknowledge — so a PUT_ACK is never observable before the data is flushed on
the tier.

GETs whose coverage is incomplete park on a wait queue and are answered by
whichever put completes the coverage (or time out). Peer notification is
asynchronous with bounded retries and never gates the PUT_ACK; correctness
never depends on it because clients route requests to block owners directly.

Durable descriptor metadata lives in a sidecar journal next to the tier's
backing file (``<backing>.jrnl``). On restart the journal is replayed and
validated against the tier's recovered chunk table, so descriptors whose
chunks were evicted or never flushed are dropped.
"""

from __future__ import annotations

import binascii
import logging
import os
import queue
import socket
import struct
import threading
import time
from dataclasses import dataclass, field

from . import wire
from .directory import Directory, DistGrid, ObjectDescriptor, blocks_of, \
    default_block_extent, shard_owner
from .errors import CapacityError, ConfigError, ConnectionClosed, \
    LifecycleError, ProtocolError, StagingError
from .geometry import NDBox, RegionBuffer, copy_region, intersect
from .tier import TierConfig, open_tier, parse_tier_spec

log = logging.getLogger("stagespace.server")

NOTIFY_ATTEMPTS = 3
NOTIFY_BACKOFF_S = 0.05  # doubles per retry
NOTIFY_IO_TIMEOUT_S = 2.0


# --------------------------------------------------------------------------
# configuration


@dataclass
class ServerConfig:
    """One server's identity, cluster layout, and storage backend.

    ``peers`` lists the advertised address of every server in the cluster,
    indexed by server id (it includes this server). ``listen`` defaults to
    this server's own peer entry.
    """

    server_id: int
    peers: list[tuple[str, int]]
    tier: TierConfig
    global_box: NDBox
    block_extent: tuple[int, ...] | None = None
    max_versions: int = 10
    workers: int = field(default_factory=lambda: os.cpu_count() or 1)
    listen: tuple[str, int] | None = None
    journal: str | None = "auto"  # auto | none | explicit path

    def validate(self) -> "ServerConfig":
        if not self.peers:
            raise ConfigError("peers must list at least one server")
        if not 0 <= self.server_id < len(self.peers):
            raise ConfigError(f"server_id {self.server_id} out of range for "
                              f"{len(self.peers)} peers")
        if self.max_versions < 1:
            raise ConfigError("max_versions must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        self.tier.validate()
        if self.block_extent is None:
            self.block_extent = default_block_extent(self.global_box,
                                                     len(self.peers))
        # Raises on non-dividing block extents.
        DistGrid(self.global_box, self.block_extent, len(self.peers))
        if self.listen is None:
            self.listen = self.peers[self.server_id]
        return self

    def grid(self) -> DistGrid:
        return DistGrid(self.global_box, self.block_extent, len(self.peers))

    def journal_path(self) -> str | None:
        if self.journal == "none":
            return None
        if self.journal not in (None, "auto"):
            return self.journal
        backing = _backing_path(self.tier)
        return backing + ".jrnl" if backing else None


def _backing_path(cfg: TierConfig) -> str | None:
    while cfg.kind == "delayed":
        cfg = cfg.inner
    return cfg.backing_path if cfg.kind == "mmap" else None


def parse_hostport(text: str) -> tuple[str, int]:
    host, sep, port = text.strip().rpartition(":")
    if not sep or not host:
        raise ConfigError(f"expected host:port, got {text!r}")
    try:
        return host, int(port)
    except ValueError:
        raise ConfigError(f"bad port in {text!r}") from None


def parse_box(text: str) -> NDBox:
    """Parse ``lo:hi,lo:hi,...`` (one ``lo:hi`` range per dimension)."""
    lower, upper = [], []
    for dim in text.split(","):
        lo, sep, hi = dim.partition(":")
        if not sep:
            raise ConfigError(f"expected lo:hi per dimension, got {text!r}")
        try:
            lower.append(int(lo))
            upper.append(int(hi))
        except ValueError:
            raise ConfigError(f"bad bound in {dim!r}") from None
    try:
        return NDBox(tuple(lower), tuple(upper))
    except ValueError as exc:
        raise ConfigError(f"bad box {text!r}: {exc}") from None


_CONFIG_KEYS = ("server_id", "listen", "peers", "tier", "global_box",
                "block_extent", "max_versions", "workers", "journal")


def parse_config(text: str) -> ServerConfig:
    """Parse the ``key = value`` server config format (# starts a comment)."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not value:
            raise ConfigError(f"line {lineno}: expected key = value")
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r} "
                              f"(known: {', '.join(_CONFIG_KEYS)})")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = value
    for required in ("server_id", "peers", "tier", "global_box"):
        if required not in values:
            raise ConfigError(f"missing required key {required!r}")
    try:
        server_id = int(values["server_id"])
        max_versions = int(values.get("max_versions", 10))
        workers = int(values.get("workers", os.cpu_count() or 1))
    except ValueError as exc:
        raise ConfigError(f"bad integer value: {exc}") from None
    block_extent = None
    if "block_extent" in values:
        try:
            block_extent = tuple(int(x) for x in
                                 values["block_extent"].split(","))
        except ValueError:
            raise ConfigError(
                f"bad block_extent {values['block_extent']!r}") from None
    cfg = ServerConfig(
        server_id=server_id,
        peers=[parse_hostport(p) for p in values["peers"].split(",")],
        tier=parse_tier_spec(values["tier"]),
        global_box=parse_box(values["global_box"]),
        block_extent=block_extent,
        max_versions=max_versions,
        workers=workers,
        listen=parse_hostport(values["listen"]) if "listen" in values
        else None,
        journal=values.get("journal", "auto"),
    )
    return cfg.validate()


def load_config(path: str) -> ServerConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


# --------------------------------------------------------------------------
# descriptor journal


class DescriptorJournal:
    """Append-only crc-protected record log of locally registered descriptors.

    Record layout: ``u32 length | u32 crc32(descriptor bytes) | descriptor``.
    Appends are fsynced before the corresponding PUT_ACK leaves the server.
    Replay stops at the first torn or corrupt record (a crash mid-append),
    and the file is truncated back to the last valid boundary.
    """

    _HDR = struct.Struct("<II")

    def __init__(self, path: str):
        self.path = path
        self._lock = threading.Lock()
        self._fh = open(path, "ab")

    def append(self, desc: ObjectDescriptor):
        raw = wire.encode_descriptor(desc)
        record = self._HDR.pack(len(raw), binascii.crc32(raw)) + raw
        with self._lock:
            self._fh.write(record)
            self._fh.flush()
            os.fsync(self._fh.fileno())

    def close(self):
        with self._lock:
            self._fh.close()

    @classmethod
    def replay(cls, path: str) -> list[ObjectDescriptor]:
        """Read all intact records; truncate any torn tail in place."""
        if not os.path.exists(path):
            return []
        descriptors = []
        with open(path, "rb") as fh:
            data = fh.read()
        pos = 0
        while pos + cls._HDR.size <= len(data):
            length, crc = cls._HDR.unpack_from(data, pos)
            start = pos + cls._HDR.size
            end = start + length
            if end > len(data):
                break  # torn append
            raw = data[start:end]
            if binascii.crc32(raw) != crc:
                break  # corrupt record; nothing after it is trustworthy
            try:
                descriptors.append(wire.decode_descriptor(raw))
            except ProtocolError:
                break
            pos = end
        if pos != len(data):
            log.warning("journal %s: dropping %d bytes of torn tail",
                        path, len(data) - pos)
            with open(path, "r+b") as fh:
                fh.truncate(pos)
        return descriptors


# --------------------------------------------------------------------------
# server


class _Connection:
    """Per-socket state; the send lock serializes responses from the
    connection's own thread and from put threads waking parked gets."""

    __slots__ = ("sock", "send_lock", "peername")

    def __init__(self, sock):
        self.sock = sock
        self.send_lock = threading.Lock()
        try:
            self.peername = sock.getpeername()
        except OSError:
            self.peername = ("?", 0)

    def send(self, msg_type: int, corr_id: int, *parts):
        with self.send_lock:
            wire.send_message(self.sock, msg_type, corr_id, *parts)


@dataclass
class _ParkedGet:
    conn: _Connection
    corr_id: int
    req: wire.GetRequest
    deadline: float


class StagingServer:
    """One staging process: accepts connections, stores owned regions.

    Use :meth:`start` / :meth:`shutdown` for in-process embedding, or
    :meth:`serve_forever` behind the CLI. Every accepted connection gets a
    dedicated thread, so concurrent request executions scale with client
    count (``config.workers`` is the floor advertised to deployments and
    sizes the listen backlog).
    """

    def __init__(self, config: ServerConfig, tier=None):
        config.validate()
        self.config = config
        self.grid = config.grid()
        self.tier = tier if tier is not None else open_tier(config.tier)
        self.directory = Directory(max_versions=config.max_versions)
        journal_path = config.journal_path()
        self.journal = DescriptorJournal(journal_path) if journal_path \
            else None
        self._recovered = 0
        if journal_path:
            self._recover(journal_path)

        self._listener: socket.socket | None = None
        self._stopping = threading.Event()
        self._shutdown_once = threading.Lock()
        self._shutdown_done = False
        self._conns: set[_Connection] = set()
        self._conn_lock = threading.Lock()
        self._threads: list[threading.Thread] = []

        # Parked gets. _park_cond guards _parked; coverage checks run under
        # it so a get can never slip between a put's register and its wake
        # scan (the no-lost-wakeup invariant).
        self._parked: list[_ParkedGet] = []
        self._park_cond = threading.Condition()

        self._notify_q: queue.SimpleQueue = queue.SimpleQueue()
        self._notify_failures = 0
        self._notify_corr = 0
        self._peer_socks: dict[int, socket.socket] = {}

    # -- lifecycle ---------------------------------------------------------

    def start(self):
        cfg = self.config
        listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            listener.bind(cfg.listen)
        except OSError:
            listener.close()
            raise
        listener.listen(max(cfg.workers, 128))
        self._listener = listener
        for target, name in ((self._accept_loop, "accept"),
                             (self._notify_loop, "notify"),
                             (self._expiry_loop, "expiry")):
            t = threading.Thread(target=target, daemon=True,
                                 name=f"stagespace-s{cfg.server_id}-{name}")
            t.start()
            self._threads.append(t)
        log.info("server %d listening on %s:%d (%d descriptors recovered)",
                 cfg.server_id, cfg.listen[0], cfg.listen[1], self._recovered)
        return self

    @property
    def address(self) -> tuple[str, int]:
        """Actual bound address (resolves port 0 after start)."""
        return self._listener.getsockname()

    def serve_forever(self):
        self.start()
        try:
            while not self._stopping.wait(0.25):
                pass
        except KeyboardInterrupt:
            pass
        self.shutdown()

    def shutdown(self):
        """Graceful drain: finish in-flight requests, fail parked gets."""
        with self._shutdown_once:
            if self._shutdown_done:
                return
            self._shutdown_done = True
        self._stopping.set()
        if self._listener is not None:
            try:
                # close() alone does not wake a thread blocked in accept().
                self._listener.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            self._listener.close()
        with self._park_cond:
            parked, self._parked = self._parked, []
            self._park_cond.notify_all()
        for entry in parked:
            self._send_err(entry.conn, entry.corr_id, wire.ERR_SHUTDOWN,
                           "server shutting down")
        self._notify_q.put(None)
        with self._conn_lock:
            conns = list(self._conns)
        for conn in conns:
            try:
                conn.sock.shutdown(socket.SHUT_RD)
            except OSError:
                pass
        for t in self._threads:
            t.join(timeout=10)
        with self._conn_lock:
            conns = list(self._conns)
        for conn in conns:
            conn.sock.close()
        for sock in self._peer_socks.values():
            sock.close()
        if self.journal is not None:
            self.journal.close()
        self.tier.close()

    # -- recovery ----------------------------------------------------------

    def _recover(self, journal_path: str):
        """Replay journaled descriptors, keeping those whose chunks survived
        in the tier (flushed before the crash and not since evicted)."""
        live = dict(self.tier.chunks())
        kept: list[ObjectDescriptor] = []
        for desc in DescriptorJournal.replay(journal_path):
            key = wire.descriptor_key(desc.var, desc.version,
                                      desc.element_size, desc.box)
            handle = live.get(key)
            if handle is None or handle != desc.handle:
                continue
            kept.append(desc)
        for desc in kept:
            for evicted in self.directory.register(desc):
                self._free_local(evicted)
        self._recovered = self.directory.descriptor_count()
        # Rewrite compacted so dead records do not accumulate across restarts.
        tmp = journal_path + ".tmp"
        compacted = DescriptorJournal(tmp)
        for desc in kept:
            if self.directory.query(desc.var, desc.version, desc.box):
                compacted.append(desc)
        compacted.close()
        os.replace(tmp, journal_path)
        self.journal = DescriptorJournal(journal_path)

    # -- connection handling -------------------------------------------------

    def _accept_loop(self):
        while not self._stopping.is_set():
            try:
                sock, _ = self._listener.accept()
            except OSError:
                return  # listener closed by shutdown
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            conn = _Connection(sock)
            with self._conn_lock:
                self._conns.add(conn)
            t = threading.Thread(target=self._serve_connection, args=(conn,),
                                 daemon=True, name="stagespace-conn")
            t.start()
            self._threads.append(t)

    def _serve_connection(self, conn: _Connection):
        try:
            while not self._stopping.is_set():
                try:
                    msg = wire.read_message(conn.sock)
                except ConnectionClosed:
                    return  # peer hung up between messages
                except ProtocolError as exc:
                    # Framing is broken; the stream cannot be resynchronized.
                    log.warning("closing %s: %s", conn.peername, exc)
                    return
                except OSError:
                    return
                self._dispatch(conn, msg)
        finally:
            with self._conn_lock:
                self._conns.discard(conn)
            self._forget_parked(conn)
            conn.sock.close()

    def _dispatch(self, conn: _Connection, msg: wire.Message):
        handler = {
            wire.MSG_PUT: self._handle_put,
            wire.MSG_GET: self._handle_get,
            wire.MSG_NOTIFY: self._handle_notify,
            wire.MSG_STAT: self._handle_stat,
        }.get(msg.msg_type)
        if handler is None:
            self._send_err(conn, msg.corr_id, wire.ERR_BAD_REQUEST,
                           f"unknown message type {msg.msg_type}")
            return
        try:
            handler(conn, msg.corr_id, msg.payload)
        except ProtocolError as exc:
            # Payload decode failed but framing held; connection stays open.
            self._send_err(conn, msg.corr_id, wire.ERR_BAD_REQUEST, str(exc))
        except Exception as exc:  # noqa: BLE001 - must answer the client
            log.exception("internal error handling %s",
                          wire.MSG_NAMES.get(msg.msg_type, msg.msg_type))
            self._send_err(conn, msg.corr_id, wire.ERR_INTERNAL, repr(exc))

    def _send_err(self, conn: _Connection, corr_id: int, code: int,
                  message: str):
        try:
            conn.send(wire.MSG_ERR, corr_id, wire.encode_err(code, message))
        except OSError:
            pass

    # -- request handlers ----------------------------------------------------

    def _handle_put(self, conn: _Connection, corr_id: int, payload):
        req = wire.decode_put(payload)
        err = self._owner_error(req.var, req.box)
        if err:
            self._send_err(conn, corr_id, *err)
            return
        stored = self.directory.element_size_of(req.var, req.version)
        if stored is not None and stored != req.element_size:
            self._send_err(conn, corr_id, wire.ERR_ESIZE,
                           f"{req.var}@{req.version} has element_size "
                           f"{stored}, put used {req.element_size}")
            return
        key = wire.descriptor_key(req.var, req.version, req.element_size,
                                  req.box)
        try:
            handle = self.tier.allocate(len(req.data), key=key)
        except CapacityError as exc:
            self._send_err(conn, corr_id, wire.ERR_STAGING_FULL, str(exc))
            return
        self.tier.write_chunk(handle, req.data)
        self.tier.flush_chunk(handle)
        desc = ObjectDescriptor(req.var, req.version, req.box,
                                req.element_size, self.config.server_id,
                                handle)
        if self.journal is not None:
            self.journal.append(desc)
        evicted = self.directory.register(desc)
        for old in evicted:
            self._free_local(old)
        self._wake_parked(req.var, req.version)
        for peer in range(len(self.config.peers)):
            if peer != self.config.server_id:
                self._notify_q.put((peer, desc))
        conn.send(wire.MSG_PUT_ACK, corr_id)

    def _owner_error(self, var: str, box: NDBox) -> tuple[int, str] | None:
        g = self.grid.global_box
        inside = (box.ndims == g.ndims and
                  all(gl <= bl and bu <= gu for gl, gu, bl, bu in
                      zip(g.lower, g.upper, box.lower, box.upper)))
        if not inside:
            return wire.ERR_BAD_REQUEST, \
                f"box {box} outside global domain {g}"
        for coords in blocks_of(self.grid, box):
            owner = shard_owner(self.grid, var, coords)
            if owner != self.config.server_id:
                return wire.ERR_NOT_OWNER, \
                    (f"block {coords} of {var} belongs to server {owner}, "
                     f"not {self.config.server_id}")
        return None

    def _handle_get(self, conn: _Connection, corr_id: int, payload):
        req = wire.decode_get(payload)
        err = self._owner_error(req.var, req.box)
        if err:
            self._send_err(conn, corr_id, *err)
            return
        with self._park_cond:
            ready = self._get_ready(req)
            if ready is None:
                if req.timeout_ms == 0:
                    self._send_err(conn, corr_id, wire.ERR_TIMEOUT,
                                   f"{req.var}@{req.version} {req.box} "
                                   "not covered (fail-fast)")
                    return
                deadline = time.monotonic() + req.timeout_ms / 1000.0
                self._parked.append(_ParkedGet(conn, corr_id, req, deadline))
                self._park_cond.notify_all()  # retarget the expiry sleeper
                return
        self._answer_get(conn, corr_id, req, ready)

    def _get_ready(self, req: wire.GetRequest):
        """Under _park_cond: error tuple / True when servable / None to park."""
        stored = self.directory.element_size_of(req.var, req.version)
        if stored is not None and stored != req.element_size:
            return (wire.ERR_ESIZE,
                    f"{req.var}@{req.version} has element_size {stored}, "
                    f"get used {req.element_size}")
        if self.directory.is_covered(req.var, req.version, req.box):
            return True
        return None

    def _answer_get(self, conn: _Connection, corr_id: int,
                    req: wire.GetRequest, ready):
        if ready is not True:
            self._send_err(conn, corr_id, *ready)
            return
        try:
            buf = self._assemble(req)
        except LifecycleError as exc:
            self._send_err(conn, corr_id, wire.ERR_INTERNAL,
                           f"region evicted while reading: {exc}")
            return
        try:
            conn.send(wire.MSG_GET_RESP, corr_id, buf.data)
        except OSError:
            pass  # requester hung up; nothing left to do

    def _assemble(self, req: wire.GetRequest) -> RegionBuffer:
        """Overlay intersecting chunks in register order (last writer wins)."""
        out = RegionBuffer(req.box, req.element_size)
        for desc in self.directory.query(req.var, req.version, req.box):
            if desc.owner != self.config.server_id:
                # Replicated metadata for a foreign region can only reach
                # here through a routing bug; its bytes live on its owner.
                raise StagingError(f"descriptor for {desc.box} is owned by "
                                   f"server {desc.owner}")
            part = intersect(desc.box, req.box)
            chunk = self.tier.read_chunk(desc.handle)
            src = RegionBuffer(desc.box, desc.element_size, data=chunk)
            copy_region(src, out, part)
        return out

    def _handle_notify(self, conn: _Connection, corr_id: int, payload):
        desc = wire.decode_descriptor(payload)
        for old in self.directory.register(desc):
            self._free_local(old)
        self._wake_parked(desc.var, desc.version)
        conn.send(wire.MSG_NOTIFY_ACK, corr_id)

    def _handle_stat(self, conn: _Connection, corr_id: int, payload):
        if payload:
            raise ProtocolError("STAT takes no payload")
        stats = self.tier.stats()
        with self._park_cond:
            pending = len(self._parked)
        reply = wire.StatReply(
            used_bytes=stats.used_bytes,
            capacity_bytes=stats.capacity_bytes,
            chunk_count=stats.chunk_count,
            cumulative_read_bytes=stats.cumulative_read_bytes,
            cumulative_write_bytes=stats.cumulative_write_bytes,
            descriptor_count=self.directory.descriptor_count(),
            pending_gets=pending,
            notify_failures=self._notify_failures,
        )
        conn.send(wire.MSG_STAT_RESP, corr_id, wire.encode_stat_reply(reply))

    def _free_local(self, desc: ObjectDescriptor):
        if desc.owner != self.config.server_id:
            return  # replicated metadata; the chunk lives on its owner
        try:
            self.tier.free_chunk(desc.handle)
        except (LifecycleError, KeyError):
            pass

    # -- parked gets ---------------------------------------------------------

    def _wake_parked(self, var: str, version: int):
        """Answer every parked get that the latest register made servable."""
        woken: list[tuple[_ParkedGet, object]] = []
        with self._park_cond:
            keep = []
            for entry in self._parked:
                if entry.req.var == var and entry.req.version == version:
                    ready = self._get_ready(entry.req)
                    if ready is not None:
                        woken.append((entry, ready))
                        continue
                keep.append(entry)
            self._parked = keep
        for entry, ready in woken:
            self._answer_get(entry.conn, entry.corr_id, entry.req, ready)

    def _forget_parked(self, conn: _Connection):
        with self._park_cond:
            self._parked = [e for e in self._parked if e.conn is not conn]

    def _expiry_loop(self):
        while not self._stopping.is_set():
            now = time.monotonic()
            expired = []
            with self._park_cond:
                keep = []
                for entry in self._parked:
                    (expired if entry.deadline <= now else keep).append(entry)
                self._parked = keep
                timeout = 0.5
                if keep:
                    timeout = max(min(e.deadline for e in keep) - now, 0.001)
                if not expired:
                    self._park_cond.wait(timeout)
            for entry in expired:
                self._send_err(entry.conn, entry.corr_id, wire.ERR_TIMEOUT,
                               f"{entry.req.var}@{entry.req.version} "
                               f"{entry.req.box} not covered within "
                               f"{entry.req.timeout_ms}ms")

    # -- peer notification ----------------------------------------------------

    def _notify_loop(self):
        while True:
            item = self._notify_q.get()
            if item is None:
                return
            peer, desc = item
            payload = wire.encode_descriptor(desc)
            delay = NOTIFY_BACKOFF_S
            for attempt in range(NOTIFY_ATTEMPTS):
                if self._notify_once(peer, payload):
                    break
                if attempt + 1 < NOTIFY_ATTEMPTS:
                    if self._stopping.wait(delay):
                        return
                    delay *= 2
            else:
                self._notify_failures += 1
                log.warning("NOTIFY to server %d failed after %d attempts",
                            peer, NOTIFY_ATTEMPTS)

    def _notify_once(self, peer: int, payload: bytes) -> bool:
        sock = self._peer_socks.get(peer)
        try:
            if sock is None:
                sock = socket.create_connection(self.config.peers[peer],
                                                timeout=NOTIFY_IO_TIMEOUT_S)
                sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                self._peer_socks[peer] = sock
            self._notify_corr += 1
            corr = self._notify_corr
            wire.send_message(sock, wire.MSG_NOTIFY, corr, payload)
            resp = wire.read_message(sock)
            return resp.msg_type == wire.MSG_NOTIFY_ACK and \
                resp.corr_id == corr
        except (OSError, StagingError):
            if peer in self._peer_socks:
                self._peer_socks.pop(peer).close()
            return False


def run_server(config: ServerConfig):
    """Blocking CLI entry: serve until SIGTERM/SIGINT."""
    import signal

    server = StagingServer(config)
    orig = {}

    def _stop(signum, frame):
        server._stopping.set()

    for sig in (signal.SIGTERM, signal.SIGINT):
        orig[sig] = signal.signal(sig, _stop)
    try:
        server.serve_forever()
    finally:
        for sig, handler in orig.items():
            signal.signal(sig, handler)
