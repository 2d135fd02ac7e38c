"""Writer/reader session: owner-aware request splitting and reassembly.

A :class:`StagingSession` knows the cluster layout (server addresses plus
the distribution grid) and routes every put/get directly to the servers that
own the touched blocks. Requests for one operation are pipelined per server
connection and issued to distinct servers concurrently; get responses are
stitched back into a single row-major :class:`RegionBuffer`.

Sessions are single-caller objects: one thread drives a session at a time
(benchmark clients hold one session each). The internal fan-out across
servers is invisible to the caller.
"""

from __future__ import annotations

import os
import socket
from concurrent.futures import ThreadPoolExecutor

from . import wire
from .directory import DistGrid, blocks_of, shard_owner
from .errors import ProtocolError, RemoteError, StagingError
from .geometry import NDBox, RegionBuffer, copy_region, intersect, volume

CONNECT_TIMEOUT_S = 10.0
#: Extra socket-level slack on top of a get's own timeout budget.
IO_SLACK_S = 15.0

#: When set, get() pre-fills assembly buffers with this sentinel byte so
#: tests can prove every byte was overwritten by some response.
DEBUG_SENTINEL = 0xA5


def _debug() -> bool:
    return os.environ.get("STAGESPACE_DEBUG", "") not in ("", "0")


def split_box(grid: DistGrid, var: str, box: NDBox) \
        -> list[tuple[int, NDBox]]:
    """Split box into per-owner sub-boxes along distribution-block seams.

    Same-owner runs of blocks are greedily merged into rectangles (grown
    along the last dimension first, matching row-major layout), so a box
    whose blocks all share one owner yields exactly one sub-box. The result
    is deterministic, and the sub-boxes partition ``box``: pairwise disjoint
    with volumes summing to ``volume(box)``.
    """
    coords = blocks_of(grid, box)
    owner_of = {c: shard_owner(grid, var, c) for c in coords}
    unclaimed = set(coords)
    out: list[tuple[int, NDBox]] = []
    for seed in coords:
        if seed not in unclaimed:
            continue
        owner = owner_of[seed]
        lo, hi = list(seed), list(seed)

        def slab(dim: int, at: int) -> list[tuple[int, ...]]:
            ranges = [range(lo[d], hi[d] + 1) if d != dim else (at,)
                      for d in range(len(seed))]
            cells = [()]
            for r in ranges:
                cells = [c + (v,) for c in cells for v in r]
            return cells

        for dim in reversed(range(len(seed))):
            while True:
                nxt = slab(dim, hi[dim] + 1)
                if all(c in unclaimed and owner_of.get(c) == owner
                       for c in nxt):
                    hi[dim] += 1
                else:
                    break
        for c in _cells(lo, hi):
            unclaimed.discard(c)
        rect = NDBox(grid.block_box(tuple(lo)).lower,
                     grid.block_box(tuple(hi)).upper)
        out.append((owner, intersect(rect, box)))
    return out


def _cells(lo: list[int], hi: list[int]) -> list[tuple[int, ...]]:
    cells = [()]
    for l, h in zip(lo, hi):
        cells = [c + (v,) for c in cells for v in range(l, h + 1)]
    return cells


class StagingSession:
    """Client handle on a staging cluster.

    ``servers`` must list one address per grid shard, indexed by server id.
    """

    def __init__(self, servers: list[tuple[str, int]], grid: DistGrid,
                 element_size: int = 8, timeout_ms: int = 30000):
        if len(servers) != grid.server_count:
            raise ValueError(f"{len(servers)} server addresses for a grid "
                             f"sharded over {grid.server_count}")
        if element_size not in wire.ELEMENT_SIZES:
            raise ValueError(f"element_size {element_size} not in "
                             f"{wire.ELEMENT_SIZES}")
        self.servers = list(servers)
        self.grid = grid
        self.element_size = element_size
        self.timeout_ms = timeout_ms
        self._socks: dict[int, socket.socket] = {}
        self._corr = 0
        self._pool: ThreadPoolExecutor | None = None

    # -- connection plumbing -------------------------------------------------

    def _sock(self, server: int) -> socket.socket:
        sock = self._socks.get(server)
        if sock is None:
            sock = socket.create_connection(self.servers[server],
                                            timeout=CONNECT_TIMEOUT_S)
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            self._socks[server] = sock
        return sock

    def _drop_sock(self, server: int):
        sock = self._socks.pop(server, None)
        if sock is not None:
            sock.close()

    def _next_corr(self) -> int:
        self._corr += 1
        return self._corr

    def _fan_out(self, tasks: list):
        """Run one callable per server; inline when only one is involved."""
        if len(tasks) == 1:
            return [tasks[0]()]
        if self._pool is None:
            self._pool = ThreadPoolExecutor(
                max_workers=min(len(self.servers), 16),
                thread_name_prefix="stagespace-client")
        return [f.result() for f in
                [self._pool.submit(t) for t in tasks]]

    def close(self):
        for server in list(self._socks):
            self._drop_sock(server)
        if self._pool is not None:
            self._pool.shutdown(wait=False)
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # -- operations ------------------------------------------------------------

    def put(self, var: str, version: int, buf: RegionBuffer):
        """Store buf under (var, version); returns after every owner ACKs.

        Raises :class:`RemoteError` naming the failing sub-box if any owner
        rejects its part; sub-puts already acknowledged stay in place.
        """
        if buf.element_size != self.element_size:
            raise ValueError(f"buffer element_size {buf.element_size} != "
                             f"session element_size {self.element_size}")
        per_server: dict[int, list[tuple[int, NDBox, object]]] = {}
        for owner, sub in split_box(self.grid, var, buf.box):
            if sub == buf.box:
                data = buf.data
            else:
                tmp = RegionBuffer(sub, self.element_size)
                copy_region(buf, tmp, sub)
                data = tmp.data
            per_server.setdefault(owner, []).append(
                (self._next_corr(), sub, data))

        deadline_s = self.timeout_ms / 1000.0 + IO_SLACK_S

        def one(server: int):
            batch = per_server[server]
            sock = self._sock(server)
            sock.settimeout(deadline_s)
            try:
                for corr, sub, data in batch:
                    parts = wire.encode_put(var, version, self.element_size,
                                            sub, data)
                    wire.send_message(sock, wire.MSG_PUT, corr, *parts)
                return self._collect(sock, {corr: sub
                                            for corr, sub, _ in batch},
                                     wire.MSG_PUT_ACK)
            except (OSError, ProtocolError) as exc:
                self._drop_sock(server)
                return [(sub, wire.ERR_INTERNAL,
                         f"server {server} connection failed: {exc}")
                        for _, sub, _ in batch]

        failures = [f for fails in self._fan_out(
            [lambda s=s: one(s) for s in per_server]) for f in fails]
        self._raise_failures("put", var, version, failures,
                             total=sum(len(b) for b in per_server.values()))

    def get(self, var: str, version: int, box: NDBox,
            timeout_ms: int | None = None) -> RegionBuffer:
        """Fetch box of (var, version), blocking server-side until covered.

        ``timeout_ms`` overrides the session default; 0 means fail fast when
        any part of the box is not yet covered.
        """
        timeout = self.timeout_ms if timeout_ms is None else timeout_ms
        parts = split_box(self.grid, var, box)
        per_server: dict[int, dict[int, NDBox]] = {}
        for owner, sub in parts:
            per_server.setdefault(owner, {})[self._next_corr()] = sub

        out = RegionBuffer(box, self.element_size)
        if _debug():
            out.data[:] = bytes((DEBUG_SENTINEL,)) * len(out.data)
        deadline_s = timeout / 1000.0 + IO_SLACK_S

        def one(server: int):
            pending = per_server[server]
            sock = self._sock(server)
            sock.settimeout(deadline_s)
            try:
                for corr, sub in pending.items():
                    wire.send_message(
                        sock, wire.MSG_GET, corr,
                        wire.encode_get(var, version, self.element_size,
                                        sub, timeout))
                return self._collect(sock, dict(pending), wire.MSG_GET_RESP,
                                     sink=out)
            except (OSError, ProtocolError) as exc:
                self._drop_sock(server)
                return [(sub, wire.ERR_INTERNAL,
                         f"server {server} connection failed: {exc}")
                        for sub in pending.values()]

        failures = [f for fails in self._fan_out(
            [lambda s=s: one(s) for s in per_server]) for f in fails]
        self._raise_failures("get", var, version, failures, total=len(parts))
        filled = sum(volume(sub) for _, sub in parts)
        if filled != volume(box):
            raise StagingError(f"assembly bug: {filled} of {volume(box)} "
                               "elements filled")
        return out

    def _collect(self, sock, pending: dict[int, NDBox], ok_type: int,
                 sink: RegionBuffer | None = None):
        """Read responses until every corr id is resolved; returns failures."""
        failures = []
        while pending:
            msg = wire.read_message(sock)
            sub = pending.pop(msg.corr_id, None)
            if sub is None:
                raise ProtocolError(f"unexpected corr_id {msg.corr_id}")
            if msg.msg_type == wire.MSG_ERR:
                code, text = wire.decode_err(msg.payload)
                failures.append((sub, code, text))
            elif msg.msg_type != ok_type:
                raise ProtocolError(
                    f"expected {wire.MSG_NAMES[ok_type]} or ERR, got "
                    f"{wire.MSG_NAMES.get(msg.msg_type, msg.msg_type)}")
            elif sink is not None:
                expect = volume(sub) * self.element_size
                if len(msg.payload) != expect:
                    raise ProtocolError(f"GET_RESP for {sub} is "
                                        f"{len(msg.payload)} bytes, expected "
                                        f"{expect}")
                copy_region(RegionBuffer(sub, self.element_size,
                                         data=msg.payload),
                            sink, sub)
        return failures

    def _raise_failures(self, op: str, var: str, version: int,
                        failures: list, total: int):
        if not failures:
            return
        sub, code, text = failures[0]
        name = wire.ERR_NAMES.get(code, str(code))
        more = f" (+{len(failures) - 1} more)" if len(failures) > 1 else ""
        done = total - len(failures)
        raise RemoteError(code, f"{op} {var}@{version} failed on sub-box "
                                f"{sub}: {name}: {text}{more}; "
                                f"{done}/{total} sub-{op}s completed")

    def stat(self) -> dict[int, wire.StatReply | str]:
        """Per-server stats; unreachable servers map to an error string."""
        corrs = {s: self._next_corr() for s in range(len(self.servers))}

        def one(server: int):
            try:
                sock = self._sock(server)
                sock.settimeout(CONNECT_TIMEOUT_S)
                corr = corrs[server]
                wire.send_message(sock, wire.MSG_STAT, corr)
                msg = wire.read_message(sock)
                if msg.msg_type == wire.MSG_ERR:
                    code, text = wire.decode_err(msg.payload)
                    return server, f"{wire.ERR_NAMES.get(code, code)}: {text}"
                if msg.msg_type != wire.MSG_STAT_RESP or msg.corr_id != corr:
                    return server, "protocol error in STAT_RESP"
                return server, wire.decode_stat_reply(msg.payload)
            except (OSError, StagingError) as exc:
                self._drop_sock(server)
                return server, f"unreachable: {exc}"

        return dict(self._fan_out(
            [lambda s=s: one(s) for s in range(len(self.servers))]))
