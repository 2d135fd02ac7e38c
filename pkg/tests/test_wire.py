import random
import socket
import struct
import threading

import pytest

from stagespace import wire
from stagespace.directory import ObjectDescriptor
from stagespace.errors import ConnectionClosed, ProtocolError
from stagespace.geometry import NDBox, volume
from stagespace.tier import ChunkHandle

from test_geometry import random_box


def nonneg_box(rng, ndims=None):
    return random_box(rng, ndims or rng.randrange(1, 4), lo_range=(0, 50))


def rand_put(rng):
    box = nonneg_box(rng)
    esize = rng.choice(wire.ELEMENT_SIZES)
    data = rng.randbytes(volume(box) * esize)
    return ("v" + str(rng.randrange(10)), rng.randrange(1 << 32), esize, box,
            data)


class TestFraming:
    def test_header_layout(self):
        msg = wire.encode_message(wire.MSG_PUT, 0x1122334455667788, b"abc")
        assert msg[:4] == b"STG1"
        assert msg[4] == 1
        assert msg[5:13] == bytes.fromhex("8877665544332211")
        assert msg[13:21] == (3).to_bytes(8, "little")
        assert msg[21:] == b"abc"
        assert wire.HEADER_SIZE == 21

    def test_stream_roundtrip_random_sequence(self):
        rng = random.Random(70)
        msgs = [(rng.choice(list(wire.MSG_NAMES)), rng.randrange(1 << 64),
                 rng.randbytes(rng.randrange(200))) for _ in range(1000)]
        stream = b"".join(wire.encode_message(*m) for m in msgs)
        a, b = socket.socketpair()
        try:
            writer = threading.Thread(
                target=lambda: (a.sendall(stream), a.close()))
            writer.start()
            got = []
            while True:
                try:
                    m = wire.read_message(b)
                except ConnectionClosed:
                    break
                got.append((m.msg_type, m.corr_id, m.payload))
            writer.join()
            assert got == msgs
        finally:
            b.close()

    def test_bad_magic(self):
        a, b = socket.socketpair()
        try:
            a.sendall(b"XXXX" + bytes(17))
            with pytest.raises(ProtocolError, match="magic"):
                wire.read_message(b)
        finally:
            a.close()
            b.close()

    def test_truncated_header(self):
        a, b = socket.socketpair()
        try:
            a.sendall(b"STG1\x01abc")
            a.close()
            with pytest.raises(ProtocolError, match="EOF"):
                wire.read_message(b)
        finally:
            b.close()

    def test_truncated_payload(self):
        a, b = socket.socketpair()
        try:
            a.sendall(wire.encode_header(wire.MSG_PUT, 1, 100) + b"short")
            a.close()
            with pytest.raises(ProtocolError, match="EOF"):
                wire.read_message(b)
        finally:
            b.close()

    def test_clean_eof_between_messages(self):
        a, b = socket.socketpair()
        try:
            a.sendall(wire.encode_message(wire.MSG_STAT, 7))
            a.close()
            assert wire.read_message(b).msg_type == wire.MSG_STAT
            with pytest.raises(ConnectionClosed):
                wire.read_message(b)
        finally:
            b.close()

    def test_oversized_payload_rejected(self):
        a, b = socket.socketpair()
        try:
            hdr = struct.pack("<4sBQQ", b"STG1", 1, 0, wire.MAX_PAYLOAD + 1)
            a.sendall(hdr)
            with pytest.raises(ProtocolError, match="MAX_PAYLOAD"):
                wire.read_message(b)
            with pytest.raises(ValueError):
                wire.encode_header(1, 0, wire.MAX_PAYLOAD + 1)
        finally:
            a.close()
            b.close()

    def test_send_message_parts(self):
        a, b = socket.socketpair()
        try:
            data = bytes(range(256)) * 1024  # 256 KiB, past the split point
            sender = threading.Thread(
                target=wire.send_message,
                args=(a, wire.MSG_GET_RESP, 9, b"pre", data))
            sender.start()
            m = wire.read_message(b)
            sender.join()
            assert (m.msg_type, m.corr_id) == (wire.MSG_GET_RESP, 9)
            assert m.payload == b"pre" + data
        finally:
            a.close()
            b.close()


class TestPutGetCodec:
    def test_put_roundtrip_random(self):
        rng = random.Random(71)
        for _ in range(200):
            var, version, esize, box, data = rand_put(rng)
            payload = b"".join(
                bytes(p) for p in wire.encode_put(var, version, esize, box,
                                                  data))
            req = wire.decode_put(payload)
            assert (req.var, req.version, req.element_size, req.box) == \
                (var, version, esize, box)
            assert bytes(req.data) == data

    def test_put_field_layout(self):
        data = bytes(range(8))
        payload = b"".join(bytes(p) for p in wire.encode_put(
            "T", 3, 4, NDBox((5,), (7,)), data))
        expect = (b"\x01T" + struct.pack("<II", 3, 4) +
                  b"\x01" + struct.pack("<QQ", 5, 7) + data)
        assert payload == expect

    def test_put_data_length_enforced(self):
        with pytest.raises(ValueError, match="bytes"):
            wire.encode_put("v", 0, 4, NDBox((0,), (2,)), b"short")
        good = b"".join(bytes(p) for p in wire.encode_put(
            "v", 0, 4, NDBox((0,), (2,)), bytes(8)))
        with pytest.raises(ProtocolError):
            wire.decode_put(good + b"x")
        with pytest.raises(ProtocolError):
            wire.decode_put(good[:-1])

    def test_get_roundtrip_random(self):
        rng = random.Random(72)
        for _ in range(200):
            var, version, esize, box, _ = rand_put(rng)
            timeout = rng.randrange(1 << 32)
            req = wire.decode_get(
                wire.encode_get(var, version, esize, box, timeout))
            assert (req.var, req.version, req.element_size, req.box,
                    req.timeout_ms) == (var, version, esize, box, timeout)

    def test_bad_element_size(self):
        with pytest.raises(ValueError):
            wire.encode_get("v", 0, 3, NDBox((0,), (1,)), 0)
        payload = bytearray(wire.encode_get("v", 0, 4, NDBox((0,), (1,)), 0))
        payload[6] = 3  # element_size field
        with pytest.raises(ProtocolError, match="element_size"):
            wire.decode_get(bytes(payload))

    def test_negative_coordinates_rejected(self):
        with pytest.raises(ValueError, match="unsigned"):
            wire.encode_box(NDBox((-1,), (1,)))

    def test_empty_var_rejected(self):
        with pytest.raises(ValueError):
            wire.encode_var("")
        with pytest.raises(ProtocolError):
            wire.decode_get(b"\x00" + bytes(20))

    def test_corrupted_box_ndims(self):
        payload = bytearray(wire.encode_get("v", 0, 4, NDBox((0,), (1,)), 0))
        payload[10] = 9  # ndims byte
        with pytest.raises(ProtocolError, match="ndims"):
            wire.decode_get(bytes(payload))

    def test_inverted_box_rejected(self):
        raw = (b"\x01v" + struct.pack("<II", 0, 4) +
               b"\x01" + struct.pack("<QQ", 7, 5) + struct.pack("<I", 0))
        with pytest.raises(ProtocolError, match="box"):
            wire.decode_get(raw)


class TestDescriptorCodec:
    def make(self, rng):
        box = nonneg_box(rng)
        esize = rng.choice(wire.ELEMENT_SIZES)
        return ObjectDescriptor(
            "rho", rng.randrange(100), box, esize, rng.randrange(8),
            ChunkHandle(rng.randrange(1 << 40), volume(box) * esize,
                        rng.randrange(1, 1 << 30)))

    def test_roundtrip_random(self):
        rng = random.Random(73)
        for _ in range(200):
            desc = self.make(rng)
            assert wire.decode_descriptor(wire.encode_descriptor(desc)) == desc

    def test_inconsistent_handle_length_rejected(self):
        desc = self.make(random.Random(74))
        raw = bytearray(wire.encode_descriptor(desc))
        raw[-16] ^= 0xFF  # corrupt handle.length low byte
        with pytest.raises(ProtocolError, match="descriptor"):
            wire.decode_descriptor(bytes(raw))

    def test_descriptor_key_properties(self):
        box = NDBox((0, 0), (4, 4))
        k = wire.descriptor_key("v", 1, 8, box)
        assert len(k) == 16
        assert k == wire.descriptor_key("v", 1, 8, box)
        others = {wire.descriptor_key("v", 2, 8, box),
                  wire.descriptor_key("w", 1, 8, box),
                  wire.descriptor_key("v", 1, 4, box),
                  wire.descriptor_key("v", 1, 8, NDBox((0, 0), (4, 5)))}
        assert k not in others and len(others) == 4


class TestStatErrCodec:
    def test_stat_roundtrip(self):
        stat = wire.StatReply(*range(1, 9))
        payload = wire.encode_stat_reply(stat)
        assert len(payload) == 64
        assert wire.decode_stat_reply(payload) == stat
        with pytest.raises(ProtocolError):
            wire.decode_stat_reply(payload[:-1])

    def test_err_roundtrip(self):
        payload = wire.encode_err(wire.ERR_TIMEOUT, "no coverage after 100ms")
        assert wire.decode_err(payload) == (3, "no coverage after 100ms")
        assert wire.decode_err(wire.encode_err(wire.ERR_SHUTDOWN, "")) == \
            (5, "")
        with pytest.raises(ProtocolError):
            wire.decode_err(b"\x01")

    def test_err_codes_distinct(self):
        assert len(wire.ERR_NAMES) == 7
        assert len(set(wire.ERR_NAMES.values())) == 7
