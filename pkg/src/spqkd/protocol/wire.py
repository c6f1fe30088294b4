"""Classical-channel framing and transports.

Frame layout::

    [4 bytes  payload length, big-endian]
    [1 byte   message type]
    [N bytes  payload]

Two transports carry identical frame bytes: an in-process queue pair and any
reliable ordered byte stream (a socket pair here).  Endpoints are
single-threaded; :func:`run_pair` drives one endpoint per thread.
"""

from dataclasses import dataclass
from enum import IntEnum
import hashlib
import queue
import socket
import struct
import threading

import numpy as np

from ..errors import ChannelError, ProtocolError

HEADER = struct.Struct(">IB")
MAX_PAYLOAD = 1 << 30


class MessageType(IntEnum):
    SIFT_BASES = 0x01
    SIFT_KEEP = 0x02
    SHUFFLE_SEED = 0x03
    PARITIES = 0x04
    BINSEARCH_PARITY = 0x05
    VERIFY_DIGEST = 0x06
    PA_SEED = 0x07
    BINSEARCH_REQUEST = 0x08
    DONE = 0x7F


# frame types whose payload discloses parity bits of Alice's key
PARITY_TYPES = (MessageType.PARITIES, MessageType.BINSEARCH_PARITY)


@dataclass(frozen=True)
class ClassicalMessage:
    type: MessageType
    payload: bytes = b""

    def encode(self) -> bytes:
        return encode_frame(self.type, self.payload)


def encode_frame(msg_type: int, payload: bytes) -> bytes:
    if len(payload) > MAX_PAYLOAD:
        raise ProtocolError(f"payload too large: {len(payload)}")
    return HEADER.pack(len(payload), int(msg_type)) + payload


def decode_frames(data: bytes) -> list[ClassicalMessage]:
    """Split a complete byte string into messages."""
    out, pos = [], 0
    while pos < len(data):
        if len(data) - pos < HEADER.size:
            raise ProtocolError("truncated frame header")
        length, t = HEADER.unpack_from(data, pos)
        pos += HEADER.size
        if len(data) - pos < length:
            raise ProtocolError("truncated frame payload")
        out.append(ClassicalMessage(_type(t), bytes(data[pos:pos + length])))
        pos += length
    return out


def _type(t: int) -> MessageType:
    try:
        return MessageType(t)
    except ValueError:
        raise ProtocolError(f"unknown message type 0x{t:02x}") from None


# -- payload helpers --------------------------------------------------------

def pack_bits(bits) -> bytes:
    """MSB-first bit packing, zero padded to a whole byte."""
    return np.packbits(np.asarray(bits, dtype=np.uint8) & 1).tobytes()


def unpack_bits(data: bytes, count: int) -> np.ndarray:
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8))
    if len(bits) < count:
        raise ProtocolError("bit field shorter than its declared count")
    return bits[:count]


def sift_bases_payload(clock_indices, bases) -> bytes:
    idx = np.asarray(clock_indices, dtype=">u8")
    return struct.pack(">I", len(idx)) + idx.tobytes() + pack_bits(bases)


def parse_sift_bases(payload: bytes):
    (n,) = struct.unpack_from(">I", payload)
    end = 4 + 8 * n
    idx = np.frombuffer(payload[4:end], dtype=">u8").astype(np.int64)
    return idx, unpack_bits(payload[end:], n)


def counted_bits_payload(bits) -> bytes:
    bits = np.asarray(bits, dtype=np.uint8)
    return struct.pack(">I", len(bits)) + pack_bits(bits)


def parse_counted_bits(payload: bytes) -> np.ndarray:
    (n,) = struct.unpack_from(">I", payload)
    return unpack_bits(payload[4:], n)


def parities_payload(pass_index: int, bits) -> bytes:
    return struct.pack(">B", pass_index) + counted_bits_payload(bits)


def parse_parities(payload: bytes):
    return payload[0], parse_counted_bits(payload[1:])


_QUERY = np.dtype([("pass", ">u1"), ("start", ">u4"), ("stop", ">u4")])


def binsearch_request_payload(queries) -> bytes:
    arr = np.array([tuple(q) for q in queries], dtype=_QUERY)
    return struct.pack(">I", len(arr)) + arr.tobytes()


def parse_binsearch_request(payload: bytes) -> np.ndarray:
    (n,) = struct.unpack_from(">I", payload)
    if len(payload) != 4 + n * _QUERY.itemsize:
        raise ProtocolError("malformed BINSEARCH_REQUEST")
    return np.frombuffer(payload[4:], dtype=_QUERY)


def binsearch_parity_payload(block_id: int, parity: int) -> bytes:
    return struct.pack(">IB", block_id & 0xFFFFFFFF, parity & 1)


def parse_binsearch_parity(payload: bytes):
    return struct.unpack(">IB", payload)


# -- transports -------------------------------------------------------------

class _QueueSide:
    def __init__(self, inbox: queue.Queue, outbox: queue.Queue):
        self._in, self._out = inbox, outbox
        self._buf = bytearray()

    def write(self, data: bytes):
        self._out.put(bytes(data))

    def read_exact(self, n: int) -> bytes:
        while len(self._buf) < n:
            chunk = self._in.get()
            if chunk is None:
                self._in.put(None)
                raise ChannelError("channel closed")
            self._buf += chunk
        out = bytes(self._buf[:n])
        del self._buf[:n]
        return out

    def close(self):
        self._out.put(None)


class _StreamSide:
    def __init__(self, sock: socket.socket):
        self._sock = sock

    def write(self, data: bytes):
        try:
            self._sock.sendall(data)
        except OSError as exc:
            raise ChannelError(f"stream write failed: {exc}") from None

    def read_exact(self, n: int) -> bytes:
        buf = bytearray()
        while len(buf) < n:
            try:
                chunk = self._sock.recv(n - len(buf))
            except OSError as exc:
                raise ChannelError(f"stream read failed: {exc}") from None
            if not chunk:
                raise ChannelError("channel closed")
            buf += chunk
        return bytes(buf)

    def close(self):
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()


class Endpoint:
    """One side of the classical channel.

    Keeps a transcript of every frame it sends; ``sent_digest`` hashes the
    exact bytes written so runs over different transports can be compared.
    """

    def __init__(self, side, name: str):
        self._side = side
        self.name = name
        self.sent: list[ClassicalMessage] = []
        self._hash = hashlib.sha256()
        self._pending = bytearray()

    def send(self, msg_type: MessageType, payload: bytes = b"", flush: bool = True):
        frame = encode_frame(msg_type, payload)
        self.sent.append(ClassicalMessage(MessageType(msg_type), bytes(payload)))
        self._hash.update(frame)
        self._pending += frame
        if flush:
            self.flush()

    def flush(self):
        if self._pending:
            self._side.write(bytes(self._pending))
            self._pending.clear()

    def recv(self, expect: MessageType | None = None) -> ClassicalMessage:
        self.flush()
        length, t = HEADER.unpack(self._side.read_exact(HEADER.size))
        if length > MAX_PAYLOAD:
            raise ProtocolError(f"payload too large: {length}")
        msg = ClassicalMessage(_type(t), self._side.read_exact(length) if length else b"")
        if expect is not None and msg.type != expect:
            raise ProtocolError(f"{self.name}: expected {expect.name}, got {msg.type.name}")
        return msg

    def sent_parity_bits(self) -> int:
        total = 0
        for m in self.sent:
            if m.type == MessageType.PARITIES:
                total += len(parse_parities(m.payload)[1])
            elif m.type == MessageType.BINSEARCH_PARITY:
                total += 1
        return total

    @property
    def sent_digest(self) -> str:
        return self._hash.hexdigest()

    def close(self):
        self._side.close()


INPROC = "inproc"
STREAM = "stream"
TRANSPORTS = (INPROC, STREAM)


def endpoint_pair(kind: str = INPROC) -> tuple[Endpoint, Endpoint]:
    """(alice, bob) endpoints joined by the chosen transport."""
    if kind == INPROC:
        ab, ba = queue.Queue(), queue.Queue()
        return Endpoint(_QueueSide(ba, ab), "alice"), Endpoint(_QueueSide(ab, ba), "bob")
    if kind == STREAM:
        sa, sb = socket.socketpair()
        return Endpoint(_StreamSide(sa), "alice"), Endpoint(_StreamSide(sb), "bob")
    raise ValueError(f"unknown transport {kind!r}; choose from {', '.join(TRANSPORTS)}")


def run_pair(alice_fn, bob_fn, alice: Endpoint, bob: Endpoint):
    """Run ``alice_fn(alice)`` on a worker thread and ``bob_fn(bob)`` here.

    A failure on either side closes both endpoints so the peer unblocks, and
    the first exception is re-raised.
    """
    result = {}

    def worker():
        try:
            result["alice"] = alice_fn(alice)
        except BaseException as exc:  # noqa: BLE001 - re-raised on the caller's thread
            result["alice_exc"] = exc
            alice.close()

    t = threading.Thread(target=worker, name="alice-endpoint", daemon=True)
    t.start()
    try:
        b = bob_fn(bob)
    except BaseException:
        bob.close()
        t.join(timeout=5)
        if "alice_exc" in result and not isinstance(result["alice_exc"], ChannelError):
            raise result["alice_exc"]
        raise
    t.join()
    if "alice_exc" in result:
        raise result["alice_exc"]
    return result["alice"], b
