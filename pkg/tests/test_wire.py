import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st

from spqkd.errors import ChannelError, ProtocolError
from spqkd.protocol.wire import (
    TRANSPORTS,
    ClassicalMessage,
    MessageType,
    binsearch_parity_payload,
    binsearch_request_payload,
    decode_frames,
    encode_frame,
    endpoint_pair,
    pack_bits,
    parities_payload,
    parse_binsearch_parity,
    parse_binsearch_request,
    parse_parities,
    parse_sift_bases,
    run_pair,
    sift_bases_payload,
    unpack_bits,
)


def test_frame_layout():
    assert encode_frame(MessageType.SHUFFLE_SEED, b"\x01" * 8) == b"\x00\x00\x00\x08\x03" + b"\x01" * 8
    assert encode_frame(MessageType.DONE, b"") == b"\x00\x00\x00\x00\x7f"


def test_type_codes():
    assert [int(t) for t in MessageType] == [1, 2, 3, 4, 5, 6, 7, 8, 0x7F]


@given(st.lists(st.tuples(st.sampled_from(list(MessageType)), st.binary(max_size=64)), max_size=10))
def test_decode_inverts_encode(msgs):
    data = b"".join(encode_frame(t, p) for t, p in msgs)
    assert decode_frames(data) == [ClassicalMessage(t, p) for t, p in msgs]


def test_decode_rejects_garbage():
    with pytest.raises(ProtocolError):
        decode_frames(b"\x00\x00")
    with pytest.raises(ProtocolError):
        decode_frames(b"\x00\x00\x00\x05\x01ab")
    with pytest.raises(ProtocolError):
        decode_frames(b"\x00\x00\x00\x00\x42")


@given(st.lists(st.integers(0, 1), max_size=100))
def test_bit_packing(bits):
    assert unpack_bits(pack_bits(bits), len(bits)).tolist() == bits


def test_bit_packing_is_msb_first():
    assert pack_bits([1, 0, 0, 0, 0, 0, 0, 1, 1]) == b"\x81\x80"


def test_payload_helpers():
    idx, bases = parse_sift_bases(sift_bases_payload([3, 2**40, 7], [1, 0, 1]))
    assert idx.tolist() == [3, 2**40, 7] and bases.tolist() == [1, 0, 1]
    p, bits = parse_parities(parities_payload(2, [1, 1, 0]))
    assert p == 2 and bits.tolist() == [1, 1, 0]
    q = parse_binsearch_request(binsearch_request_payload([(1, 10, 20), (0, 0, 4)]))
    assert q["pass"].tolist() == [1, 0] and q["stop"].tolist() == [20, 4]
    assert binsearch_parity_payload(7, 1) == struct.pack(">IB", 7, 1)
    assert parse_binsearch_parity(binsearch_parity_payload(7, 1)) == (7, 1)


@pytest.mark.parametrize("kind", TRANSPORTS)
def test_round_trip_over_transport(kind):
    a, b = endpoint_pair(kind)
    msgs = [(MessageType.SIFT_BASES, bytes(range(256)) * 40), (MessageType.DONE, b""),
            (MessageType.PA_SEED, b"\xff" * 16)]

    def alice(ep):
        return [ep.recv() for _ in msgs]

    def bob(ep):
        for t, p in msgs:
            ep.send(t, p, flush=False)
        ep.flush()
        return ep.sent_digest

    got, _ = run_pair(alice, bob, a, b)
    a.close(), b.close()
    assert got == [ClassicalMessage(t, p) for t, p in msgs]


def test_transports_hash_identically():
    digests = []
    for kind in TRANSPORTS:
        a, b = endpoint_pair(kind)
        run_pair(lambda ep: ep.recv(MessageType.DONE), lambda ep: ep.send(MessageType.DONE, b"\x00"), a, b)
        digests.append(b.sent_digest)
        a.close(), b.close()
    assert digests[0] == digests[1]


@pytest.mark.parametrize("kind", TRANSPORTS)
def test_closed_channel_raises(kind):
    a, b = endpoint_pair(kind)
    b.close()
    with pytest.raises(ChannelError):
        a.recv()


def test_unexpected_type_raises():
    a, b = endpoint_pair()
    b.send(MessageType.DONE)
    with pytest.raises(ProtocolError):
        a.recv(MessageType.PARITIES)


def test_parity_audit_counts_bits():
    a, b = endpoint_pair()
    a.send(MessageType.PARITIES, parities_payload(0, np.ones(13)))
    a.send(MessageType.BINSEARCH_PARITY, binsearch_parity_payload(0, 1))
    a.send(MessageType.SHUFFLE_SEED, b"\x00" * 8)
    assert a.sent_parity_bits() == 14


def test_unknown_transport():
    with pytest.raises(ValueError):
        endpoint_pair("carrier-pigeon")
