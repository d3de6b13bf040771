import pytest

from services.btf_protocol.ledger import Phase, TransmissionLedger
from services.btf_protocol.messages import (
    ALLOWED_FLOWS,
    FRAME_HEADER,
    Artifact,
    Channel,
    Model,
    ProtocolMessage,
    flow_multiset,
)
from services.btf_protocol.transport import (
    TAG_BYTES,
    ByteCountingTransport,
    InProcTransport,
    SocketTransport,
    make_transport,
)
from utils.errors import AuthenticationError, ChannelViolation, FramingError


def test_frame_round_trip():
    message = ProtocolMessage(Channel.C_TO_S, Artifact.IV, b"\x01" * 10, secure=True)
    frame = message.encode()
    assert len(frame) == FRAME_HEADER.size + 10
    assert frame[:4] == (13).to_bytes(4, "big")
    assert ProtocolMessage.decode(frame) == message
    assert len(message) == 10


@pytest.mark.parametrize("frame", [
    b"\x00\x00",
    FRAME_HEADER.pack(9, 3, 5, 0) + b"abc",
    FRAME_HEADER.pack(3, 3, 5, 2),
    FRAME_HEADER.pack(3, 9, 5, 0),
    FRAME_HEADER.pack(3, 3, 99, 0),
])
def test_decode_rejects_malformed_frames(frame):
    with pytest.raises(FramingError):
        ProtocolMessage.decode(frame)


def test_flow_whitelists_differ_per_model():
    assert (Channel.TP_TO_S, Artifact.EVK) in ALLOWED_FLOWS[Model.BTF]
    assert (Channel.C_TO_S, Artifact.EVK) not in ALLOWED_FLOWS[Model.BTF]
    assert (Channel.C_TO_S, Artifact.EVK) in ALLOWED_FLOWS[Model.ST_FHE]
    assert (Channel.C_TO_S, Artifact.DK) in ALLOWED_FLOWS[Model.ORIG_TC]
    assert not any(channel == Channel.TP_TO_C for channel, _ in ALLOWED_FLOWS[Model.ORIG_TC])


@pytest.fixture(params=["inproc", "socket"])
def transport(request):
    t = make_transport(request.param, Model.BTF, TransmissionLedger(Model.BTF, "desk", 64))
    yield t
    t.close()


def test_transport_delivers_in_order_and_counts(transport):
    transport.phase = Phase.RS
    transport.send(ProtocolMessage(Channel.C_TO_S, Artifact.C, b"\xaa" * 8))
    transport.send(ProtocolMessage(Channel.C_TO_S, Artifact.IV, b"\x55" * 10, secure=True))
    first = transport.receive(Channel.C_TO_S)
    second = transport.receive(Channel.C_TO_S)
    assert (first.artifact, first.payload) == (Artifact.C, b"\xaa" * 8)
    assert (second.artifact, second.secure) == (Artifact.IV, True)
    assert transport.payload_bytes == transport.ledger.total() == 18
    assert transport.wire_bytes == 18 + 2 * FRAME_HEADER.size + TAG_BYTES
    assert transport.frames == 2
    assert [e.phase for e in transport.ledger.entries] == [Phase.RS, Phase.RS]


def test_large_payload_over_sockets():
    ledger = TransmissionLedger(Model.BTF, "desk", 64)
    transport = make_transport("socket", Model.BTF, ledger)
    try:
        payload = bytes(range(256)) * 20000
        transport.send(ProtocolMessage(Channel.TP_TO_S, Artifact.EVK, payload))
        assert transport.receive(Channel.TP_TO_S).payload == payload
    finally:
        transport.close()


def test_transport_rejects_disallowed_flow(transport):
    with pytest.raises(ChannelViolation):
        transport.send(ProtocolMessage(Channel.C_TO_S, Artifact.EVK, b"x"))
    assert transport.ledger.entries == []


def test_tampered_secure_frame_fails_authentication():
    ledger = TransmissionLedger(Model.BTF, "desk", 64)
    inner = InProcTransport(Model.BTF, ledger)
    inner.send(ProtocolMessage(Channel.TP_TO_C, Artifact.R, b"\x01", secure=True))
    wire = bytearray(inner._queues[Channel.TP_TO_C].get())
    wire[FRAME_HEADER.size] ^= 1
    inner._queues[Channel.TP_TO_C].put(bytes(wire))
    with pytest.raises(AuthenticationError):
        inner.receive(Channel.TP_TO_C)


def test_insecure_frame_with_trailer_is_rejected():
    inner = InProcTransport(Model.BTF, TransmissionLedger(Model.BTF, "desk", 64))
    inner._queues[Channel.C_TO_S].put(ProtocolMessage(Channel.C_TO_S, Artifact.C, b"ab").encode() + b"zz")
    with pytest.raises(FramingError):
        inner.receive(Channel.C_TO_S)


def test_socket_transport_moves_the_same_bytes_as_inproc():
    sizes = {}
    for cls in (InProcTransport, SocketTransport):
        counted = ByteCountingTransport(cls(Model.ORIG_TC, TransmissionLedger(Model.ORIG_TC, "desk", 64)))
        try:
            counted.send(ProtocolMessage(Channel.C_TO_S, Artifact.PK_C, b"\x00" * 1000))
            counted.send(ProtocolMessage(Channel.S_TO_C, Artifact.ENC_R, b"\x01" * 260))
            counted.receive(Channel.C_TO_S)
            counted.receive(Channel.S_TO_C)
            sizes[cls.__name__] = (counted.payload_bytes, counted.wire_bytes)
        finally:
            counted.close()
    assert sizes["InProcTransport"] == sizes["SocketTransport"] == (1260, 1260 + 2 * FRAME_HEADER.size)


def test_make_transport_rejects_unknown_kind():
    with pytest.raises(ValueError):
        make_transport("carrier-pigeon", Model.BTF, TransmissionLedger(Model.BTF, "desk"))


def test_flow_multiset_counts_pairs():
    messages = [
        ProtocolMessage(Channel.C_TO_S, Artifact.C, b""),
        ProtocolMessage(Channel.C_TO_S, Artifact.C, b""),
        ProtocolMessage(Channel.S_TO_TP, Artifact.ENC_R, b""),
    ]
    counts = flow_multiset(messages)
    assert counts[(Channel.C_TO_S, Artifact.C)] == 2
    assert counts[(Channel.S_TO_TP, Artifact.ENC_R)] == 1
