"""
Transports carrying framed protocol messages between parties.

Both transports move identical bytes: frames from messages.py, followed by
a 32-byte HMAC-SHA256 tag when the secure flag is set. The tag stands in
for the TLS record layer, so the ledger counts payload bytes only.
"""

import hashlib
import hmac
import logging
import queue
import secrets
import socket
import threading

from services.btf_protocol.ledger import Phase, TransmissionLedger
from services.btf_protocol.messages import ALLOWED_FLOWS, PREFIX, Channel, Model, ProtocolMessage
from utils.errors import AuthenticationError, ChannelViolation, FramingError

logger = logging.getLogger(__name__)

TAG_BYTES = 32
RECEIVE_TIMEOUT = 600.0


class Transport:
    """
    Base transport: flow checking, secure-channel tags and ledger recording.

    Subclasses implement ``_put`` and ``_get`` for raw wire bytes.
    """

    def __init__(self, model: Model, ledger: TransmissionLedger):
        self.model = Model(model)
        self.ledger = ledger
        self.phase = Phase.KDP
        # Session keys of the modeled secure channels, established out of band.
        self._mac_keys = {channel: secrets.token_bytes(32) for channel in Channel}

    def _tag(self, channel: Channel, frame: bytes) -> bytes:
        return hmac.new(self._mac_keys[channel], frame, hashlib.sha256).digest()

    def send(self, message: ProtocolMessage) -> None:
        """
        Frame, deliver and record one message.

        Raises:
            ChannelViolation: If the model does not allow the artifact on the channel.
        """
        if (message.channel, message.artifact) not in ALLOWED_FLOWS[self.model]:
            raise ChannelViolation(
                f"{message.artifact.label} may not be sent on {message.channel.label} in {self.model.value}."
            )
        wire = message.encode()
        if message.secure:
            wire += self._tag(message.channel, wire)
        self._put(message.channel, wire)
        self.ledger.record(self.phase, message.channel, message.artifact, len(message.payload))
        logger.debug("%s %s %s: %d B", self.phase.value, message.channel.label, message.artifact.label, len(message.payload))

    def receive_with_size(self, channel: Channel):
        """
        Next message on a channel plus its size on the wire.

        Raises:
            FramingError: On a malformed frame.
            AuthenticationError: If a secure frame's tag does not verify.
        """
        wire = self._get(Channel(channel))
        if len(wire) < PREFIX.size:
            raise FramingError("Truncated frame.")
        (length,) = PREFIX.unpack_from(wire)
        frame = wire[:PREFIX.size + length]
        message = ProtocolMessage.decode(frame)
        if message.secure:
            tag = wire[PREFIX.size + length:]
            if not hmac.compare_digest(tag, self._tag(message.channel, frame)):
                raise AuthenticationError(f"Secure frame on {message.channel.label} failed authentication.")
        elif len(wire) != len(frame):
            raise FramingError("Trailing bytes after an insecure frame.")
        return message, len(wire)

    def receive(self, channel: Channel) -> ProtocolMessage:
        return self.receive_with_size(channel)[0]

    def _put(self, channel: Channel, wire: bytes) -> None:
        raise NotImplementedError

    def _get(self, channel: Channel) -> bytes:
        raise NotImplementedError

    def close(self) -> None:
        pass


class InProcTransport(Transport):
    """One FIFO queue per channel inside the process."""

    def __init__(self, model: Model, ledger: TransmissionLedger):
        super().__init__(model, ledger)
        self._queues = {channel: queue.Queue() for channel in Channel}

    def _put(self, channel, wire):
        self._queues[channel].put(wire)

    def _get(self, channel):
        try:
            return self._queues[channel].get(timeout=RECEIVE_TIMEOUT)
        except queue.Empty:
            raise FramingError(f"No message pending on {channel.label}.") from None


class SocketTransport(Transport):
    """
    One local stream socket pair per channel.

    A reader thread per channel drains its socket into a queue so that large
    sends never block on a receiver running in the same thread.
    """

    def __init__(self, model: Model, ledger: TransmissionLedger):
        super().__init__(model, ledger)
        self._pairs = {channel: socket.socketpair() for channel in Channel}
        self._inbox = {channel: queue.Queue() for channel in Channel}
        self._readers = []
        for channel in Channel:
            reader = threading.Thread(target=self._read_loop, args=(channel,), daemon=True)
            reader.start()
            self._readers.append(reader)

    @staticmethod
    def _read_exact(sock: socket.socket, count: int) -> bytes:
        chunks = []
        while count:
            chunk = sock.recv(min(count, 1 << 20))
            if not chunk:
                raise ConnectionError("socket closed")
            chunks.append(chunk)
            count -= len(chunk)
        return b"".join(chunks)

    def _read_loop(self, channel: Channel) -> None:
        sock = self._pairs[channel][1]
        try:
            while True:
                prefix = self._read_exact(sock, PREFIX.size)
                (length,) = PREFIX.unpack(prefix)
                body = self._read_exact(sock, length)
                wire = prefix + body
                if length >= 3 and body[2]:
                    wire += self._read_exact(sock, TAG_BYTES)
                self._inbox[channel].put(wire)
        except (ConnectionError, OSError):
            return

    def _put(self, channel, wire):
        self._pairs[channel][0].sendall(wire)

    def _get(self, channel):
        try:
            return self._inbox[channel].get(timeout=RECEIVE_TIMEOUT)
        except queue.Empty:
            raise FramingError(f"No message pending on {channel.label}.") from None

    def close(self):
        for left, right in self._pairs.values():
            for sock in (left, right):
                try:
                    sock.shutdown(socket.SHUT_RDWR)
                except OSError:
                    pass
                sock.close()


class ByteCountingTransport:
    """
    Wrapper that independently counts what receivers actually get.

    ``payload_bytes`` must equal the ledger total once every sent message has
    been received; ``wire_bytes`` additionally includes frame headers and tags.
    """

    def __init__(self, inner: Transport):
        self.inner = inner
        self.payload_bytes = 0
        self.wire_bytes = 0
        self.frames = 0

    @property
    def model(self):
        return self.inner.model

    @property
    def ledger(self):
        return self.inner.ledger

    @property
    def phase(self):
        return self.inner.phase

    @phase.setter
    def phase(self, value):
        self.inner.phase = Phase(value)

    def send(self, message: ProtocolMessage) -> None:
        self.inner.send(message)

    def receive(self, channel: Channel) -> ProtocolMessage:
        message, wire_size = self.inner.receive_with_size(channel)
        self.payload_bytes += len(message.payload)
        self.wire_bytes += wire_size
        self.frames += 1
        return message

    def close(self) -> None:
        self.inner.close()


def make_transport(kind: str, model: Model, ledger: TransmissionLedger) -> ByteCountingTransport:
    """
    Build a counted transport by name ("inproc" or "socket").

    Raises:
        ValueError: If the kind is unknown.
    """
    kinds = {"inproc": InProcTransport, "socket": SocketTransport}
    try:
        inner = kinds[kind](model, ledger)
    except KeyError:
        raise ValueError(f"Unknown transport '{kind}'. Choose inproc or socket.") from None
    return ByteCountingTransport(inner)
