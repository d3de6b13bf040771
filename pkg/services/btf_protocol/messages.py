"""
Protocol message types and wire framing.

A frame is a 4-byte big-endian length (counting everything after it),
then one byte each for channel id, artifact id and the secure flag,
then the payload.
"""

import struct
from collections import Counter
from dataclasses import dataclass
from enum import Enum, IntEnum

from utils.errors import FramingError

FRAME_HEADER = struct.Struct("!IBBB")
PREFIX = struct.Struct("!I")
MAX_FRAME = 1 << 30


class Channel(IntEnum):
    TP_TO_C = 1
    TP_TO_S = 2
    C_TO_S = 3
    S_TO_C = 4
    S_TO_TP = 5

    @property
    def label(self) -> str:
        return _CHANNEL_LABELS[self]


_CHANNEL_LABELS = {
    Channel.TP_TO_C: "TP→C",
    Channel.TP_TO_S: "TP→S",
    Channel.C_TO_S: "C→S",
    Channel.S_TO_C: "S→C",
    Channel.S_TO_TP: "S→TP",
}


class Artifact(IntEnum):
    PK_K = 1
    PK_C = 2
    EVK = 3
    E_DK = 4
    IV = 5
    K_PRIME = 6
    C = 7
    C_PRIME = 8
    ENC_R = 9
    R = 10
    # Baseline artifacts: the FHE template/query and an unwrapped dk.
    ENC_W = 11
    ENC_W_PRIME = 12
    DK = 13

    @property
    def label(self) -> str:
        return _ARTIFACT_LABELS[self]


_ARTIFACT_LABELS = {
    Artifact.PK_K: "pk_k",
    Artifact.PK_C: "pk_c",
    Artifact.EVK: "evk",
    Artifact.E_DK: "E(dk,k′)",
    Artifact.IV: "IV",
    Artifact.K_PRIME: "k′",
    Artifact.C: "c",
    Artifact.C_PRIME: "c′",
    Artifact.ENC_R: "Enc(r)",
    Artifact.R: "r",
    Artifact.ENC_W: "Enc(w)",
    Artifact.ENC_W_PRIME: "Enc(w′)",
    Artifact.DK: "dk",
}


class Model(str, Enum):
    BTF = "btf"
    ST_FHE = "st-fhe"
    ORIG_TC = "orig-tc"


ALLOWED_FLOWS = {
    Model.BTF: frozenset({
        (Channel.TP_TO_C, Artifact.PK_K),
        (Channel.TP_TO_C, Artifact.R),
        (Channel.TP_TO_S, Artifact.PK_C),
        (Channel.TP_TO_S, Artifact.EVK),
        (Channel.TP_TO_S, Artifact.R),
        (Channel.C_TO_S, Artifact.K_PRIME),
        (Channel.C_TO_S, Artifact.E_DK),
        (Channel.C_TO_S, Artifact.IV),
        (Channel.C_TO_S, Artifact.C),
        (Channel.C_TO_S, Artifact.C_PRIME),
        (Channel.S_TO_TP, Artifact.ENC_R),
    }),
    Model.ST_FHE: frozenset({
        (Channel.C_TO_S, Artifact.EVK),
        (Channel.C_TO_S, Artifact.ENC_W),
        (Channel.C_TO_S, Artifact.ENC_W_PRIME),
        (Channel.S_TO_C, Artifact.ENC_R),
    }),
    Model.ORIG_TC: frozenset({
        (Channel.C_TO_S, Artifact.PK_C),
        (Channel.C_TO_S, Artifact.EVK),
        (Channel.C_TO_S, Artifact.DK),
        (Channel.C_TO_S, Artifact.IV),
        (Channel.C_TO_S, Artifact.C),
        (Channel.C_TO_S, Artifact.C_PRIME),
        (Channel.S_TO_C, Artifact.ENC_R),
    }),
}


@dataclass(frozen=True)
class ProtocolMessage:
    """One framed transfer between two parties."""
    channel: Channel
    artifact: Artifact
    payload: bytes
    secure: bool = False

    def __len__(self) -> int:
        return len(self.payload)

    def encode(self) -> bytes:
        return FRAME_HEADER.pack(
            len(self.payload) + 3, int(self.channel), int(self.artifact), int(self.secure)
        ) + self.payload

    @classmethod
    def decode(cls, frame: bytes) -> "ProtocolMessage":
        """
        Parse one complete frame.

        Raises:
            FramingError: On a short frame, a length mismatch or unknown ids.
        """
        if len(frame) < FRAME_HEADER.size:
            raise FramingError("Frame shorter than its header.")
        length, channel, artifact, secure = FRAME_HEADER.unpack_from(frame)
        if length != len(frame) - PREFIX.size:
            raise FramingError(f"Declared length {length} does not match frame size {len(frame) - PREFIX.size}.")
        if secure not in (0, 1):
            raise FramingError(f"Invalid secure flag {secure}.")
        try:
            return cls(Channel(channel), Artifact(artifact), bytes(frame[FRAME_HEADER.size:]), bool(secure))
        except ValueError as e:
            raise FramingError(f"Unknown channel or artifact id: {e}") from None


def flow_multiset(messages) -> Counter:
    """Count (channel, artifact) pairs of sent messages or ledger entries."""
    return Counter((m.channel, m.artifact) for m in messages)
