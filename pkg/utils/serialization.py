"""
Binary blob helpers.

Files carry an 8-byte header: magic ``BTF1``, params id (u8), type tag (u8)
and a reserved u16, followed by little-endian 32-bit torus words. Wire
payloads and ledger figures use the body alone.
"""

import struct
from enum import IntEnum

import numpy as np

from utils.errors import FramingError
from utils.params import LweParams, params_from_id

MAGIC = b"BTF1"
HEADER = struct.Struct("<4sBBH")
WORD = np.dtype("<u4")


class TypeTag(IntEnum):
    LWE_CIPHERTEXT = 1
    SECRET_KEY = 2
    PUBLIC_KEY = 3
    EVALUATION_KEY = 4
    HOM_DECRYPTION_KEY = 5


def pack_header(params: LweParams, tag: TypeTag) -> bytes:
    return HEADER.pack(MAGIC, params.params_id, int(tag), 0)


def unpack_header(blob: bytes, expected_tag: TypeTag = None):
    """
    Split a headed blob into (params, tag, body).

    Raises:
        FramingError: On a short blob, bad magic, or unexpected tag.
    """
    if len(blob) < HEADER.size:
        raise FramingError("Blob shorter than its header.")
    magic, params_id, tag, _reserved = HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise FramingError(f"Bad magic {magic!r}.")
    try:
        tag = TypeTag(tag)
    except ValueError:
        raise FramingError(f"Unknown type tag {tag}.") from None
    if expected_tag is not None and tag != expected_tag:
        raise FramingError(f"Expected {expected_tag.name}, found {tag.name}.")
    return params_from_id(params_id), tag, blob[HEADER.size:]


def words_to_bytes(words: np.ndarray) -> bytes:
    return np.ascontiguousarray(words, dtype=WORD).tobytes()


def bytes_to_words(body: bytes, count: int = None) -> np.ndarray:
    """
    Read little-endian 32-bit words.

    Raises:
        FramingError: If the body does not hold exactly ``count`` words.
    """
    if len(body) % 4:
        raise FramingError("Body length is not a multiple of 4 bytes.")
    words = np.frombuffer(body, dtype=WORD).astype(np.uint32)
    if count is not None and words.size != count:
        raise FramingError(f"Expected {count} words, found {words.size}.")
    return words
