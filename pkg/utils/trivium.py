"""
Plaintext Trivium stream cipher.

The 288-bit state is held as three shift registers of 93, 84 and 111 bits.
Each register is stored as the window of its feedback sequence: register
A holds a[t..t+92], B holds b[t..t+83], C holds c[t..t+110], so the
standard state bit s1 is A[92], s94 is B[83] and s178 is C[110]. With

    b[t+84]  = a[t+27] + a[t] + a[t+2]a[t+1] + b[t+6]
    c[t+111] = b[t+15] + b[t] + b[t+2]b[t+1] + c[t+24]
    a[t+93]  = c[t+45] + c[t] + c[t+2]c[t+1] + a[t+24]
    z[t]     = a[t+27] + a[t] + b[t+15] + b[t] + c[t+45] + c[t]

up to 66 consecutive steps only read bits that already exist, so the
cipher advances in vectorized blocks of 64 steps.

Keystream and message bytes map to bits LSB-first: bit i is bit (i % 8) of
byte i // 8. Key and IV bytes follow the eSTREAM reference loading instead:
the 10 bytes read as a little-endian 80-bit integer whose top bit is key
bit 0 (s1), so key byte 0x80 followed by nine zero bytes sets bit 72.
"""

from dataclasses import dataclass

import numpy as np

from utils.errors import LengthMismatch, UnsupportedLevel

KEY_BITS = 80
IV_BITS = 80
WARMUP_ROUNDS = 4 * 288
BLOCK = 64
REGISTER_LENGTHS = (93, 84, 111)


def pack_bits(bits) -> bytes:
    return np.packbits(np.asarray(bits, dtype=np.uint8), bitorder="little").tobytes()


def unpack_bits(data: bytes, count: int = None) -> np.ndarray:
    bits = np.unpackbits(np.frombuffer(bytes(data), dtype=np.uint8), bitorder="little")
    return bits if count is None else bits[:count]


def register_bits(data: bytes) -> np.ndarray:
    """
    Unpack 10 key or IV bytes into the 80 bits loaded at s1..s80 (or s94..s173).

    Raises:
        LengthMismatch: If ``data`` is not 10 bytes long.
    """
    if len(data) * 8 != KEY_BITS:
        raise LengthMismatch(f"Key and IV material must be {KEY_BITS // 8} bytes, got {len(data)}.")
    return unpack_bits(data)[::-1].copy()


def register_bytes(bits) -> bytes:
    return pack_bits(np.asarray(bits, dtype=np.uint8)[::-1])


def bits_from_hex(text: str, count: int = KEY_BITS) -> np.ndarray:
    """
    Parse key or IV hex (as printed in eSTREAM vector files) into register bits.

    Raises:
        ValueError: If the hex is malformed or has the wrong length.
    """
    text = text.strip().lower().removeprefix("0x")
    raw = bytes.fromhex(text)
    if len(raw) * 8 != count:
        raise ValueError(f"Expected {count // 8} bytes of hex, got {len(raw)}.")
    return register_bits(raw)


@dataclass(frozen=True, eq=False)
class TriviumKey:
    """80-bit key and 80-bit IV."""
    k: np.ndarray
    iv: np.ndarray

    def __post_init__(self):
        for name in ("k", "iv"):
            bits = np.asarray(getattr(self, name), dtype=np.uint8)
            if bits.shape != (KEY_BITS,):
                raise LengthMismatch(f"Trivium {name} must be {KEY_BITS} bits, got {bits.size}.")
            object.__setattr__(self, name, bits)

    @property
    def key_bytes(self) -> bytes:
        return register_bytes(self.k)

    @property
    def iv_bytes(self) -> bytes:
        return register_bytes(self.iv)

    @classmethod
    def from_hex(cls, key_hex: str, iv_hex: str) -> "TriviumKey":
        return cls(bits_from_hex(key_hex, KEY_BITS), bits_from_hex(iv_hex, IV_BITS))


@dataclass(eq=False)
class TriviumState:
    """Register windows plus the number of rounds applied so far."""
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    steps: int = 0

    def copy(self) -> "TriviumState":
        return TriviumState(self.a.copy(), self.b.copy(), self.c.copy(), self.steps)

    @property
    def bits(self) -> np.ndarray:
        """The 288 state bits in standard order s1..s288."""
        return np.concatenate([self.a[::-1], self.b[::-1], self.c[::-1]])


def e_keygen(lambda_sym: int = 80, rng: np.random.Generator = None) -> TriviumKey:
    """
    Draw a uniform Trivium key and IV.

    Raises:
        UnsupportedLevel: If ``lambda_sym`` is not 80.
    """
    if lambda_sym != 80:
        raise UnsupportedLevel(f"Trivium offers an 80-bit security level only, not {lambda_sym}.")
    if rng is None:
        rng = np.random.default_rng()
    return TriviumKey(
        rng.integers(0, 2, size=KEY_BITS, dtype=np.uint8),
        rng.integers(0, 2, size=IV_BITS, dtype=np.uint8),
    )


def load_state(key: TriviumKey) -> TriviumState:
    """Key and IV loaded into the registers, before any warm-up round."""
    a = np.zeros(93, dtype=np.uint8)
    b = np.zeros(84, dtype=np.uint8)
    c = np.zeros(111, dtype=np.uint8)
    a[92 - np.arange(KEY_BITS)] = key.k
    b[83 - np.arange(IV_BITS)] = key.iv
    c[:3] = 1
    return TriviumState(a, b, c)


def _advance(state: TriviumState, m: int) -> np.ndarray:
    A, B, C = state.a, state.b, state.c
    j = np.arange(m)
    z = A[27 + j] ^ A[j] ^ B[15 + j] ^ B[j] ^ C[45 + j] ^ C[j]
    new_b = A[27 + j] ^ A[j] ^ (A[j + 2] & A[j + 1]) ^ B[6 + j]
    new_c = B[15 + j] ^ B[j] ^ (B[j + 2] & B[j + 1]) ^ C[24 + j]
    new_a = C[45 + j] ^ C[j] ^ (C[j + 2] & C[j + 1]) ^ A[24 + j]
    state.a = np.concatenate([A[m:], new_a])
    state.b = np.concatenate([B[m:], new_b])
    state.c = np.concatenate([C[m:], new_c])
    state.steps += m
    return z


def e_init(key: TriviumKey) -> TriviumState:
    """Load key and IV and run the 1152 warm-up rounds without output."""
    state = load_state(key)
    for _ in range(WARMUP_ROUNDS // BLOCK):
        _advance(state, BLOCK)
    return state


def e_keystream(state: TriviumState, length: int) -> np.ndarray:
    """
    Produce ``length`` keystream bits and advance the state by as many rounds.

    Successive calls continue the same stream.
    """
    out = []
    remaining = length
    while remaining > 0:
        m = min(BLOCK, remaining)
        out.append(_advance(state, m))
        remaining -= m
    return np.concatenate(out) if out else np.zeros(0, dtype=np.uint8)


def keystream_hex(state: TriviumState, length_bytes: int) -> str:
    return pack_bits(e_keystream(state, 8 * length_bytes)).hex()


def e_encrypt(message, keystream) -> np.ndarray:
    """
    XOR a bit vector with keystream bits (encryption and decryption alike).

    Raises:
        LengthMismatch: If the two vectors differ in length.
    """
    message = np.asarray(message, dtype=np.uint8)
    keystream = np.asarray(keystream, dtype=np.uint8)
    if message.shape != keystream.shape:
        raise LengthMismatch(f"Message has {message.size} bits, keystream has {keystream.size}.")
    return message ^ keystream
