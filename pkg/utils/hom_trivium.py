"""
Trivium evaluated over LWE ciphertexts (the server-side cipher E^FHE).

The state mirrors utils.trivium: three register windows of ciphertexts,
advanced up to 64 rounds at a time. Within one block every AND operand and
XOR term was produced by an earlier block, so a block costs one batched
bootstrap for the 3*m AND gates plus the refreshes of its XOR sums.

Two XOR policies are available:

* ``LAZY`` (default): XOR terms are doubled onto the {0, 1/2} encoding and
  added linearly, then refreshed once per output bit. If a chain would
  exceed the noise cap it is refreshed early.
* ``PURE``: every XOR is its own bootstrapped gate.
"""

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np

from utils.errors import DimensionMismatch, LengthMismatch
from utils.gate_boot import EvaluationKey, GateOp, gate, gate_batch, refresh
from utils.params import noise_cap
from utils.serialization import TypeTag, pack_header, unpack_header
from utils.torus_lwe import (
    LweCiphertext,
    LweSecretKey,
    concatenate,
    decrypt,
    lwe_add,
    lwe_scale,
    trivial,
)
from utils.trivium import BLOCK, IV_BITS, KEY_BITS, WARMUP_ROUNDS

logger = logging.getLogger(__name__)


class BootstrapMode(str, Enum):
    LAZY = "lazy"
    PURE = "pure"


@dataclass(frozen=True, eq=False)
class HomDecryptionKey:
    """The 80 Trivium key bits encrypted under the client's FHE public key."""
    bits: LweCiphertext

    def __post_init__(self):
        if self.bits.shape != (KEY_BITS,):
            raise LengthMismatch(f"Decryption key must hold {KEY_BITS} ciphertexts, got {self.bits.shape}.")

    @property
    def params(self):
        return self.bits.params

    @property
    def serialized_size(self) -> int:
        return self.bits.serialized_size

    def to_bytes(self, header: bool = False) -> bytes:
        prefix = pack_header(self.params, TypeTag.HOM_DECRYPTION_KEY) if header else b""
        return prefix + self.bits.to_bytes()

    @classmethod
    def from_bytes(cls, blob: bytes, params=None) -> "HomDecryptionKey":
        if params is None:
            params, _, blob = unpack_header(blob, TypeTag.HOM_DECRYPTION_KEY)
        return cls(LweCiphertext.from_bytes(blob, params))


@dataclass(eq=False)
class HomTriviumState:
    """
    Encrypted register windows.

    Attributes:
        a, b, c (LweCiphertext): Windows of 93, 84 and 111 ciphertexts.
        evk (EvaluationKey): Key used for every bootstrap.
        steps (int): Rounds applied so far (1152 after initialization).
        mode (BootstrapMode): XOR policy.
        noise_cap (int): Noise units a lazy XOR chain may reach before an early refresh.
    """
    a: LweCiphertext
    b: LweCiphertext
    c: LweCiphertext
    evk: EvaluationKey
    steps: int = 0
    mode: BootstrapMode = BootstrapMode.LAZY
    noise_cap: int = 0

    def checkpoint(self) -> "HomTriviumState":
        """Independent copy; ciphertexts are immutable so sharing them is safe."""
        return HomTriviumState(self.a, self.b, self.c, self.evk, self.steps, self.mode, self.noise_cap)

    def restore(self, saved: "HomTriviumState") -> None:
        self.a, self.b, self.c, self.steps = saved.a, saved.b, saved.c, saved.steps

    def decrypt_bits(self, sk: LweSecretKey) -> np.ndarray:
        """The 288 state bits in standard order (needs the secret key; test oracle)."""
        return np.concatenate([decrypt(self.a, sk)[::-1], decrypt(self.b, sk)[::-1], decrypt(self.c, sk)[::-1]])

    @property
    def budgets(self) -> dict:
        """Remaining noise budget of each register window."""
        return {name: max(0, self.noise_cap - getattr(self, name).noise) for name in ("a", "b", "c")}


def _lazy_xor(terms, evk: EvaluationKey, cap: int) -> LweCiphertext:
    """Sum of canonical terms on the {0, 1/2} encoding, refreshed when the cap would be exceeded."""
    acc = lwe_scale(terms[0], 2)
    for term in terms[1:]:
        doubled = lwe_scale(term, 2)
        if acc.noise + doubled.noise > cap:
            acc = lwe_scale(refresh(acc, evk, half=True), 2)
        acc = lwe_add(acc, doubled)
    return acc


def _pure_xor(terms, evk: EvaluationKey) -> LweCiphertext:
    acc = terms[0]
    for term in terms[1:]:
        acc = gate(GateOp.XOR, acc, term, evk)
    return acc


def _advance(state: HomTriviumState, m: int, with_output: bool):
    A, B, C = state.a, state.b, state.c
    evk = state.evk
    j = np.arange(m)

    ands = gate_batch([(
        GateOp.AND,
        concatenate([A[j + 2], B[j + 2], C[j + 2]]),
        concatenate([A[j + 1], B[j + 1], C[j + 1]]),
    )], evk)[0]
    and_a, and_b, and_c = ands[:m], ands[m:2 * m], ands[2 * m:]

    # Feedback terms for the new b, c and a bits, stacked position by position.
    register_terms = [
        concatenate([A[27 + j], B[15 + j], C[45 + j]]),
        concatenate([A[j], B[j], C[j]]),
        concatenate([and_a, and_b, and_c]),
        concatenate([B[6 + j], C[24 + j], A[24 + j]]),
    ]
    output_terms = [A[27 + j], A[j], B[15 + j], B[j], C[45 + j], C[j]] if with_output else None

    if state.mode == BootstrapMode.PURE:
        fresh = _pure_xor(register_terms, evk)
        z = _pure_xor(output_terms, evk) if with_output else None
    else:
        sums = [_lazy_xor(register_terms, evk, state.noise_cap)]
        if with_output:
            sums.append(_lazy_xor(output_terms, evk, state.noise_cap))
        refreshed = refresh(concatenate(sums), evk, half=True)
        fresh = refreshed[:3 * m]
        z = refreshed[3 * m:] if with_output else None

    new_b, new_c, new_a = fresh[:m], fresh[m:2 * m], fresh[2 * m:]
    state.a = concatenate([A[m:], new_a])
    state.b = concatenate([B[m:], new_b])
    state.c = concatenate([C[m:], new_c])
    state.steps += m
    return z


def efhe_init(ct_iv: LweCiphertext, dk: HomDecryptionKey, evk: EvaluationKey,
              mode: BootstrapMode = BootstrapMode.LAZY, cap: int = None) -> HomTriviumState:
    """
    Load the encrypted key and the IV ciphertexts and run the 1152 warm-up rounds.

    Args:
        ct_iv (LweCiphertext): 80 IV ciphertexts (trivial encodings of the public IV).
        dk (HomDecryptionKey): Encrypted Trivium key.
        evk (EvaluationKey): Evaluation key.
        mode (BootstrapMode): XOR policy.
        cap (int): Override of the lazy noise cap (defaults to the parameter set's cap).

    Raises:
        DimensionMismatch: If the inputs do not share evk's dimension.
        LengthMismatch: If ct_iv does not hold 80 ciphertexts.
    """
    params = evk.params
    for ct in (ct_iv, dk.bits):
        if ct.params.n != params.n:
            raise DimensionMismatch(f"Dimension {ct.params.n} does not match evaluation key dimension {params.n}.")
    if ct_iv.shape != (IV_BITS,):
        raise LengthMismatch(f"IV must be {IV_BITS} ciphertexts, got {ct_iv.shape}.")

    key_rev = dk.bits[np.arange(KEY_BITS)[::-1]]
    iv_rev = ct_iv[np.arange(IV_BITS)[::-1]]
    a = concatenate([trivial(np.zeros(13), params), key_rev])
    b = concatenate([trivial(np.zeros(4), params), iv_rev])
    c = concatenate([trivial(np.ones(3), params), trivial(np.zeros(108), params)])

    state = HomTriviumState(
        a, b, c, evk,
        mode=BootstrapMode(mode),
        noise_cap=noise_cap(params) if cap is None else cap,
    )
    for block in range(WARMUP_ROUNDS // BLOCK):
        _advance(state, BLOCK, with_output=False)
        logger.debug("Warm-up block %d/%d done", block + 1, WARMUP_ROUNDS // BLOCK)
    return state


def efhe_keystream(state: HomTriviumState, length: int) -> LweCiphertext:
    """
    Produce ``length`` encrypted keystream bits, advancing the state.

    Returns:
        LweCiphertext: Shape (length,).
    """
    outputs = []
    remaining = length
    while remaining > 0:
        m = min(BLOCK, remaining)
        outputs.append(_advance(state, m, with_output=True))
        remaining -= m
    if not outputs:
        return trivial(np.zeros(0), state.evk.params)
    return concatenate(outputs)


def hom_stream_decrypt(enc_c: LweCiphertext, enc_keystream: LweCiphertext, evk: EvaluationKey) -> LweCiphertext:
    """
    Homomorphic stream-cipher decryption: Enc(w_i) = Enc(c_i) XOR Enc(k_i).

    Raises:
        LengthMismatch: If the two vectors differ in length.
    """
    if enc_c.shape != enc_keystream.shape:
        raise LengthMismatch(f"Ciphertext has {enc_c.shape} bits, keystream has {enc_keystream.shape}.")
    if enc_c.size == 0:
        return enc_c
    return gate(GateOp.XOR, enc_c, enc_keystream, evk)
