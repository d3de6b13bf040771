"""
Error-tolerance matching over ciphertexts.

The Hamming distance between an encrypted template and query is computed
with XOR gates and a balanced popcount tree of ripple-carry adders; the
result bit compares the encrypted count with a public threshold by a
ripple-borrow subtraction. All adders of a tree level run in the same
bootstrapping pass, and leading batch dimensions are carried through so
many matches can be evaluated together.
"""

import logging
from dataclasses import dataclass

import numpy as np

from utils.errors import LengthMismatch, WidthMismatch
from utils.gate_boot import EvaluationKey, GateOp, bootstrap_sign, gate, gate_batch
from utils.torus_lwe import (
    ONE_EIGHTH,
    LweCiphertext,
    concatenate,
    lwe_add,
    lwe_add_constant,
    stack,
    trivial,
)

logger = logging.getLogger(__name__)

DEFAULT_FEATURE_BITS = 2048
DEFAULT_THRESHOLD_RATIO = 0.25


@dataclass(frozen=True)
class EtmConfig:
    """
    Matching configuration.

    Attributes:
        l_w (int): Feature length in bits.
        t (int): Largest accepted Hamming distance; defaults to floor(0.25 * l_w).
    """
    l_w: int = DEFAULT_FEATURE_BITS
    t: int = None

    def __post_init__(self):
        if self.l_w < 1:
            raise ValueError("Feature length must be positive.")
        if self.t is None:
            object.__setattr__(self, "t", int(DEFAULT_THRESHOLD_RATIO * self.l_w))
        if not 0 <= self.t <= self.l_w:
            raise ValueError(f"Threshold must lie in [0, {self.l_w}], got {self.t}.")

    @property
    def counter_width(self) -> int:
        return counter_width(self.l_w)


def counter_width(l_w: int) -> int:
    """Bits needed to count up to l_w, i.e. ceil(log2(l_w + 1))."""
    return int(l_w).bit_length()


def _add_numbers(x: LweCiphertext, y: LweCiphertext, evk: EvaluationKey) -> LweCiphertext:
    """
    Ripple-carry addition of encrypted numbers.

    x and y have shape (..., width) with bit 0 first; the result has width + 1 bits.
    The per-bit XOR and AND of the operands do not depend on the carry, so
    they are evaluated for all bits in one pass before the carry ripples.
    """
    width = x.shape[-1]
    s1, c1 = gate_batch([(GateOp.XOR, x, y), (GateOp.AND, x, y)], evk)
    sums = [s1[..., 0]]
    carry = c1[..., 0]
    for i in range(1, width):
        bit_sum, c2 = gate_batch([(GateOp.XOR, s1[..., i], carry), (GateOp.AND, s1[..., i], carry)], evk)
        carry = gate(GateOp.OR, c1[..., i], c2, evk)
        sums.append(bit_sum)
    sums.append(carry)
    return stack(sums, axis=-1)


def hom_hamming(enc_w: LweCiphertext, enc_w2: LweCiphertext, evk: EvaluationKey) -> LweCiphertext:
    """
    Encrypted Hamming distance.

    Args:
        enc_w, enc_w2 (LweCiphertext): Bit vectors of shape (..., l_w).
        evk (EvaluationKey): Evaluation key.

    Returns:
        LweCiphertext: Counter of shape (..., ceil(log2(l_w + 1))), least significant bit first.

    Raises:
        LengthMismatch: If the vectors differ in shape.
    """
    if enc_w.shape != enc_w2.shape or not enc_w.shape:
        raise LengthMismatch(f"Template shape {enc_w.shape} does not match query shape {enc_w2.shape}.")
    l_w = enc_w.shape[-1]
    width = counter_width(l_w)

    numbers = gate(GateOp.XOR, enc_w, enc_w2, evk)[..., None]
    level = 0
    while numbers.shape[-2] > 1:
        count = numbers.shape[-2]
        if count % 2:
            pad = trivial(np.zeros(numbers.shape[:-2] + (1, numbers.shape[-1])), enc_w.params)
            numbers = concatenate([numbers, pad], axis=-2)
        numbers = _add_numbers(numbers[..., 0::2, :], numbers[..., 1::2, :], evk)
        level += 1
        logger.debug("Popcount level %d: %d numbers of %d bits", level, numbers.shape[-2], numbers.shape[-1])

    counter = numbers[..., 0, :]
    if counter.shape[-1] < width:
        pad = trivial(np.zeros(counter.shape[:-1] + (width - counter.shape[-1],)), enc_w.params)
        counter = concatenate([counter, pad], axis=-1)
    return counter[..., :width]


def hom_leq(counter: LweCiphertext, t, evk: EvaluationKey) -> LweCiphertext:
    """
    Encrypted comparison counter <= t against a public threshold.

    The borrow of t - counter ripples from the least significant bit: where
    t has a 0 bit the borrow becomes (x_i OR borrow), where it has a 1 bit it
    becomes (x_i AND borrow). The final borrow means counter > t, and one
    XOR with a trivial 1 turns it into the result.

    Args:
        counter (LweCiphertext): Shape (..., width), least significant bit first.
        t (int or array of int): Threshold, broadcast against the batch shape.
        evk (EvaluationKey): Evaluation key.

    Returns:
        LweCiphertext: Enc(1) where counter <= t, shape counter.shape[:-1].

    Raises:
        WidthMismatch: If some threshold needs more bits than the counter has.
    """
    width = counter.shape[-1]
    t = np.broadcast_to(np.asarray(t, dtype=np.int64), counter.shape[:-1])
    if np.any(t < 0) or int(t.max(initial=0)).bit_length() > width:
        raise WidthMismatch(f"Threshold does not fit a {width}-bit counter.")

    borrow = trivial(np.zeros(counter.shape[:-1]), counter.params)
    for i in range(width):
        t_bit = (t >> i) & 1
        # AND is x + b - 3/8, OR is x + b - 1/8.
        constants = np.where(t_bit == 1, -3 * ONE_EIGHTH, -ONE_EIGHTH) % 2 ** 32
        combo = lwe_add_constant(lwe_add(counter[..., i], borrow), constants.astype(np.uint32))
        borrow = bootstrap_sign(combo, evk)
    return gate(GateOp.XOR, borrow, trivial(np.ones(borrow.shape), counter.params), evk)


def etm(enc_w: LweCiphertext, enc_w2: LweCiphertext, cfg: EtmConfig, evk: EvaluationKey) -> LweCiphertext:
    """
    Encrypted accept bit: Enc(1) iff hamming(w, w') <= cfg.t.

    Raises:
        LengthMismatch: If the vectors do not have cfg.l_w bits.
    """
    if enc_w.shape[-1:] != (cfg.l_w,):
        raise LengthMismatch(f"Template must hold {cfg.l_w} bits, got shape {enc_w.shape}.")
    return hom_leq(hom_hamming(enc_w, enc_w2, evk), cfg.t, evk)
