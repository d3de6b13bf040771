"""
Gate bootstrapping over the torus.

A gate first forms a public linear combination of its inputs, then
bootstraps on the sign of the resulting phase: blind rotation of a constant
test polynomial with the bootstrapping key, sample extraction of the
constant coefficient, and a key switch back to the LWE key. Every gate
output is a fresh encryption on {0, 1/4} with one unit of noise.

Ring products use a folded negacyclic FFT of size N/2 in float64; ring
key material is generated with exact integer products.
"""

import logging
import threading
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache

import numpy as np

from utils.errors import DimensionMismatch, FramingError, InvalidParams
from utils.params import BootstrapParams, default_bootstrap, noise_cap
from utils.serialization import TypeTag, bytes_to_words, pack_header, unpack_header, words_to_bytes
from utils.torus_lwe import (
    ENCODED_ONE,
    ONE_EIGHTH,
    LweCiphertext,
    LweSecretKey,
    concatenate,
    encrypt_torus,
    lwe_add,
    lwe_add_constant,
    lwe_scale,
    gaussian,
    signed,
    to_torus,
    uniform_torus,
)

logger = logging.getLogger(__name__)

# Samples bootstrapped together per blind-rotation pass.
BATCH_CHUNK = 1024


class GateOp(str, Enum):
    AND = "AND"
    OR = "OR"
    NAND = "NAND"
    XOR = "XOR"
    XNOR = "XNOR"
    ANDNY = "ANDNY"  # (not x) and y


# (coefficient of x, coefficient of y, constant in eighths of the torus)
GATE_COMBINATIONS = {
    GateOp.AND: (1, 1, -3),
    GateOp.OR: (1, 1, -1),
    GateOp.NAND: (-1, -1, 3),
    GateOp.XOR: (2, 2, -2),
    GateOp.XNOR: (-2, -2, 2),
    GateOp.ANDNY: (-1, 1, -1),
}

PLAIN_GATES = {
    GateOp.AND: lambda x, y: x & y,
    GateOp.OR: lambda x, y: x | y,
    GateOp.NAND: lambda x, y: 1 - (x & y),
    GateOp.XOR: lambda x, y: x ^ y,
    GateOp.XNOR: lambda x, y: 1 - (x ^ y),
    GateOp.ANDNY: lambda x, y: (1 - x) & y,
}


@lru_cache(maxsize=None)
def _twist(N: int) -> np.ndarray:
    return np.exp(1j * np.pi * np.arange(N // 2) / N)


def poly_to_fft(poly: np.ndarray) -> np.ndarray:
    """Folded negacyclic transform along the last axis (N reals -> N/2 complex)."""
    N = poly.shape[-1]
    M = N // 2
    folded = poly[..., :M] + 1j * poly[..., M:]
    return np.fft.fft(folded * _twist(N), axis=-1)


def fft_to_poly(spectrum: np.ndarray) -> np.ndarray:
    """Inverse of poly_to_fft, rounded back to torus words."""
    M = spectrum.shape[-1]
    unfolded = np.fft.ifft(spectrum, axis=-1) * np.conj(_twist(2 * M))
    coeffs = np.concatenate([unfolded.real, unfolded.imag], axis=-1)
    return to_torus(np.rint(coeffs))


def negacyclic_matrix(s: np.ndarray) -> np.ndarray:
    """
    Matrix T with (p * s) mod (X^N + 1) == p @ T for a small integer polynomial s.

    Products with this matrix in float64 are exact while every partial sum
    stays below 2^53.
    """
    N = s.shape[-1]
    i = np.arange(N)[None, :]
    j = np.arange(N)[:, None]
    idx = (i - j) % N
    sign = np.where(i >= j, 1.0, -1.0)
    return sign * s.astype(np.float64)[idx]


def decompose(values: np.ndarray, base_log: int, levels: int) -> np.ndarray:
    """
    Signed gadget decomposition of torus words.

    Returns digits in [-B/2, B/2) on a new last axis such that
    sum_p d_p * 2^(32 - p * base_log) approximates the input with rounding.
    """
    half = 1 << (base_log - 1)
    offset = sum(half << (32 - p * base_log) for p in range(1, levels + 1))
    offset += 1 << (32 - levels * base_log - 1)
    shifted = (values.astype(np.uint64) + np.uint64(offset)) & np.uint64(0xFFFFFFFF)
    digits = [
        ((shifted >> np.uint64(32 - p * base_log)) & np.uint64((1 << base_log) - 1)).astype(np.int64) - half
        for p in range(1, levels + 1)
    ]
    return np.stack(digits, axis=-1)


def rotate(polys: np.ndarray, powers: np.ndarray) -> np.ndarray:
    """
    Multiply each row of polynomials by X^power modulo X^N + 1.

    Args:
        polys (np.ndarray): uint32 array of shape (B, c, N).
        powers (np.ndarray): integer array of shape (B,), taken modulo 2N.
    """
    N = polys.shape[-1]
    idx = (np.arange(N)[None, :] - powers.astype(np.int64)[:, None]) % (2 * N)
    src = np.broadcast_to((idx % N)[:, None, :], polys.shape)
    gathered = np.take_along_axis(polys, src, axis=-1)
    return np.where((idx >= N)[:, None, :], -gathered, gathered)


@dataclass(eq=False)
class EvaluationKey:
    """
    Public gate-evaluation material.

    Attributes:
        bp (BootstrapParams): Parameters the key was generated for.
        bsk (np.ndarray): Bootstrapping key, uint32 of shape
            (n, (k+1)*levels, k+1, N): ring-GSW encryptions of the LWE key bits.
        ksk (np.ndarray): Key-switching key, uint32 of shape (k*N, ks_levels, n+1):
            LWE encryptions of each extracted key bit scaled by 2^(32 - j*ks_base_log).
    """
    bp: BootstrapParams
    bsk: np.ndarray
    ksk: np.ndarray
    _cache: dict = field(default_factory=dict, init=False, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False)

    def __post_init__(self):
        bp = self.bp
        bsk_shape = (bp.lwe.n, bp.gadget_rows, bp.k + 1, bp.N)
        ksk_shape = (bp.extracted_dim, bp.ks_levels, bp.lwe.n + 1)
        if self.bsk.shape != bsk_shape or self.ksk.shape != ksk_shape:
            raise InvalidParams("Evaluation key arrays do not match their parameters.")

    @property
    def params(self):
        return self.bp.lwe

    @property
    def bootstrap_key_bytes(self) -> int:
        return self.bsk.size * 4

    @property
    def keyswitch_key_bytes(self) -> int:
        return self.ksk.size * 4

    @property
    def serialized_size(self) -> int:
        return self.bootstrap_key_bytes + self.keyswitch_key_bytes

    @property
    def bsk_fft(self) -> np.ndarray:
        with self._lock:
            if "bsk_fft" not in self._cache:
                self._cache["bsk_fft"] = poly_to_fft(signed(self.bsk).astype(np.float64))
            return self._cache["bsk_fft"]

    @property
    def ksk_matrix(self) -> np.ndarray:
        with self._lock:
            if "ksk" not in self._cache:
                rows = self.bp.extracted_dim * self.bp.ks_levels
                self._cache["ksk"] = signed(self.ksk).reshape(rows, self.bp.lwe.n + 1).astype(np.float64)
            return self._cache["ksk"]

    def to_bytes(self, header: bool = False) -> bytes:
        prefix = pack_header(self.params, TypeTag.EVALUATION_KEY) if header else b""
        return prefix + words_to_bytes(self.bsk) + words_to_bytes(self.ksk)

    @classmethod
    def from_bytes(cls, blob: bytes, bp: BootstrapParams = None) -> "EvaluationKey":
        """
        Parse an evaluation key.

        Raises:
            FramingError: If the body size does not match the parameters.
        """
        if bp is None:
            params, _, blob = unpack_header(blob, TypeTag.EVALUATION_KEY)
            bp = default_bootstrap(params)
        if len(blob) != bp.evaluation_key_bytes:
            raise FramingError(
                f"Evaluation key body is {len(blob)} bytes; expected {bp.evaluation_key_bytes}."
            )
        split = bp.bootstrap_key_bytes
        bsk = bytes_to_words(blob[:split]).reshape(bp.lwe.n, bp.gadget_rows, bp.k + 1, bp.N)
        ksk = bytes_to_words(blob[split:]).reshape(bp.extracted_dim, bp.ks_levels, bp.lwe.n + 1)
        return cls(bp, bsk, ksk)


def _rlwe_zero(ring_key: np.ndarray, count: int, bp: BootstrapParams, rng: np.random.Generator) -> np.ndarray:
    """``count`` ring-LWE encryptions of zero, shape (count, k+1, N)."""
    masks = uniform_torus(rng, (count, bp.k, bp.N))
    body = np.zeros((count, bp.N), dtype=np.int64)
    for i in range(bp.k):
        product = signed(masks[:, i, :]).astype(np.float64) @ negacyclic_matrix(ring_key[i])
        body += product.astype(np.int64)
    body = to_torus(body) + gaussian(rng, bp.bk_sigma, (count, bp.N))
    return np.concatenate([masks, body[:, None, :]], axis=1)


def make_evaluation_key(sk: LweSecretKey, bp: BootstrapParams = None, rng: np.random.Generator = None) -> EvaluationKey:
    """
    Generate the bootstrapping and key-switching keys for ``sk``.

    Args:
        sk (LweSecretKey): LWE key the gates decrypt under.
        bp (BootstrapParams): Defaults to the set linked to ``sk.params``.
        rng (np.random.Generator): Entropy source.

    Returns:
        EvaluationKey: Public key material; the ring key is discarded.

    Raises:
        InvalidParams: If ``bp`` is linked to a different LWE dimension.
    """
    bp = default_bootstrap(sk.params) if bp is None else bp
    if bp.lwe.n != sk.params.n:
        raise InvalidParams(f"Bootstrap parameters expect n={bp.lwe.n}, key has n={sk.params.n}.")
    if rng is None:
        rng = np.random.default_rng()
    n, k, N, levels = bp.lwe.n, bp.k, bp.N, bp.decomp_levels

    ring_key = rng.integers(0, 2, size=(k, N), dtype=np.uint8)

    bsk = _rlwe_zero(ring_key, n * bp.gadget_rows, bp, rng).reshape(n, bp.gadget_rows, k + 1, N)
    key_bits = sk.bits.astype(np.uint32)
    for j in range(k + 1):
        for p in range(1, levels + 1):
            gadget = np.uint32(1 << (32 - p * bp.decomp_base_log))
            bsk[:, j * levels + p - 1, j, 0] += key_bits * gadget

    extracted = ring_key.reshape(-1).astype(np.uint32)
    scales = np.array(
        [1 << (32 - (j + 1) * bp.ks_base_log) for j in range(bp.ks_levels)], dtype=np.uint32
    )
    messages = extracted[:, None] * scales[None, :]
    ks_samples = encrypt_torus(messages, sk, rng)
    ksk = np.concatenate([ks_samples.a, ks_samples.b[..., None]], axis=-1)

    logger.info(
        "Generated evaluation key for %s: bootstrapping %d B, key switching %d B",
        bp.lwe.name.value, bsk.size * 4, ksk.size * 4,
    )
    return EvaluationKey(bp, bsk, ksk)


def _external_product(polys: np.ndarray, gsw_fft: np.ndarray, bp: BootstrapParams) -> np.ndarray:
    digits = decompose(polys, bp.decomp_base_log, bp.decomp_levels)
    digits = np.moveaxis(digits, -1, -2).reshape(polys.shape[0], bp.gadget_rows, bp.N)
    spectrum = np.einsum("brm,rcm->bcm", poly_to_fft(digits.astype(np.float64)), gsw_fft)
    return fft_to_poly(spectrum)


def _modswitch(values: np.ndarray, N: int) -> np.ndarray:
    shift = 32 - (2 * N).bit_length() + 1
    rounded = (values.astype(np.uint64) + np.uint64(1 << (shift - 1))) >> np.uint64(shift)
    return (rounded & np.uint64(2 * N - 1)).astype(np.int64)


def _blind_rotate_extract(a: np.ndarray, b: np.ndarray, evk: EvaluationKey, mu: int):
    """
    Blind-rotate a constant test polynomial by the rounded phase of each
    sample and extract the constant coefficient.

    Returns (a', b') of an LWE sample under the extracted ring key whose phase
    is +mu when the input phase lies in [0, 1/2) and -mu otherwise.
    """
    bp = evk.bp
    N, k = bp.N, bp.k
    bar_a = _modswitch(a, N)
    bar_b = _modswitch(b, N)
    batch = b.shape[0]

    acc = np.zeros((batch, k + 1, N), dtype=np.uint32)
    test_vector = np.full((batch, 1, N), mu, dtype=np.uint32)
    acc[:, k:, :] = rotate(test_vector, (2 * N - bar_b) % (2 * N))

    bsk_fft = evk.bsk_fft
    for i in range(bp.lwe.n):
        diff = rotate(acc, bar_a[:, i]) - acc
        acc = acc + _external_product(diff, bsk_fft[i], bp)

    masks = acc[:, :k, :]
    extracted = np.concatenate([masks[:, :, :1], -masks[:, :, :0:-1]], axis=-1)
    return extracted.reshape(batch, k * N), acc[:, k, 0].copy()


def _key_switch(a: np.ndarray, b: np.ndarray, evk: EvaluationKey):
    bp = evk.bp
    digits = decompose(a, bp.ks_base_log, bp.ks_levels).reshape(a.shape[0], -1)
    combined = digits.astype(np.float64) @ evk.ksk_matrix
    combined = to_torus(np.rint(combined).astype(np.int64))
    return -combined[:, :-1], b - combined[:, -1]


def _bootstrap_flat(a: np.ndarray, b: np.ndarray, evk: EvaluationKey, mu: int, offset: int):
    out_a, out_b = [], []
    for start in range(0, b.shape[0], BATCH_CHUNK):
        ea, eb = _blind_rotate_extract(a[start:start + BATCH_CHUNK], b[start:start + BATCH_CHUNK], evk, mu)
        ka, kb = _key_switch(ea, eb + np.uint32(offset), evk)
        out_a.append(ka)
        out_b.append(kb)
    return np.concatenate(out_a), np.concatenate(out_b)


def _check_evk(ct: LweCiphertext, evk: EvaluationKey):
    if ct.params.n != evk.params.n:
        raise DimensionMismatch(
            f"Ciphertext dimension {ct.params.n} does not match evaluation key dimension {evk.params.n}."
        )


def bootstrap_sign(ct: LweCiphertext, evk: EvaluationKey) -> LweCiphertext:
    """
    Bootstrap on the sign of the phase.

    Returns a fresh encryption of 1 (phase 1/4) where the input phase lies in
    [0, 1/2) and of 0 elsewhere, for every sample in ``ct``.

    Raises:
        DimensionMismatch: If ``ct`` and ``evk`` use different dimensions.
    """
    _check_evk(ct, evk)
    n = ct.params.n
    if ct.size == 0:
        return LweCiphertext(ct.a, ct.b, ct.params, 1)
    a, b = _bootstrap_flat(ct.a.reshape(-1, n), ct.b.reshape(-1), evk, ONE_EIGHTH, ONE_EIGHTH)
    return LweCiphertext(a.reshape(ct.shape + (n,)), b.reshape(ct.shape), ct.params, noise=1)


def linear_combination(op: GateOp, x: LweCiphertext, y: LweCiphertext) -> LweCiphertext:
    """The pre-bootstrap combination of a binary gate (broadcasting x against y)."""
    cx, cy, eighths = GATE_COMBINATIONS[GateOp(op)]
    combo = lwe_add(lwe_scale(x, cx), lwe_scale(y, cy))
    return lwe_add_constant(combo, np.uint32((eighths * ONE_EIGHTH) % 2 ** 32))


def gate(op: GateOp, x: LweCiphertext, y: LweCiphertext, evk: EvaluationKey) -> LweCiphertext:
    """
    Evaluate a bootstrapped binary gate.

    Args:
        op (GateOp): Gate to evaluate.
        x, y (LweCiphertext): Canonical {0, 1/4} encryptions; shapes broadcast.
        evk (EvaluationKey): Evaluation key.

    Returns:
        LweCiphertext: Fresh encryption of op(x, y).

    Raises:
        DimensionMismatch: If the operands or key dimensions differ.
    """
    return bootstrap_sign(linear_combination(op, x, y), evk)


def gate_batch(requests, evk: EvaluationKey) -> list:
    """
    Evaluate several independent gates in one bootstrapping pass.

    Args:
        requests: Iterable of (op, x, y) triples.
        evk (EvaluationKey): Evaluation key.

    Returns:
        list[LweCiphertext]: One output per request, in order.
    """
    combos = [linear_combination(op, x, y) for op, x, y in requests]
    if not combos:
        return []
    flat = [c.reshape(-1) for c in combos]
    out = bootstrap_sign(concatenate(flat), evk)
    results, start = [], 0
    for combo in combos:
        results.append(out[start:start + combo.size].reshape(combo.shape))
        start += combo.size
    return results


def mux(sel: LweCiphertext, a: LweCiphertext, b: LweCiphertext, evk: EvaluationKey) -> LweCiphertext:
    """
    Homomorphic multiplexer: encrypts a where sel is 1 and b where sel is 0.

    Both branches are blind-rotated in one pass, summed in the extracted
    domain with an offset of 1/4, and key-switched once.

    Raises:
        DimensionMismatch: If the operands or key dimensions differ.
    """
    for ct in (sel, a, b):
        _check_evk(ct, evk)
    left = linear_combination(GateOp.AND, sel, a)
    right = linear_combination(GateOp.ANDNY, sel, b)
    shape = np.broadcast_shapes(left.shape, right.shape)
    n = sel.params.n
    count = int(np.prod(shape, dtype=np.int64))
    stacked_a = np.concatenate([
        np.broadcast_to(left.a, shape + (n,)).reshape(-1, n),
        np.broadcast_to(right.a, shape + (n,)).reshape(-1, n),
    ])
    stacked_b = np.concatenate([
        np.broadcast_to(left.b, shape).reshape(-1),
        np.broadcast_to(right.b, shape).reshape(-1),
    ])
    out_a, out_b = [], []
    for start in range(0, count, BATCH_CHUNK // 2):
        stop = min(start + BATCH_CHUNK // 2, count)
        rows = np.r_[start:stop, count + start:count + stop]
        ea, eb = _blind_rotate_extract(stacked_a[rows], stacked_b[rows], evk, ONE_EIGHTH)
        half = stop - start
        summed_a = ea[:half] + ea[half:]
        summed_b = eb[:half] + eb[half:] + np.uint32(ENCODED_ONE)
        ka, kb = _key_switch(summed_a, summed_b, evk)
        out_a.append(ka)
        out_b.append(kb)
    a_out = np.concatenate(out_a).reshape(shape + (n,))
    b_out = np.concatenate(out_b).reshape(shape)
    return LweCiphertext(a_out, b_out, sel.params, noise=2)


def refresh(ct: LweCiphertext, evk: EvaluationKey, half: bool = False) -> LweCiphertext:
    """
    Bootstrap a linearly accumulated bit back to a fresh canonical ciphertext.

    Args:
        ct (LweCiphertext): Bit encoded on {0, 1/4}, or on {0, 1/2} when ``half``.
        evk (EvaluationKey): Evaluation key.
        half (bool): Input uses the {0, 1/2} encoding (XOR by addition).
    """
    centre = ENCODED_ONE if half else ONE_EIGHTH
    return bootstrap_sign(lwe_add_constant(ct, np.uint32(2 ** 32 - centre)), evk)


def noise_budget(ct: LweCiphertext) -> int:
    """
    Conservative count of fresh-ciphertext additions tolerable before a bootstrap.

    Reaches 0 when the accumulated noise units hit the cap of the linked
    parameter set; never increases under lwe_add.
    """
    return max(0, noise_cap(ct.params) - ct.noise)
