"""
Discretized torus arithmetic and LWE encryption.

The torus R/Z is represented by unsigned 32-bit integers (multiples of
2^-32); numpy uint32 arithmetic wraps exactly like torus addition. A
ciphertext may hold a whole array of LWE samples so that gates and
protocol steps run vectorized over many bits at once.

Encoding: bit 0 maps to 0 and bit 1 maps to 2^30 (one quarter).
"""

import logging
import threading
from dataclasses import dataclass

import numpy as np

from utils.errors import DimensionMismatch, ExhaustedPublicKey, FramingError
from utils.params import LweParams, lookup_params
from utils.serialization import TypeTag, bytes_to_words, pack_header, unpack_header, words_to_bytes

logger = logging.getLogger(__name__)

MASK32 = 0xFFFFFFFF
ENCODED_ONE = 1 << 30
ONE_EIGHTH = 1 << 29
HALF = 1 << 31


def to_torus(values) -> np.ndarray:
    """Reduce signed or unsigned integers modulo 2^32 into uint32."""
    return (np.asarray(values, dtype=np.int64) & MASK32).astype(np.uint32)


def torus_from_float(values) -> np.ndarray:
    """Map reals (interpreted modulo 1) to the nearest torus element."""
    scaled = np.rint(np.asarray(values, dtype=np.float64) * 2.0 ** 32)
    return to_torus(np.mod(scaled, 2.0 ** 32))


def signed(values: np.ndarray) -> np.ndarray:
    """View torus elements as signed integers in [-2^31, 2^31)."""
    return np.asarray(values, dtype=np.uint32).view(np.int32).astype(np.int64)


def gaussian(rng: np.random.Generator, sigma: float, shape) -> np.ndarray:
    """
    Sample rounded Gaussian torus noise.

    A real sample of standard deviation ``sigma`` (fraction of the torus) is
    scaled by 2^32, rounded to the nearest integer and reduced modulo 2^32.
    """
    if sigma == 0:
        return np.zeros(shape, dtype=np.uint32)
    return to_torus(np.rint(rng.normal(0.0, sigma, size=shape) * 2.0 ** 32))


def uniform_torus(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.integers(0, 2 ** 32, size=shape, dtype=np.uint32)


@dataclass(frozen=True, eq=False)
class LweSecretKey:
    """Binary LWE secret key of length params.n."""
    bits: np.ndarray
    params: LweParams

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=np.uint8)
        if bits.shape != (self.params.n,):
            raise DimensionMismatch(f"Secret key must have {self.params.n} bits, got shape {bits.shape}.")
        bits.flags.writeable = False
        object.__setattr__(self, "bits", bits)

    def to_bytes(self, header: bool = False) -> bytes:
        body = np.packbits(self.bits, bitorder="little").tobytes()
        return (pack_header(self.params, TypeTag.SECRET_KEY) if header else b"") + body

    @classmethod
    def from_bytes(cls, blob: bytes, params: LweParams = None) -> "LweSecretKey":
        if params is None:
            params, _, blob = unpack_header(blob, TypeTag.SECRET_KEY)
        if len(blob) != params.secret_key_bytes:
            raise FramingError(f"Secret key body must be {params.secret_key_bytes} bytes.")
        bits = np.unpackbits(np.frombuffer(blob, dtype=np.uint8), bitorder="little")[: params.n]
        return cls(bits, params)


@dataclass(frozen=True, eq=False)
class LweCiphertext:
    """
    One or more LWE samples (a, b) sharing the same parameters.

    ``a`` has shape (*shape, n) and ``b`` has shape ``shape``. ``noise`` is the
    worst-case noise of the samples, counted in units of one bootstrapped
    gate output (fresh = 1, trivial = 0).
    """
    a: np.ndarray
    b: np.ndarray
    params: LweParams
    noise: int = 1

    def __post_init__(self):
        a = np.asarray(self.a, dtype=np.uint32)
        b = np.asarray(self.b, dtype=np.uint32)
        if a.shape != b.shape + (self.params.n,):
            raise DimensionMismatch(
                f"Mask shape {a.shape} does not match body shape {b.shape} at n={self.params.n}."
            )
        a.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def shape(self) -> tuple:
        return self.b.shape

    @property
    def size(self) -> int:
        return int(self.b.size)

    def __len__(self) -> int:
        if not self.shape:
            raise TypeError("len() of a single ciphertext")
        return self.shape[0]

    def __getitem__(self, key) -> "LweCiphertext":
        if not isinstance(key, tuple):
            key = (key,)
        return LweCiphertext(self.a[key + (slice(None),)], self.b[key], self.params, self.noise)

    def reshape(self, *shape) -> "LweCiphertext":
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        b = self.b.reshape(shape)
        return LweCiphertext(self.a.reshape(b.shape + (self.params.n,)), b, self.params, self.noise)

    def with_noise(self, noise: int) -> "LweCiphertext":
        return LweCiphertext(self.a, self.b, self.params, noise)

    @property
    def serialized_size(self) -> int:
        return self.size * self.params.ciphertext_bytes

    def to_bytes(self, header: bool = False) -> bytes:
        """Samples in row-major order, each as n mask words followed by the body word."""
        words = np.concatenate([self.a, self.b[..., None]], axis=-1)
        prefix = pack_header(self.params, TypeTag.LWE_CIPHERTEXT) if header else b""
        return prefix + words_to_bytes(words)

    @classmethod
    def from_bytes(cls, blob: bytes, params: LweParams = None, shape=None, noise: int = 1) -> "LweCiphertext":
        """
        Parse serialized samples.

        Args:
            blob (bytes): Body bytes, or a headed blob when ``params`` is None.
            params (LweParams): Parameters of the body.
            shape (tuple): Batch shape; defaults to a flat vector of samples.
            noise (int): Noise units to attach.

        Raises:
            FramingError: If the body size is not a whole number of samples.
        """
        if params is None:
            params, _, blob = unpack_header(blob, TypeTag.LWE_CIPHERTEXT)
        width = params.n + 1
        words = bytes_to_words(blob)
        if words.size % width:
            raise FramingError(f"Body is not a whole number of {params.ciphertext_bytes}-byte samples.")
        count = words.size // width
        if shape is None:
            shape = (count,)
        words = words.reshape(tuple(shape) + (width,))
        return cls(words[..., :-1], words[..., -1], params, noise)


def _check_params(*cts):
    first = cts[0].params
    for ct in cts[1:]:
        if ct.params.n != first.n:
            raise DimensionMismatch(f"Dimension {ct.params.n} does not match {first.n}.")
    return first


def keygen(params, rng: np.random.Generator) -> LweSecretKey:
    """
    Generate a uniform binary secret key.

    Args:
        params: LweParams or parameter set name.
        rng (np.random.Generator): Entropy source.

    Returns:
        LweSecretKey: Key of ``params.n`` uniform bits.
    """
    params = lookup_params(params)
    return LweSecretKey(rng.integers(0, 2, size=params.n, dtype=np.uint8), params)


def _inner(a: np.ndarray, s: np.ndarray) -> np.ndarray:
    return np.sum(a * s.astype(np.uint32), axis=-1, dtype=np.uint32)


def encrypt_torus(values, sk: LweSecretKey, rng: np.random.Generator, sigma: float = None) -> LweCiphertext:
    """Secret-key encryption of arbitrary torus messages."""
    params = sk.params
    sigma = params.sigma if sigma is None else sigma
    values = np.asarray(values, dtype=np.uint32)
    a = uniform_torus(rng, values.shape + (params.n,))
    e = gaussian(rng, sigma, values.shape)
    b = _inner(a, sk.bits) + e + values
    return LweCiphertext(a, b, params, noise=1)


def encrypt(bits, sk: LweSecretKey, rng: np.random.Generator, sigma: float = None) -> LweCiphertext:
    """Secret-key encryption of bits with the Ecd(1) = 1/4 encoding."""
    bits = np.asarray(bits, dtype=np.uint32) & 1
    return encrypt_torus(bits << 30, sk, rng, sigma)


class PublicKeySet:
    """
    Ordered LWE encryptions of zero with a single-use cursor.

    Each pk_encrypt consumes fresh samples; the cursor only moves forward and
    is advanced under a lock so concurrent encryptors never share a sample.
    """

    def __init__(self, samples: LweCiphertext, used_count: int = 0):
        if samples.b.ndim != 1:
            samples = samples.reshape(-1)
        self.samples = samples
        self.params = samples.params
        self.used_count = used_count
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def remaining(self) -> int:
        return len(self) - self.used_count

    def take(self, count: int) -> LweCiphertext:
        """
        Consume the next ``count`` samples.

        Raises:
            ExhaustedPublicKey: If fewer than ``count`` samples remain. Nothing is consumed then.
        """
        with self._lock:
            if count > self.remaining:
                raise ExhaustedPublicKey(
                    f"Public key has {self.remaining} unused samples; {count} requested."
                )
            start = self.used_count
            self.used_count += count
        return self.samples[start:start + count]

    @property
    def serialized_size(self) -> int:
        return self.samples.serialized_size

    def to_bytes(self, header: bool = False) -> bytes:
        prefix = pack_header(self.params, TypeTag.PUBLIC_KEY) if header else b""
        return prefix + self.samples.to_bytes()

    @classmethod
    def from_bytes(cls, blob: bytes, params: LweParams = None) -> "PublicKeySet":
        if params is None:
            params, _, blob = unpack_header(blob, TypeTag.PUBLIC_KEY)
        return cls(LweCiphertext.from_bytes(blob, params))


def make_public_key(sk: LweSecretKey, count: int, params=None, rng: np.random.Generator = None,
                    sigma: float = None) -> PublicKeySet:
    """
    Build a public key set of ``count`` encryptions of zero, b_i = <a_i, s> + e_i.

    Raises:
        ValueError: If count is not positive.
    """
    if count < 1:
        raise ValueError("Public key sample count must be at least 1.")
    if params is not None and lookup_params(params).n != sk.params.n:
        raise DimensionMismatch("Secret key does not match the requested parameters.")
    if rng is None:
        rng = np.random.default_rng()
    return PublicKeySet(encrypt_torus(np.zeros(count, dtype=np.uint32), sk, rng, sigma))


def pk_encrypt(bits, pk: PublicKeySet) -> LweCiphertext:
    """
    Public-key encryption: one unused zero-sample plus (0, Ecd(m)) per bit.

    Args:
        bits: A single bit or an array of bits.
        pk (PublicKeySet): Key set; ``bits.size`` samples are consumed.

    Returns:
        LweCiphertext: Same shape as ``bits``.

    Raises:
        ExhaustedPublicKey: If the key set has too few unused samples.
    """
    bits = np.asarray(bits, dtype=np.uint32) & 1
    samples = pk.take(bits.size)
    samples = samples.reshape(bits.shape)
    return LweCiphertext(samples.a, samples.b + (bits << 30), pk.params, noise=1)


def phase(ct: LweCiphertext, sk: LweSecretKey) -> np.ndarray:
    """
    Decryption phase b - <a, s> on the torus.

    Raises:
        DimensionMismatch: If the ciphertext and key dimensions differ.
    """
    if ct.params.n != sk.params.n:
        raise DimensionMismatch(f"Ciphertext dimension {ct.params.n} does not match key dimension {sk.params.n}.")
    return ct.b - _inner(ct.a, sk.bits)


def decode_phase(values) -> np.ndarray:
    """
    Round phases to the nearer of 0 and 1/4.

    A phase decodes to 1 when (phase - 1/8) mod 1 <= 1/2, so both exact
    midpoints break toward 1.
    """
    shifted = np.asarray(values, dtype=np.uint32) - np.uint32(ONE_EIGHTH)
    return (shifted <= np.uint32(HALF)).astype(np.uint8)


def decrypt(ct: LweCiphertext, sk: LweSecretKey):
    """
    Decrypt to bits.

    Returns:
        int for a single ciphertext, otherwise a uint8 array of ``ct.shape``.

    Raises:
        DimensionMismatch: If the ciphertext and key dimensions differ.
    """
    bits = decode_phase(phase(ct, sk))
    return int(bits) if bits.ndim == 0 else bits


def trivial(bits, params) -> LweCiphertext:
    """Noiseless ciphertexts (0, Ecd(m)) of public bits."""
    bits = np.asarray(bits, dtype=np.uint32) & 1
    return trivial_torus(bits << 30, params)


def trivial_torus(values, params) -> LweCiphertext:
    params = lookup_params(params)
    values = np.asarray(values, dtype=np.uint32)
    return LweCiphertext(np.zeros(values.shape + (params.n,), dtype=np.uint32), values, params, noise=0)


def lwe_add(x: LweCiphertext, y: LweCiphertext) -> LweCiphertext:
    """
    Component-wise torus addition; phases add exactly.

    Raises:
        DimensionMismatch: If the dimensions differ.
    """
    params = _check_params(x, y)
    return LweCiphertext(x.a + y.a, x.b + y.b, params, x.noise + y.noise)


def lwe_sub(x: LweCiphertext, y: LweCiphertext) -> LweCiphertext:
    params = _check_params(x, y)
    return LweCiphertext(x.a - y.a, x.b - y.b, params, x.noise + y.noise)


def lwe_neg(x: LweCiphertext) -> LweCiphertext:
    return LweCiphertext(-x.a, -x.b, x.params, x.noise)


def lwe_scale(x: LweCiphertext, factor: int) -> LweCiphertext:
    """Multiply by a small integer; noise units grow by factor squared."""
    c = np.uint32(factor % 2 ** 32)
    return LweCiphertext(x.a * c, x.b * c, x.params, x.noise * factor * factor)


def lwe_add_constant(x: LweCiphertext, values) -> LweCiphertext:
    """Add public torus constants to the body."""
    return LweCiphertext(x.a, x.b + np.asarray(values, dtype=np.uint32), x.params, x.noise)


def _axis(axis: int, ndim: int) -> int:
    return axis + ndim if axis < 0 else axis


def stack(cts, axis: int = 0) -> LweCiphertext:
    params = _check_params(*cts)
    axis = _axis(axis, len(cts[0].shape) + 1)
    return LweCiphertext(
        np.stack([ct.a for ct in cts], axis=axis),
        np.stack([ct.b for ct in cts], axis=axis),
        params,
        max(ct.noise for ct in cts),
    )


def concatenate(cts, axis: int = 0) -> LweCiphertext:
    params = _check_params(*cts)
    axis = _axis(axis, len(cts[0].shape))
    return LweCiphertext(
        np.concatenate([ct.a for ct in cts], axis=axis),
        np.concatenate([ct.b for ct in cts], axis=axis),
        params,
        max(ct.noise for ct in cts),
    )

