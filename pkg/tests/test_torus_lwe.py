import numpy as np
import pytest

from utils.errors import DimensionMismatch, ExhaustedPublicKey, FramingError
from utils.params import DESK, TFHE80, TFHE128
from utils.torus_lwe import (
    ENCODED_ONE,
    ONE_EIGHTH,
    LweCiphertext,
    LweSecretKey,
    PublicKeySet,
    concatenate,
    decode_phase,
    decrypt,
    encrypt,
    keygen,
    lwe_add,
    lwe_scale,
    lwe_sub,
    make_public_key,
    phase,
    pk_encrypt,
    signed,
    stack,
    trivial,
)


@pytest.mark.parametrize("params", [TFHE80, TFHE128, DESK])
def test_public_key_round_trip(params, rng):
    sk = keygen(params, rng)
    pk = make_public_key(sk, 10_000, rng=rng)
    bits = rng.integers(0, 2, size=10_000)
    ct = pk_encrypt(bits, pk)
    assert ct.shape == (10_000,)
    assert np.array_equal(decrypt(ct, sk), bits)
    assert pk.remaining == 0


@pytest.mark.parametrize("params", [TFHE80, TFHE128])
def test_secret_key_round_trip(params, rng):
    sk = keygen(params, rng)
    bits = rng.integers(0, 2, size=(100, 8))
    assert np.array_equal(decrypt(encrypt(bits, sk, rng), sk), bits)


def test_scalar_decrypt_returns_int(rng):
    sk = keygen(DESK, rng)
    assert decrypt(encrypt(1, sk, rng), sk) == 1
    assert isinstance(decrypt(encrypt(0, sk, rng), sk), int)


def test_decode_midpoints_break_toward_one():
    phases = np.array([0, ENCODED_ONE, ONE_EIGHTH, 5 * ONE_EIGHTH, 5 * ONE_EIGHTH + 1, 2 ** 32 - 1], dtype=np.uint32)
    assert decode_phase(phases).tolist() == [0, 1, 1, 1, 0, 0]


def test_trivial_ciphertexts_are_noiseless():
    ct = trivial([0, 1, 1], DESK)
    assert ct.noise == 0
    assert ct.b.tolist() == [0, ENCODED_ONE, ENCODED_ONE]
    assert not ct.a.any()


def test_addition_adds_phases_and_noise(rng):
    sk = keygen(DESK, rng)
    x = encrypt([1, 0], sk, rng)
    y = encrypt([1, 1], sk, rng)
    total = lwe_add(x, y)
    assert total.noise == 2
    offset = signed(phase(total, sk) - np.array([2 * ENCODED_ONE, ENCODED_ONE], dtype=np.uint32))
    assert np.all(np.abs(offset) < 2 ** 22)
    diff = lwe_sub(total, y)
    assert np.array_equal(diff.a, x.a) and np.array_equal(diff.b, x.b)
    assert lwe_scale(x, 3).noise == 9


def test_noise_variance_of_sums_adds_up(rng):
    sk = keygen(TFHE128, rng)
    pk = make_public_key(sk, 20_000, rng=rng)
    mx = rng.integers(0, 2, size=10_000)
    my = rng.integers(0, 2, size=10_000)
    x = pk_encrypt(mx, pk)
    y = pk_encrypt(my, pk)

    def errors(ct, message):
        return signed(phase(ct, sk) - (np.asarray(message, dtype=np.uint32) << 30)).astype(np.float64)

    var_x = errors(x, mx).var()
    var_y = errors(y, my).var()
    var_sum = errors(lwe_add(x, y), mx + my).var()
    assert abs(var_sum - (var_x + var_y)) / (var_x + var_y) < 0.1
    expected = (TFHE128.sigma * 2.0 ** 32) ** 2
    assert abs(var_x - expected) / expected < 0.1


def test_dimension_mismatch(rng):
    small = encrypt([1], keygen(DESK, rng), rng)
    big = encrypt([1], keygen(TFHE80, rng), rng)
    with pytest.raises(DimensionMismatch):
        lwe_add(small, big)
    with pytest.raises(DimensionMismatch):
        decrypt(small, keygen(TFHE80, rng))


def test_public_key_exhaustion_consumes_nothing(rng):
    sk = keygen(DESK, rng)
    pk = make_public_key(sk, 8, rng=rng)
    pk_encrypt(np.ones(5), pk)
    with pytest.raises(ExhaustedPublicKey):
        pk_encrypt(np.ones(4), pk)
    assert pk.remaining == 3
    assert decrypt(pk_encrypt(np.ones(3), pk), sk).tolist() == [1, 1, 1]


def test_make_public_key_rejects_empty(rng):
    with pytest.raises(ValueError):
        make_public_key(keygen(DESK, rng), 0, rng=rng)


def test_serialized_sizes(rng):
    sk = keygen(TFHE128, rng)
    ct = encrypt(np.ones(80), sk, rng)
    assert len(ct.to_bytes()) == 80 * 2524 == 201_920
    assert len(ct.to_bytes(header=True)) == 201_920 + 8
    pk = make_public_key(sk, 2048, rng=rng)
    assert len(pk.to_bytes()) == 5_169_152
    assert len(sk.to_bytes()) == TFHE128.secret_key_bytes


def test_blob_parsing(rng):
    sk = keygen(DESK, rng)
    ct = encrypt(rng.integers(0, 2, size=(3, 4)), sk, rng)
    parsed = LweCiphertext.from_bytes(ct.to_bytes(header=True))
    assert parsed.params is DESK
    assert np.array_equal(decrypt(parsed.reshape(3, 4), sk), decrypt(ct, sk))
    assert np.array_equal(LweSecretKey.from_bytes(sk.to_bytes(header=True)).bits, sk.bits)
    pk = make_public_key(sk, 5, rng=rng)
    assert len(PublicKeySet.from_bytes(pk.to_bytes(header=True))) == 5
    with pytest.raises(FramingError):
        LweCiphertext.from_bytes(ct.to_bytes()[:-4], DESK)
    with pytest.raises(FramingError):
        LweCiphertext.from_bytes(b"XXXX" + ct.to_bytes(header=True)[4:])
    with pytest.raises(FramingError):
        LweSecretKey.from_bytes(ct.to_bytes(header=True))


def test_indexing_stack_and_concatenate(rng):
    sk = keygen(DESK, rng)
    bits = rng.integers(0, 2, size=(2, 5))
    ct = encrypt(bits, sk, rng)
    assert ct[1].shape == (5,)
    assert ct[1, 2].shape == ()
    assert decrypt(ct[..., 3], sk).tolist() == bits[:, 3].tolist()
    assert decrypt(concatenate([ct[0], ct[1]]), sk).tolist() == bits.reshape(-1).tolist()
    stacked = stack([ct[:, 0], ct[:, 1]], axis=-1)
    assert decrypt(stacked, sk).tolist() == bits[:, :2].tolist()
    assert len(ct) == 2


def test_ciphertexts_are_immutable(rng):
    ct = encrypt([1], keygen(DESK, rng), rng)
    with pytest.raises(ValueError):
        ct.b[0] = 0
