"""
Synthetic biometric feature vectors.

Real iris codes are out of scope; uniform random bit vectors of the same
length stand in for them. A genuine query is the template with a chosen
number of bits flipped, an impostor query is an independent vector.
"""

import numpy as np

from utils.errors import LengthMismatch


def synthetic_template(rng: np.random.Generator, l_w: int = 2048) -> np.ndarray:
    return rng.integers(0, 2, size=l_w, dtype=np.uint8)


def genuine_query(template, flips: int, rng: np.random.Generator) -> np.ndarray:
    """
    Copy of ``template`` with exactly ``flips`` distinct bits inverted.

    Raises:
        ValueError: If flips is negative or exceeds the template length.
    """
    template = np.asarray(template, dtype=np.uint8)
    if not 0 <= flips <= template.size:
        raise ValueError(f"Cannot flip {flips} bits of a {template.size}-bit template.")
    query = template.copy()
    positions = rng.choice(template.size, size=flips, replace=False)
    query[positions] ^= 1
    return query


def impostor_query(rng: np.random.Generator, l_w: int = 2048) -> np.ndarray:
    return synthetic_template(rng, l_w)


def hamming_distance(w, w2) -> int:
    """Plaintext Hamming distance (the matching oracle)."""
    w = np.asarray(w, dtype=np.uint8)
    w2 = np.asarray(w2, dtype=np.uint8)
    if w.shape != w2.shape:
        raise LengthMismatch(f"Cannot compare {w.size}-bit and {w2.size}-bit vectors.")
    return int(np.count_nonzero(w ^ w2))


def plain_match(w, w2, t: int) -> int:
    return int(hamming_distance(w, w2) <= t)
