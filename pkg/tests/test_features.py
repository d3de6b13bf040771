import numpy as np
import pytest

from utils.errors import LengthMismatch
from utils.features import genuine_query, hamming_distance, impostor_query, plain_match, synthetic_template


def test_template_shape_and_values(rng):
    w = synthetic_template(rng)
    assert w.shape == (2048,)
    assert set(np.unique(w)) <= {0, 1}


@pytest.mark.parametrize("flips", [0, 1, 16, 64])
def test_genuine_query_flips_exactly(flips, rng):
    w = synthetic_template(rng, 64)
    assert hamming_distance(w, genuine_query(w, flips, rng)) == flips


def test_genuine_query_bounds(rng):
    w = synthetic_template(rng, 8)
    with pytest.raises(ValueError):
        genuine_query(w, 9, rng)
    with pytest.raises(ValueError):
        genuine_query(w, -1, rng)


def test_impostor_is_far_on_average(rng):
    w = synthetic_template(rng)
    assert 900 < hamming_distance(w, impostor_query(rng)) < 1150


def test_plain_match_threshold():
    w = np.zeros(8, dtype=np.uint8)
    w2 = np.array([1, 1, 0, 0, 0, 0, 0, 0])
    assert plain_match(w, w2, 2) == 1
    assert plain_match(w, w2, 1) == 0
    with pytest.raises(LengthMismatch):
        hamming_distance(w, w2[:4])
