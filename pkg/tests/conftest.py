import sys
from pathlib import Path
sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

import numpy as np
import pytest

from utils.gate_boot import make_evaluation_key
from utils.params import DESK, TFHE80, TFHE128
from utils.torus_lwe import keygen


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def desk_keys():
    """Secret key and evaluation key at the desk-test set."""
    rng = np.random.default_rng(1)
    sk = keygen(DESK, rng)
    return sk, make_evaluation_key(sk, rng=rng)


@pytest.fixture(scope="session")
def tfhe128_keys():
    rng = np.random.default_rng(2)
    sk = keygen(TFHE128, rng)
    return sk, make_evaluation_key(sk, rng=rng)


@pytest.fixture(scope="session")
def tfhe80_keys():
    rng = np.random.default_rng(3)
    sk = keygen(TFHE80, rng)
    return sk, make_evaluation_key(sk, rng=rng)
