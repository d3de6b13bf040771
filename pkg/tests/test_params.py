import pytest

from utils.errors import InvalidParams
from utils.params import (
    DESK,
    NOISE_BUDGET_FLOOR,
    TFHE80,
    TFHE128,
    BootstrapParams,
    ParamsName,
    default_bootstrap,
    lookup_params,
    noise_cap,
    params_from_id,
)


def test_ciphertext_sizes():
    assert TFHE128.ciphertext_bytes == 2524
    assert TFHE80.ciphertext_bytes == 2004
    assert DESK.ciphertext_bytes == 260


def test_evaluation_key_sizes():
    bp = default_bootstrap(TFHE128)
    assert bp.bootstrap_key_bytes == 30_965_760
    assert bp.keyswitch_key_bytes == 12_922_880
    assert bp.evaluation_key_bytes == 43_888_640
    assert default_bootstrap(TFHE80).evaluation_key_bytes == 16_384_000 + 8_208_384


def test_evaluation_key_close_to_published_figure():
    # 41.6 MB, 1024-based, within 20%
    published = 41.6 * 1024 * 1024
    assert abs(default_bootstrap(TFHE128).evaluation_key_bytes - published) / published < 0.2


@pytest.mark.parametrize("name", ["tfhe128", "TFHE128", "TFHE-128", "tfhe_128", ParamsName.TFHE128, TFHE128])
def test_lookup_aliases(name):
    assert lookup_params(name) is TFHE128


@pytest.mark.parametrize("name", ["tfhe256", "", "lwe"])
def test_lookup_unknown(name):
    with pytest.raises(InvalidParams):
        lookup_params(name)


def test_params_ids_round_trip():
    for params in (TFHE80, TFHE128, DESK):
        assert params_from_id(params.params_id) is params
    with pytest.raises(InvalidParams):
        params_from_id(99)


@pytest.mark.parametrize("params", [TFHE80, TFHE128, DESK])
def test_noise_cap_leaves_room_for_lazy_xor(params):
    assert noise_cap(params) >= NOISE_BUDGET_FLOOR


def test_bootstrap_params_reject_low_precision():
    with pytest.raises(InvalidParams):
        BootstrapParams(TFHE128, N=1024, k=1, decomp_base_log=4, decomp_levels=2,
                        ks_base_log=3, ks_levels=5, bk_sigma=2 ** -25)
    with pytest.raises(InvalidParams):
        BootstrapParams(TFHE128, N=1024, k=1, decomp_base_log=8, decomp_levels=3,
                        ks_base_log=2, ks_levels=2, bk_sigma=2 ** -25)


def test_bootstrap_params_reject_bad_ring():
    with pytest.raises(InvalidParams):
        BootstrapParams(TFHE128, N=1000, k=1, decomp_base_log=8, decomp_levels=3,
                        ks_base_log=3, ks_levels=5, bk_sigma=2 ** -25)
