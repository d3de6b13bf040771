"""
Parameter sets for the torus LWE layer and gate bootstrapping.

Three named sets are registered:

* ``TFHE128``: n = 630, the 128-bit set whose ciphertexts are 2524 bytes.
* ``TFHE80``: n = 500, sized so a ciphertext is 2004 bytes.
* ``DESK``: a tiny, insecure set (n = 64, N = 256) for fast tests and demos.

Each LWE set is linked to a default BootstrapParams. The serialized sizes of
every key and ciphertext are pure functions of these fields.
"""

import math
from dataclasses import dataclass
from enum import Enum

from utils.errors import InvalidParams

TORUS_BITS = 32

# Minimum gadget precision (bits) for the bootstrapping and key-switching keys.
MIN_BOOTSTRAP_PRECISION = 24
MIN_KEYSWITCH_PRECISION = 15

# Number of noise units a fresh ciphertext must tolerate before a refresh.
NOISE_BUDGET_FLOOR = 24

# Noise must stay under 1/(4 * KAPPA) of the torus to keep gate errors rare.
KAPPA = 5.0


class ParamsName(str, Enum):
    TFHE80 = "TFHE80"
    TFHE128 = "TFHE128"
    DESK = "DESK"


@dataclass(frozen=True)
class LweParams:
    """
    LWE parameters.

    Attributes:
        name (ParamsName): Registry name.
        n (int): LWE dimension.
        sigma (float): Gaussian noise standard deviation as a fraction of the torus.
        params_id (int): One-byte id written into blob headers.
    """
    name: ParamsName
    n: int
    sigma: float
    params_id: int

    @property
    def ciphertext_bytes(self) -> int:
        """Serialized size of one LWE ciphertext: (n + 1) 32-bit words."""
        return (self.n + 1) * 4

    @property
    def secret_key_bytes(self) -> int:
        """Secret keys are stored as packed bits."""
        return (self.n + 7) // 8


@dataclass(frozen=True)
class BootstrapParams:
    """
    Gate bootstrapping parameters.

    Attributes:
        lwe (LweParams): Linked LWE parameters (input and output of every gate).
        N (int): Ring dimension, a power of two.
        k (int): Number of ring mask polynomials.
        decomp_base_log (int): log2 of the gadget base of the bootstrapping key.
        decomp_levels (int): Gadget levels of the bootstrapping key.
        ks_base_log (int): log2 of the key-switching decomposition base.
        ks_levels (int): Key-switching decomposition levels.
        bk_sigma (float): Noise standard deviation of the bootstrapping key.
    """
    lwe: LweParams
    N: int
    k: int
    decomp_base_log: int
    decomp_levels: int
    ks_base_log: int
    ks_levels: int
    bk_sigma: float

    def __post_init__(self):
        if self.N < 4 or self.N & (self.N - 1):
            raise InvalidParams(f"Ring dimension N must be a power of two, got {self.N}.")
        if self.k < 1:
            raise InvalidParams("Ring mask count k must be at least 1.")
        bsk_bits = self.decomp_base_log * self.decomp_levels
        if not MIN_BOOTSTRAP_PRECISION <= bsk_bits < TORUS_BITS:
            raise InvalidParams(
                f"Bootstrapping key decomposition gives {bsk_bits} bits; "
                f"need {MIN_BOOTSTRAP_PRECISION}..{TORUS_BITS - 1}."
            )
        ks_bits = self.ks_base_log * self.ks_levels
        if not MIN_KEYSWITCH_PRECISION <= ks_bits < TORUS_BITS:
            raise InvalidParams(
                f"Key-switching decomposition gives {ks_bits} bits; "
                f"need {MIN_KEYSWITCH_PRECISION}..{TORUS_BITS - 1}."
            )

    @property
    def extracted_dim(self) -> int:
        return self.k * self.N

    @property
    def gadget_rows(self) -> int:
        return (self.k + 1) * self.decomp_levels

    @property
    def bootstrap_key_bytes(self) -> int:
        return self.lwe.n * self.gadget_rows * (self.k + 1) * self.N * 4

    @property
    def keyswitch_key_bytes(self) -> int:
        return self.extracted_dim * self.ks_levels * self.lwe.ciphertext_bytes

    @property
    def evaluation_key_bytes(self) -> int:
        return self.bootstrap_key_bytes + self.keyswitch_key_bytes


TFHE80 = LweParams(ParamsName.TFHE80, n=500, sigma=2.44e-5, params_id=1)
TFHE128 = LweParams(ParamsName.TFHE128, n=630, sigma=2.0 ** -15, params_id=2)
DESK = LweParams(ParamsName.DESK, n=64, sigma=2.0 ** -15, params_id=3)

DEFAULT_BOOTSTRAP = {
    ParamsName.TFHE80: BootstrapParams(
        TFHE80, N=1024, k=1, decomp_base_log=12, decomp_levels=2,
        ks_base_log=4, ks_levels=4, bk_sigma=3.72e-9,
    ),
    ParamsName.TFHE128: BootstrapParams(
        TFHE128, N=1024, k=1, decomp_base_log=8, decomp_levels=3,
        ks_base_log=3, ks_levels=5, bk_sigma=2.0 ** -25,
    ),
    ParamsName.DESK: BootstrapParams(
        DESK, N=256, k=1, decomp_base_log=8, decomp_levels=3,
        ks_base_log=3, ks_levels=5, bk_sigma=2.0 ** -25,
    ),
}

_BY_ID = {bp.lwe.params_id: bp.lwe for bp in DEFAULT_BOOTSTRAP.values()}


def lookup_params(name) -> LweParams:
    """
    Resolve a parameter set by name.

    Accepts ParamsName members or case-insensitive strings such as
    ``"tfhe128"`` or ``"TFHE-128"``.

    Raises:
        InvalidParams: If the name is not registered.
    """
    if isinstance(name, LweParams):
        return name
    key = str(name.value if isinstance(name, ParamsName) else name)
    key = key.strip().upper().replace("-", "").replace("_", "")
    try:
        return DEFAULT_BOOTSTRAP[ParamsName(key)].lwe
    except ValueError:
        raise InvalidParams(
            f"Unknown parameter set '{name}'. Choose one of: "
            + ", ".join(p.value.lower() for p in ParamsName)
        ) from None


def params_from_id(params_id: int) -> LweParams:
    try:
        return _BY_ID[params_id]
    except KeyError:
        raise InvalidParams(f"Unknown parameter id {params_id}.") from None


def default_bootstrap(params) -> BootstrapParams:
    """Default BootstrapParams linked to an LWE parameter set (or its name)."""
    return DEFAULT_BOOTSTRAP[lookup_params(params).name]


def estimate_output_variance(bp: BootstrapParams) -> float:
    """
    Variance of the phase error of one bootstrapped gate output.

    Sums the blind rotation contribution (gadget digits times key noise plus
    decomposition rounding) and the key switch contribution.
    """
    n, N, k = bp.lwe.n, bp.N, bp.k
    base = 2 ** bp.decomp_base_log
    digit_var = base ** 2 / 12.0
    rounding = 2.0 ** (-2 * bp.decomp_base_log * bp.decomp_levels) / 12.0
    blind_rotation = n * (
        bp.gadget_rows * N * digit_var * bp.bk_sigma ** 2
        + (1 + k * N / 2) * rounding
    )
    ks_base = 2 ** bp.ks_base_log
    ks_rounding = 2.0 ** (-2 * bp.ks_base_log * bp.ks_levels) / 12.0
    key_switch = bp.extracted_dim * (
        bp.ks_levels * (ks_base ** 2 / 12.0) * bp.lwe.sigma ** 2
        + ks_rounding / 2
    )
    return blind_rotation + key_switch


def noise_cap(params) -> int:
    """
    Largest number of noise units a ciphertext may carry at this parameter set.

    One unit is the variance of a bootstrapped gate output.
    """
    bp = default_bootstrap(params)
    bound = 1.0 / (4.0 * KAPPA)
    return int(math.floor(bound ** 2 / estimate_output_variance(bp)))
