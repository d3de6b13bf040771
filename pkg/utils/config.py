"""
Runtime settings loaded from the environment (and a .env file when present).

Command-line flags override these values; see tools/btf_harness.
"""

import os
from dataclasses import dataclass

from dotenv import load_dotenv

from utils.params import lookup_params
from utils.validation import validate_feature_length, validate_threshold

TRANSPORTS = ("inproc", "socket")
PK_POLICIES = ("reissue-on-exhaustion", "reissue-per-verification", "strict")
BOOTSTRAP_MODES = ("lazy", "pure")


@dataclass(frozen=True)
class BtfSettings:
    params: str = "tfhe128"
    l_w: int = 64
    threshold: int = None
    seed: int = None
    transport: str = "inproc"
    pk_policy: str = "reissue-on-exhaustion"
    bootstrap_mode: str = "lazy"
    database_url: str = "sqlite://"
    report_dir: str = "output"
    log_level: str = "INFO"


def _choice(value: str, allowed, name: str) -> str:
    value = value.strip().lower()
    if value not in allowed:
        raise ValueError(f"{name} must be one of {', '.join(allowed)}; got '{value}'.")
    return value


def load_settings(environ=None) -> BtfSettings:
    """
    Build settings from BTF_* environment variables.

    Raises:
        ValueError: If a variable holds an invalid value.
    """
    if environ is None:
        load_dotenv()
        environ = os.environ
    params = environ.get("BTF_PARAMS", BtfSettings.params)
    lookup_params(params)
    l_w = validate_feature_length(environ.get("BTF_LW", BtfSettings.l_w))
    seed = environ.get("BTF_SEED")
    return BtfSettings(
        params=params.strip().lower(),
        l_w=l_w,
        threshold=validate_threshold(environ.get("BTF_THRESHOLD"), l_w),
        seed=int(seed) if seed not in (None, "") else None,
        transport=_choice(environ.get("BTF_TRANSPORT", BtfSettings.transport), TRANSPORTS, "BTF_TRANSPORT"),
        pk_policy=_choice(environ.get("BTF_PK_POLICY", BtfSettings.pk_policy), PK_POLICIES, "BTF_PK_POLICY"),
        bootstrap_mode=_choice(
            environ.get("BTF_BOOTSTRAP_MODE", BtfSettings.bootstrap_mode), BOOTSTRAP_MODES, "BTF_BOOTSTRAP_MODE"
        ),
        database_url=environ.get("BTF_DATABASE_URL", BtfSettings.database_url),
        report_dir=environ.get("BTF_REPORT_DIR", BtfSettings.report_dir),
        log_level=environ.get("BTF_LOG_LEVEL", BtfSettings.log_level).upper(),
    )
