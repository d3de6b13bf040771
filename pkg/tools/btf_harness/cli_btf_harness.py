"""
CLI harness for BTF protocol runs.

Every command replays the protocol from the seed: the same seed gives the
same keys, features and ledger, so ``verify`` finds the identity that
``register`` stored under that seed.

Exit status: 0 on success (and for ``verify`` when r = 1), 1 on a protocol
or validation error (every BtfError is a ValueError), 2 on a usage error,
3 when ``verify`` rejects.
"""

import argparse
import logging
from dataclasses import replace
from pathlib import Path

import numpy as np

from services.btf_protocol.ledger import TransmissionLedger
from services.btf_protocol.messages import Model
from services.btf_protocol.session import SessionConfig, open_session
from tools.btf_harness import reports
from utils.config import BOOTSTRAP_MODES, PK_POLICIES, TRANSPORTS, load_settings
from utils.features import genuine_query, hamming_distance, synthetic_template
from utils.gate_boot import make_evaluation_key
from utils.logging_setup import setup_logging
from utils.params import ParamsName, default_bootstrap, lookup_params
from utils.torus_lwe import keygen, make_public_key

logger = logging.getLogger(__name__)

FULL_FEATURE_BITS = 2048
REJECTED = 3
COMMANDS = ("keygen", "setup", "register", "verify", "bench", "report", "scaling")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="BTF biometric transciphering harness.")
    parser.add_argument("command", choices=COMMANDS, help="Protocol stage or report to run")
    parser.add_argument("--params", choices=[p.value.lower() for p in ParamsName], default=None,
                        help="Parameter set (default: BTF_PARAMS or tfhe128)")
    parser.add_argument("--model", choices=[m.value for m in Model], default=Model.BTF.value,
                        help="Architecture to run (default: btf)")
    parser.add_argument("--lw", type=int, default=None, help="Feature length in bits (default: BTF_LW or 64; 2048 for report)")
    parser.add_argument("--full", action="store_true", help=f"Use the full {FULL_FEATURE_BITS}-bit feature length")
    parser.add_argument("--threshold", type=int, default=None, help="Hamming threshold (default: 25%% of l_w)")
    parser.add_argument("--seed", type=int, default=None, help="Master seed for a reproducible run")
    parser.add_argument("--transport", choices=TRANSPORTS, default=None, help="Message transport")
    parser.add_argument("--pk-policy", choices=PK_POLICIES, default=None, help="When pk_c is reissued")
    parser.add_argument("--bootstrap-mode", choices=BOOTSTRAP_MODES, default=None,
                        help="XOR policy of the homomorphic cipher")
    parser.add_argument("--flips", type=int, default=0, help="Bits flipped in the verification query")
    parser.add_argument("--clients", type=int, default=1, help="Client count for scaling projections")
    parser.add_argument("--ledger", nargs="*", default=[], help="Ledger JSON files to report on")
    parser.add_argument("--out", type=str, default=None, help="Output file (or directory for keygen)")
    return parser


def _config(args, settings) -> SessionConfig:
    l_w = FULL_FEATURE_BITS if args.full else args.lw
    return SessionConfig.from_settings(
        settings,
        params=args.params,
        l_w=l_w,
        threshold=args.threshold,
        seed=args.seed,
        transport=args.transport,
        pk_policy=args.pk_policy,
        bootstrap_mode=args.bootstrap_mode,
    )


def _features(config: SessionConfig, flips: int):
    """Template and query replayed from the seed."""
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(1 << 16,)))
    w = synthetic_template(rng, config.l_w)
    return w, genuine_query(w, flips, rng)


def _out_path(args, settings, default_name: str) -> Path:
    return Path(args.out) if args.out else Path(settings.report_dir) / default_name


def _run_keygen(args, settings, config) -> int:
    params = lookup_params(config.params)
    rng = np.random.default_rng(config.seed)
    sk = keygen(params, rng)
    evk = make_evaluation_key(sk, default_bootstrap(params), rng)
    pk_c = make_public_key(sk, config.l_w, rng=rng)
    out_dir = Path(args.out) if args.out else Path(settings.report_dir) / "keys"
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, blob in (("sk.bin", sk.to_bytes(header=True)),
                       ("evk.bin", evk.to_bytes(header=True)),
                       ("pk_c.bin", pk_c.to_bytes(header=True))):
        (out_dir / name).write_bytes(blob)
        print(f"{name:<10}{len(blob):>14,} B  {reports.format_bytes(len(blob))}")
    print(f"Keys written to {out_dir}")
    return 0


def _run_protocol(args, settings, config) -> int:
    w, w_prime = _features(config, args.flips)
    with open_session(args.model, config) as session:
        session.setup()
        r = None
        if args.command in ("register", "verify", "bench"):
            session.register(w)
        if args.command in ("verify", "bench"):
            r = session.verify(w_prime)
        ledger = session.ledger

    for channel, nbytes in ledger.by_channel().items():
        print(f"{channel.label:<8}{nbytes:>14,} B  {reports.format_bytes(nbytes)}")
    summary = {"totals": {c.label: n for c, n in ledger.by_channel().items()}}
    if r is not None:
        distance = hamming_distance(w, w_prime)
        print(f"Hamming distance {distance}, threshold {config.threshold}: r = {r}")
        summary["result"] = r
    if args.command == "bench":
        reports.print_timings(ledger)
        summary["ordinal_checks"] = reports.ordinal_checks(ledger)
        print(f"Ordinal timing checks: {summary['ordinal_checks']}")

    name = f"{args.command}_{args.model}_{ledger.params}_{config.l_w}.json"
    path = ledger.save_json(_out_path(args, settings, name), summary, include_timings=args.command == "bench")
    print(f"Ledger written to {path}")
    if args.command == "verify" and r == 0:
        return REJECTED
    return 0


def _setup_ledgers(config) -> list:
    ledgers = []
    for model in Model:
        with open_session(model, config) as session:
            session.kdp()
            ledgers.append(session.ledger)
    return ledgers


def _run_report(args, settings, config) -> int:
    if args.ledger:
        ledgers = [TransmissionLedger.load_json(p) for p in args.ledger]
    else:
        if args.lw is None:
            config = replace(config, l_w=FULL_FEATURE_BITS, threshold=None)
        ledgers = _setup_ledgers(config)
    report = reports.report_setup(ledgers)
    reports.print_setup_table(report)
    expansion = reports.report_template_expansion(report["params"], FULL_FEATURE_BITS)
    reports.print_expansion(expansion)
    data = {
        "setup": report,
        "template_expansion": expansion,
        "ledgers": [ledger.to_dict() for ledger in ledgers],
    }
    path = reports.write_json(_out_path(args, settings, f"report_{report['params']}.json"), data)
    print(f"Report written to {path}")
    return 0


def _run_scaling(args, settings, config) -> int:
    ledgers = [TransmissionLedger.load_json(p) for p in args.ledger]
    params = ledgers[0].params if ledgers else config.params
    l_w = ledgers[0].l_w if ledgers else config.l_w
    report = reports.report_scaling(args.clients, params, l_w, ledgers)
    reports.print_scaling_table(report)
    name = f"scaling_{report.params}_{args.clients}.json"
    path = reports.write_json(_out_path(args, settings, name), report.to_dict())
    print(f"Scaling report written to {path}")
    return 0


HANDLERS = {
    "keygen": _run_keygen,
    "setup": _run_protocol,
    "register": _run_protocol,
    "verify": _run_protocol,
    "bench": _run_protocol,
    "report": _run_report,
    "scaling": _run_scaling,
}


def main(argv=None) -> int:
    """
    Run one harness command.

    Args:
        argv (list[str], optional): Arguments without the program name.

    Returns:
        int: Exit status.
    """
    args = build_parser().parse_args(argv)
    try:
        settings = load_settings()
        setup_logging(settings.log_level)
        config = _config(args, settings)
        return HANDLERS[args.command](args, settings, config)
    except ValueError as e:
        print(f"Error: {e}")
        return 1
