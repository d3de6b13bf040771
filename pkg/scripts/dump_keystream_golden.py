#!/usr/bin/env python3
"""
Writes Trivium keystream dumps as hex, one JSON record per (key, IV) pair.

Keys and IVs are given as 20-digit hex strings in the byte order of the
eSTREAM vector files. Without arguments a fixed set of pairs is
dumped, which is handy when comparing against another implementation.

Usage:
    python scripts/dump_keystream_golden.py
    python scripts/dump_keystream_golden.py --key 0123456789abcdef0123 --iv 00000000000000000000 --bytes 64
"""
import argparse
import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from utils.trivium import TriviumKey, e_init, keystream_hex

DEFAULT_PAIRS = [
    ("00000000000000000000", "00000000000000000000"),
    ("80000000000000000000", "00000000000000000000"),
    ("00000000000000000000", "80000000000000000000"),
    ("0123456789abcdef0123", "fedcba9876543210fedc"),
    ("ffffffffffffffffffff", "ffffffffffffffffffff"),
]


def dump(key_hex: str, iv_hex: str, nbytes: int = 64) -> dict:
    state = e_init(TriviumKey.from_hex(key_hex, iv_hex))
    return {"key": key_hex, "iv": iv_hex, "keystream": keystream_hex(state, nbytes)}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="Dump Trivium keystreams as hex.")
    parser.add_argument("--key", help="80-bit key as 20 hex digits")
    parser.add_argument("--iv", help="80-bit IV as 20 hex digits")
    parser.add_argument("--bytes", type=int, default=64, help="Keystream bytes per pair (default: 64)")
    parser.add_argument("--out", help="Output JSON path (default: stdout)")
    args = parser.parse_args(argv)

    if bool(args.key) != bool(args.iv):
        parser.error("--key and --iv go together")
    pairs = [(args.key, args.iv)] if args.key else DEFAULT_PAIRS
    try:
        records = [dump(k, iv, args.bytes) for k, iv in pairs]
    except ValueError as e:
        print(f"Error: {e}", file=sys.stderr)
        return 1
    text = json.dumps(records, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
        print(f"Wrote {len(records)} keystreams to {args.out}")
    else:
        print(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
