"""
Launcher for the BTF harness CLI.

Run this script from the project root, for example:

    python run_btf_cli.py bench --params desk --lw 64 --seed 7
"""

import sys
from pathlib import Path

# Set project_root to the repo root directory
project_root = Path(__file__).resolve().parent

# Ensure the harness is importable
sys.path.insert(0, str(project_root))

from tools.btf_harness.cli_btf_harness import main

if __name__ == "__main__":
    sys.exit(main())
