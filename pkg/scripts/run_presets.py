"""Run every built-in scenario through the CLI and collect outputs under one directory.

Usage: python scripts/run_presets.py [OUT_DIR]
"""

from __future__ import annotations

import sys
from pathlib import Path

from xpsram.cli import main

RUNS = (
    ("bitcell", "fig3"),
    ("bitcell", "fig4"),
    ("sweep-dl", "fig5"),
    ("array", "fig6"),
    ("array", "identity"),
    ("array", "random"),
    ("energy", "table1"),
)


def run(out: Path) -> int:
    worst = 0
    for command, name in RUNS:
        code = main([command, "--preset", name, "--out", str(out / name)])
        print(f"{name:10s} {command:9s} exit {code}")
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    sys.exit(run(Path(sys.argv[1]) if len(sys.argv) > 1 else Path("out/presets")))
