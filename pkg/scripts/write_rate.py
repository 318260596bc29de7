"""Fastest alternating-write rate the latch sustains.

Alternating 1/0 writes are issued at a shrinking period; a period passes when
every write settles within the rail band before the next pulse. Writes
``write_rate.csv``.

Usage: python scripts/write_rate.py [OUT_DIR]
"""

from __future__ import annotations

import csv
import sys
from pathlib import Path

from xpsram.bitcell import Bitcell, BitcellConfig, Op
from xpsram.errors import Diagnostic

PERIODS_PS = (200, 100, 75, 50, 40, 30, 25, 20, 15, 10, 5)
N_WRITES = 8


def run(out: Path) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / "write_rate.csv"
    cell = Bitcell(BitcellConfig())
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["period_ps", "rate_GHz", "worst_settle_ps", "sustained"])
        for period in PERIODS_PS:
            cell.reset(0)
            # pulses no longer than the period so consecutive writes never overlap
            width = min(cell.cfg.write_width_ps, period)
            ops = [Op("write", 20 + period * k, bit=(k + 1) % 2, width_ps=width) for k in range(N_WRITES)]
            try:
                res = cell.run_script(ops, 20 + period * N_WRITES + 500)
                settles = [r.settle_ps for r in res.ops]
                ok = all(s is not None and s <= period for s in settles)
                worst = max(s for s in settles if s is not None)
            except Diagnostic:
                ok, worst = False, float("nan")
            row = [period, f"{1e3 / period:.1f}", f"{worst:.1f}", ok]
            w.writerow(row)
            print(*row, sep="\t")
    return path


if __name__ == "__main__":
    run(Path(sys.argv[1]) if len(sys.argv) > 1 else Path("out"))
