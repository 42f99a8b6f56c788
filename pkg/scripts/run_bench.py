#!/usr/bin/env python3
"""Compare storematch and tr composition on the I/O benchmark corpus.

Prints one row per program (bit counts and saturation steps under both
compositions) plus the aggregate step ratio.  Verdict disagreement between
the two modes aborts with an error, since they decide the same property.
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from wherecheck.cli import ModeDisagreement, bench


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--corpus", type=Path, default=Path(__file__).resolve().parent.parent / "corpus" / "iobench")
    ap.add_argument("--bits", type=int, default=3)
    ap.add_argument("--capacity", type=int, default=8)
    args = ap.parse_args()

    try:
        table = bench(args.corpus, bits=args.bits, capacity=args.capacity)
    except ModeDisagreement as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    header = f"{'program':10s} {'verdict':9s} {'sm bits':>7s} {'tr bits':>7s} {'sm steps':>8s} {'tr steps':>8s}"
    print(header)
    for row in table.rows:
        print(
            f"{row.name:10s} {row.verdict:9s} {row.store_bits:7d} {row.tr_bits:7d} "
            f"{row.store_steps:8d} {row.tr_steps:8d}"
        )
    sm = sum(r.store_steps for r in table.rows)
    tr = sum(r.tr_steps for r in table.rows)
    print(f"aggregate steps: storematch={sm} tr={tr} ratio={table.step_ratio:.4f}")
    print(f"wall time: storematch={sum(r.store_seconds for r in table.rows):.2f}s "
          f"tr={sum(r.tr_seconds for r in table.rows):.2f}s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
