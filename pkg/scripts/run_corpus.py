#!/usr/bin/env python3
"""Re-run the eight bundled two-level programs and check their verdicts.

Exits nonzero if any program moves away from its recorded verdict, so the
script doubles as a quick regression gate after engine changes.
"""

import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from wherecheck.cli import analyze, result_lines

EXPECTED = {
    "P0": "secure",
    "P1": "secure",
    "P2": "secure",
    "P3": "insecure",
    "P4": "insecure",
    "P5": "insecure",
    "P6": "secure",
    "P7": "secure",
}


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--corpus", type=Path, default=Path(__file__).resolve().parent.parent / "corpus" / "table3")
    ap.add_argument("--bits", type=int, default=3)
    ap.add_argument("--capacity", type=int, default=8)
    args = ap.parse_args()

    failures = []
    t0 = time.perf_counter()
    for name, want in sorted(EXPECTED.items()):
        started = time.perf_counter()
        report = analyze(args.corpus / name, args.corpus / f"{name}.policy",
                         bits=args.bits, capacity=args.capacity)
        took = time.perf_counter() - started
        mark = "ok" if report.overall == want else "MISMATCH"
        if mark != "ok":
            failures.append(name)
        per_level = " ".join(f"{r.level}={r.verdict}" for r in report.levels)
        print(f"{name}: {report.overall:8s} [{per_level}] {took:6.2f}s {mark}")
    print(f"total {time.perf_counter() - t0:.2f}s, {len(failures)} mismatches")
    for name in failures:
        report = analyze(args.corpus / name, args.corpus / f"{name}.policy",
                         bits=args.bits, capacity=args.capacity)
        for line in result_lines(report):
            print(f"  {name} {line}")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
