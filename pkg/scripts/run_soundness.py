#!/usr/bin/env python3
"""Differential sweep: analyzer verdicts against the brute-force oracle.

Generates random programs inside the enumerable regime, analyzes each, and
cross-checks every verdict.  A soundness violation is an analyzer "secure"
that the oracle refutes; those are printed with their seed and program text
and make the script exit nonzero.  Insecure verdicts must also produce a
witness that replays, which is reported in the summary.
"""

import argparse
import sys
from collections import Counter
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from wherecheck.cli import INSECURE, SECURE, analyze
from wherecheck.oracle import check_where_security
from wherecheck.parser import parse_program
from wherecheck.policy import gather_downgrades, parse_policy
from wherecheck.randprog import GenConfig, generate


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--count", type=int, default=500)
    ap.add_argument("--seed0", type=int, default=0)
    ap.add_argument("--bits", type=int, default=2)
    ap.add_argument("--capacity", type=int, default=4)
    ap.add_argument("--io", action="store_true", help="generate channel I/O as well")
    args = ap.parse_args()

    cfg = GenConfig(io=True) if args.io else GenConfig()
    verdicts: Counter = Counter()
    violations = []
    broken_witnesses = []
    for seed in range(args.seed0, args.seed0 + args.count):
        gen = generate(seed, cfg)
        program = parse_program(gen.text)
        policy = gather_downgrades(program, parse_policy(gen.policy_text))
        report = analyze(program, policy, bits=args.bits, capacity=args.capacity,
                         want_witness=True)
        oracle = check_where_security(program, policy, bits=args.bits,
                                      capacity=args.capacity)
        verdicts[(report.overall, oracle.status)] += 1
        if report.overall == SECURE and oracle.status == INSECURE:
            violations.append(seed)
            print(f"SOUNDNESS VIOLATION seed={seed}")
            print(gen.text)
        for level in report.levels:
            if level.verdict == INSECURE and not (level.witness and level.witness.replay_ok):
                broken_witnesses.append((seed, level.level))

    total = sum(verdicts.values())
    print(f"checked {total} programs (seeds {args.seed0}..{args.seed0 + args.count - 1})")
    for (ours, oracle), n in sorted(verdicts.items()):
        print(f"  analyze={ours:12s} oracle={oracle:12s} {n:5d}")
    print(f"violations: {len(violations)}  witness replay failures: {len(broken_witnesses)}")
    return 1 if violations or broken_witnesses else 0


if __name__ == "__main__":
    sys.exit(main())
