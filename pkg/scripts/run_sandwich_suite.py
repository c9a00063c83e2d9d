#!/usr/bin/env python3
"""
Run the randomized ARMA sandwich suite: certified upper bounds must not
increase with h, and every synthesized rate must sit below them at power P.

Usage:
    uv run python scripts/run_sandwich_suite.py
    uv run python scripts/run_sandwich_suite.py --channels 5 --seed 3 --output runs/sandwich.json
"""

import argparse
import json
import sys
from pathlib import Path

from fbcap.sandwich import run_suite


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--channels", type=int, default=20, help="Number of random ARMA channels")
    parser.add_argument("--powers", type=float, nargs="+", default=[1.0, 10.0], help="Power budgets to test")
    parser.add_argument("--seed", type=int, default=0, help="Channel generator seed")
    parser.add_argument("--m", type=int, default=40, help="Grid half-resolution")
    parser.add_argument("--h-max", type=int, default=4, help="Largest h in each sweep")
    parser.add_argument("--output", type=Path, default=None, help="Optional JSON summary path")
    args = parser.parse_args()

    print(f"[fbcap] sandwich suite: {args.channels} channels x {len(args.powers)} powers, seed={args.seed}")
    results = run_suite(args.channels, tuple(args.powers), args.seed, args.m, args.h_max)
    failures = [r for r in results if not r.ok]
    for r in results:
        status = "ok" if r.ok else "FAIL"
        upper = f"{min(r.upper_bits):.9f}" if r.upper_bits else "n/a"
        rate = f"{max(r.rate_bits):.9f}" if r.rate_bits else "n/a"
        print(f"[fbcap] {status} num={list(r.model.num)} den={list(r.model.den)} P={r.P:g} upper={upper} rate={rate}")
        for v in r.violations:
            print(f"         {v}")

    if args.output:
        args.output.parent.mkdir(parents=True, exist_ok=True)
        args.output.write_text(json.dumps([r.to_dict() for r in results], indent=2), encoding="utf-8")
        print(f"[fbcap] wrote {args.output}")

    print(f"[fbcap] {len(results) - len(failures)}/{len(results)} cases passed")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
