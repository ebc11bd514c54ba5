"""Joint vs independent training and the credit-weight grid, averaged over seeds.

    python scripts/run_comparison.py --seeds 0 1 2 3 4 --processes 4
"""

import argparse
import json
import time

from collabmem.experiments import compare, headline_variants, summary_table, weight_variants
from collabmem.harness import RunConfig


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--config", help="RunConfig JSON; desk defaults if omitted")
    p.add_argument("--seeds", nargs="+", type=int, default=[0, 1, 2, 3, 4])
    p.add_argument("--processes", type=int, default=1)
    p.add_argument("--skip-weights", action="store_true", help="only joint and independent")
    p.add_argument("--json", help="write raw accuracies here")
    args = p.parse_args()

    base = RunConfig.from_json(args.config) if args.config else RunConfig()
    variants = headline_variants() + ([] if args.skip_weights else weight_variants())
    t0 = time.perf_counter()
    results = compare(base, variants, args.seeds, processes=args.processes)
    print(summary_table(results), end="")
    print(f"({len(variants) * len(args.seeds)} runs in {time.perf_counter() - t0:.0f} s)")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(results, fh, indent=1)


if __name__ == "__main__":
    main()
