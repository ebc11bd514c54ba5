"""Per-agent convergence steps for joint vs independent training.

Trains both modes for one seed, writes run directories under --out and prints
the comparison table (independent totals are sums, joint totals are maxima).
"""

import argparse
from dataclasses import replace
from pathlib import Path

from collabmem.harness import INDEPENDENT, JOINT, RunConfig, report, train, with_mode


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--config")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="runs/convergence")
    args = p.parse_args()

    base = RunConfig.from_json(args.config) if args.config else RunConfig()
    out = Path(args.out)
    dirs = []
    for mode in (JOINT, INDEPENDENT):
        run_dir = out / f"{mode}_seed{args.seed}"
        train(replace(with_mode(base, mode), master_seed=args.seed), out_dir=run_dir)
        dirs.append(run_dir)
    text, _ = report(dirs, out=out)
    print(text, end="")


if __name__ == "__main__":
    main()
