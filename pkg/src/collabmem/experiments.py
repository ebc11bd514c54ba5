"""Multi-seed mode comparisons shared by the scripts and the acceptance suite."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .harness import EQUAL_LG, FIXED_WEIGHT, INDEPENDENT, JOINT, RunConfig, train, with_mode

RETRIEVAL_WEIGHT_GRID = (0.1, 0.3, 0.5, 0.7, 0.9)


@dataclass(frozen=True)
class Variant:
    label: str
    mode: str
    fixed_weights: tuple[float, float, float] | None = None


def fixed_weight_variant(retrieval_weight: float) -> Variant:
    """Retrieval gets ``retrieval_weight``; the other two agents split the rest evenly."""
    rest = (1.0 - retrieval_weight) / 2.0
    return Variant(f"fixed_r{retrieval_weight:g}", FIXED_WEIGHT, (rest, rest, retrieval_weight))


def headline_variants() -> list[Variant]:
    return [Variant(JOINT, JOINT), Variant(INDEPENDENT, INDEPENDENT)]


def weight_variants() -> list[Variant]:
    return [Variant(EQUAL_LG, EQUAL_LG)] + [fixed_weight_variant(w) for w in RETRIEVAL_WEIGHT_GRID]


def _final_accuracy(cfg: RunConfig) -> float:
    return train(cfg).final_accuracy


def compare(base: RunConfig, variants: Sequence[Variant], seeds: Sequence[int],
            processes: int = 1) -> dict[str, list[float]]:
    """Final held-out accuracy per variant and seed, in seed order."""
    cfgs = [
        (v.label, replace(with_mode(base, v.mode, v.fixed_weights), master_seed=s, output_dir=None))
        for v in variants for s in seeds
    ]
    if processes > 1:
        with ProcessPoolExecutor(max_workers=processes) as pool:
            accs = list(pool.map(_final_accuracy, [c for _, c in cfgs]))
    else:
        accs = [_final_accuracy(c) for _, c in cfgs]
    out: dict[str, list[float]] = {v.label: [] for v in variants}
    for (label, _), acc in zip(cfgs, accs):
        out[label].append(acc)
    return out


def summary_table(results: dict[str, list[float]]) -> str:
    width = max(len(k) for k in results)
    lines = [f"{'variant'.ljust(width)}  mean    per-seed"]
    for label, accs in results.items():
        per = " ".join(f"{a:.3f}" for a in accs)
        lines.append(f"{label.ljust(width)}  {np.mean(accs):.4f}  {per}")
    return "\n".join(lines) + "\n"
