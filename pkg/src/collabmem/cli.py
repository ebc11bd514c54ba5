"""Command-line entry point: ``collabmem {gen-data,train,eval,report,ablate}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from .env import EnvConfig, generate_episodes, load_episodes, save_episodes
from .errors import CollabMemError, ConfigError, StorageError, exit_code_for
from .external import ExternalPolicy, ExternalScorer, NdjsonProcess, evaluate_mixed
from .harness import FIXED_WEIGHT, MODES, RunConfig, load_policies, report, train, with_mode
from .policies import AGENTS
from .rewards import RewardConfig

log = logging.getLogger("collabmem")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # bad flags are configuration errors, not argparse's default exit 2
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _read_json(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise StorageError(path, exc.strerror or str(exc)) from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc.msg} (line {exc.lineno})") from exc


def _env_from_config(path) -> EnvConfig:
    """Accept either a bare EnvConfig document or a full RunConfig."""
    if path is None:
        return EnvConfig()
    data = _read_json(path)
    if isinstance(data, dict) and ("env" in data or "mode" in data):
        return RunConfig.from_dict(data).env
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    return EnvConfig.from_dict(data)


def _write_json(path, obj) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(obj, indent=1) + "\n", encoding="utf-8")
    except OSError as exc:
        raise StorageError(path, exc.strerror or str(exc)) from exc


def parse_mode(text: str) -> tuple[str, tuple[float, ...] | None]:
    """``mode`` or ``ablation_fixed_weight:w1,w2,w3``."""
    name, _, rest = text.partition(":")
    if name not in MODES:
        raise ConfigError(f"modes: unknown mode {name!r}; expected one of {list(MODES)}")
    if name == FIXED_WEIGHT:
        try:
            weights = tuple(float(x) for x in rest.split(","))
        except ValueError as exc:
            raise ConfigError(f"modes: bad weights in {text!r}") from exc
        return name, weights
    if rest:
        raise ConfigError(f"modes: {name} takes no weights")
    return name, None


def mode_label(name: str, weights) -> str:
    if weights is None:
        return name
    return f"{name}_" + "_".join(f"{w:g}" for w in weights)


# --- subcommands ------------------------------------------------------------


def cmd_gen_data(args) -> int:
    env = _env_from_config(args.config)
    eps = generate_episodes(args.seed, env, args.count, split=args.split)
    n = save_episodes(eps, args.out)
    log.info("wrote %d episodes to %s", n, args.out)
    return 0


def cmd_train(args) -> int:
    cfg = RunConfig.from_json(args.config)
    if args.seed is not None:
        cfg = replace(cfg, master_seed=args.seed)
    out = args.out or cfg.output_dir
    if out is None:
        raise ConfigError("output_dir: pass --out or set output_dir in the config")
    rep = train(cfg, workers=args.workers, out_dir=out)
    print(f"{cfg.mode}: final accuracy {rep.final_accuracy:.4f}, total steps {rep.total_steps}")
    return 0


def cmd_eval(args) -> int:
    policies, env = load_policies(args.policies)
    episodes = load_episodes(args.episodes)
    reward_cfg = RewardConfig(K=args.k) if args.k is not None else RewardConfig()
    procs = []
    try:
        external = {}
        for entry in args.external or []:
            agent, _, command = entry.partition("=")
            if agent not in AGENTS or not command:
                raise ConfigError(f"external: expected AGENT=COMMAND with AGENT in {list(AGENTS)}, got {entry!r}")
            proc = NdjsonProcess(command)
            procs.append(proc)
            external[agent] = ExternalPolicy(agent, proc)
        scorer = None
        if args.scorer:
            proc = NdjsonProcess(args.scorer)
            procs.append(proc)
            scorer = ExternalScorer(proc)
        metrics = evaluate_mixed(policies, episodes, reward_cfg.K, reward_cfg, external, scorer)
    finally:
        for p in procs:
            p.close()
    if args.out:
        _write_json(args.out, metrics)
    print(json.dumps(metrics))
    return 0


def cmd_report(args) -> int:
    text, _ = report(args.runs, out=args.out)
    print(text, end="")
    return 0


def cmd_ablate(args) -> int:
    base = RunConfig.from_json(args.config)
    out_root = Path(args.out or base.output_dir or "ablation")
    seeds = args.seeds if args.seeds else [base.master_seed]
    modes = [parse_mode(m) for m in args.modes]
    run_dirs = []
    for name, weights in modes:
        for seed in seeds:
            cfg = replace(with_mode(base, name, weights), master_seed=seed)
            run_dir = out_root / f"{mode_label(name, weights)}_seed{seed}"
            rep = train(cfg, workers=args.workers, out_dir=run_dir)
            log.info("%s seed %d: accuracy %.4f", mode_label(name, weights), seed, rep.final_accuracy)
            run_dirs.append(run_dir)
    text, _ = report(run_dirs, out=out_root)
    print(text, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="collabmem", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-data", help="generate synthetic episodes as JSONL")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--config", help="EnvConfig or RunConfig JSON (defaults if omitted)")
    g.add_argument("--out", required=True)
    g.add_argument("--count", type=int, default=100)
    g.add_argument("--split", type=int, default=0, help="seed stream; training uses 0, held-out eval 1")
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train one configuration")
    t.add_argument("--config", required=True)
    t.add_argument("--out")
    t.add_argument("--seed", type=int, help="override master_seed")
    t.add_argument("--workers", type=int, default=1)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="greedy evaluation of saved policies")
    e.add_argument("--policies", required=True, help="policies.json written by train")
    e.add_argument("--episodes", required=True, help="episode JSONL")
    e.add_argument("--out")
    e.add_argument("--k", type=int)
    e.add_argument("--external", action="append", metavar="AGENT=COMMAND",
                   help="serve AGENT from a child process speaking NDJSON")
    e.add_argument("--scorer", metavar="COMMAND", help="external profile scorer")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("report", help="compare finished runs")
    r.add_argument("--runs", nargs="+", required=True)
    r.add_argument("--out")
    r.set_defaults(func=cmd_report)

    a = sub.add_parser("ablate", help="run several modes under shared seeds")
    a.add_argument("--config", required=True)
    a.add_argument("--modes", nargs="+", required=True, metavar="MODE",
                   help=f"one of {', '.join(MODES)}; fixed weights as {FIXED_WEIGHT}:w1,w2,w3")
    a.add_argument("--seeds", nargs="+", type=int)
    a.add_argument("--out")
    a.add_argument("--workers", type=int, default=1)
    a.set_defaults(func=cmd_ablate)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (CollabMemError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
