"""Training, evaluation and reporting for the collaborative memory agents."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .credit import final_rewards, group_credit
from .env import EnvConfig, Episode, generate_episodes
from .errors import ConfigError, DataError, StorageError
from .external import evaluate_mixed
from .optim import GrpoConfig, Sample, UpdateStats, group_advantages, reference_logprobs, surrogate, update_agent
from .policies import (
    AGENTS,
    PolicyParams,
    SharedPolicy,
    init_policies,
)
from .rewards import RewardConfig
from .trajectory import TrajectoryGroup, dump_trajectories, sample_group

log = logging.getLogger(__name__)

JOINT = "joint"
INDEPENDENT = "independent"
SINGLE_POLICY = "single_policy"
LOCAL_ONLY = "ablation_local_only"
GLOBAL_ONLY = "ablation_global_only"
EQUAL_LG = "ablation_equal_lg"
FIXED_WEIGHT = "ablation_fixed_weight"
MODES = (JOINT, INDEPENDENT, SINGLE_POLICY, LOCAL_ONLY, GLOBAL_ONLY, EQUAL_LG, FIXED_WEIGHT)

METRICS_HEADER = ["step", "agent", "r_local_mean", "r_global_mean", "weight", "adv_std", "kl_mean", "loss"]
EVAL_HEADER = ["step", "accuracy", "r_cons_f", "r_cons_c", "r_ret"]
EVAL_KEYS = ("accuracy", "r_cons_f", "r_cons_c", "r_ret", "n_episodes")

_SPLIT_TRAIN, _SPLIT_EVAL = 0, 1
_STREAM_SHUFFLE, _STREAM_GROUP, _STREAM_INIT = 11, 12, 13


def _desk_grpo() -> GrpoConfig:
    return GrpoConfig(batch_size=32)


@dataclass(frozen=True)
class RunConfig:
    mode: str = JOINT
    fixed_weights: tuple[float, float, float] | None = None
    env: EnvConfig = field(default_factory=EnvConfig)
    rewards: RewardConfig = field(default_factory=RewardConfig)
    grpo: GrpoConfig = field(default_factory=_desk_grpo)
    master_seed: int = 0
    n_train_episodes: int = 512
    n_eval_episodes: int = 128
    eval_every: int = 10
    convergence_window: int = 20
    convergence_tol: float = 0.05
    output_dir: str | None = None
    independent_order: tuple[str, ...] = AGENTS
    independent_global_share: float = 1.0
    independent_budget: str = "shared"
    transposed_integration: bool = False
    dump_trajectories: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode: unknown mode {self.mode!r}; expected one of {list(MODES)}")
        if self.mode == FIXED_WEIGHT:
            w = self.fixed_weights
            if w is None or len(w) != 3:
                raise ConfigError("fixed_weights: ablation_fixed_weight needs exactly 3 weights")
            if any(x < 0 for x in w) or abs(sum(w) - 1.0) > 1e-9:
                raise ConfigError(f"fixed_weights: must be non-negative and sum to 1, got {list(w)}")
            object.__setattr__(self, "fixed_weights", tuple(float(x) for x in w))
        elif self.fixed_weights is not None:
            raise ConfigError(f"fixed_weights: only valid with mode {FIXED_WEIGHT!r}")
        for name in ("n_train_episodes", "n_eval_episodes", "eval_every", "convergence_window"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or v < 1:
                raise ConfigError(f"{name}: must be a positive integer, got {v!r}")
        if not self.convergence_tol > 0:
            raise ConfigError(f"convergence_tol: must be > 0, got {self.convergence_tol}")
        if isinstance(self.master_seed, bool) or not isinstance(self.master_seed, int) or self.master_seed < 0:
            raise ConfigError(f"master_seed: must be a non-negative integer, got {self.master_seed!r}")
        if sorted(self.independent_order) != sorted(AGENTS):
            raise ConfigError(f"independent_order: must be a permutation of {list(AGENTS)}")
        object.__setattr__(self, "independent_order", tuple(self.independent_order))
        if not 0.0 <= self.independent_global_share <= 1.0:
            raise ConfigError("independent_global_share: must be in [0, 1]")
        if self.independent_budget not in ("shared", "per_agent"):
            raise ConfigError("independent_budget: must be 'shared' or 'per_agent'")

    @classmethod
    def from_dict(cls, data: Mapping) -> "RunConfig":
        if not isinstance(data, Mapping):
            raise ConfigError("config: expected a JSON object")
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"config: unknown keys {sorted(unknown)}")
        data = dict(data)
        try:
            if "env" in data:
                data["env"] = EnvConfig.from_dict(data["env"])
            if "rewards" in data:
                data["rewards"] = RewardConfig.from_dict(data["rewards"])
            if "grpo" in data:
                data["grpo"] = GrpoConfig.from_dict(data["grpo"])
            for key in ("fixed_weights", "independent_order"):
                if data.get(key) is not None:
                    data[key] = tuple(data[key])
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(f"config: {exc}") from exc

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise StorageError(path, exc.strerror or str(exc)) from exc
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc.msg} (line {exc.lineno})") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "fixed_weights": list(self.fixed_weights) if self.fixed_weights is not None else None,
            "env": self.env.to_dict(),
            "rewards": self.rewards.to_dict(),
            "grpo": self.grpo.to_dict(),
            "master_seed": self.master_seed,
            "n_train_episodes": self.n_train_episodes,
            "n_eval_episodes": self.n_eval_episodes,
            "eval_every": self.eval_every,
            "convergence_window": self.convergence_window,
            "convergence_tol": self.convergence_tol,
            "output_dir": self.output_dir,
            "independent_order": list(self.independent_order),
            "independent_global_share": self.independent_global_share,
            "independent_budget": self.independent_budget,
            "transposed_integration": self.transposed_integration,
            "dump_trajectories": self.dump_trajectories,
        }

    def steps_per_epoch(self) -> int:
        return math.ceil(self.n_train_episodes / self.grpo.batch_size)

    def total_steps(self) -> int:
        return self.grpo.epochs * self.steps_per_epoch()


@dataclass
class RunReport:
    config: dict
    train_metrics: list[dict]
    eval_series: list[dict]
    convergence_steps: dict[str, int]
    total_steps: int
    steps_trained: dict[str, int]
    final_accuracy: float
    mean_weights: dict[str, float]
    final_policies: dict[str, list[float]]

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "train_metrics": self.train_metrics,
            "eval_series": self.eval_series,
            "convergence_steps": self.convergence_steps,
            "total_steps": self.total_steps,
            "steps_trained": self.steps_trained,
            "final_accuracy": self.final_accuracy,
            "mean_weights": self.mean_weights,
            "final_policies": self.final_policies,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RunReport":
        return cls(**{f.name: data[f.name] for f in fields(cls)})


# --- evaluation -------------------------------------------------------------


def evaluate(policies: Mapping[str, PolicyParams], episodes: Sequence[Episode], K: int,
             reward_cfg: RewardConfig, profile_scorer=None) -> dict:
    """Greedy-action metrics averaged over ``episodes``."""
    return evaluate_mixed(policies, episodes, K, reward_cfg, profile_scorer=profile_scorer)


# --- convergence bookkeeping ------------------------------------------------


def convergence_step(series, W: int, delta: float) -> int:
    """First step after which every W-window moving average stays near the plateau.

    The plateau is the mean of the final W entries; "near" means within
    ``delta * |plateau|`` (or ``delta`` when the plateau is 0). The window at
    position s covers ``series[s:s+W]``. The stable stretch must span at least
    W window positions (the last window equals the plateau by construction, so
    a shorter stretch proves nothing); otherwise ``len(series)`` is returned.
    """
    if W <= 0:
        raise ConfigError(f"W: window must be positive, got {W}")
    if delta <= 0:
        raise ConfigError(f"delta: tolerance must be positive, got {delta}")
    x = np.asarray(series, dtype=float)
    if x.size < W:
        raise ConfigError(f"series of length {x.size} is shorter than window {W}")
    plateau = x[-W:].mean()
    tol = delta * abs(plateau) if plateau != 0 else delta
    windows = np.convolve(x, np.ones(W) / W, mode="valid")
    ok = np.abs(windows - plateau) <= tol + 1e-12
    bad = np.flatnonzero(~ok)
    if bad.size == 0:
        return 0
    first = int(bad[-1]) + 1
    return first if windows.size - first >= W else int(x.size)


def total_steps_for(mode: str, per_agent: Mapping[str, int]) -> int:
    """Sequential training adds up its phases; joint training ends with the slowest agent."""
    values = [int(per_agent[a]) for a in AGENTS]
    return sum(values) if mode == INDEPENDENT else max(values)


# --- training ---------------------------------------------------------------


def _group_seed(master_seed: int, phase: int, step: int, episode_id: int) -> tuple[int, ...]:
    return (int(master_seed), _STREAM_GROUP, int(phase), int(step), int(episode_id))


def _sample_batch(args):
    policies, episodes, seeds, G, K, reward_cfg = args
    return [sample_group(policies, ep, G, K, reward_cfg, s) for ep, s in zip(episodes, seeds)]


def _batch_schedule(cfg: RunConfig, step: int) -> np.ndarray:
    spe = cfg.steps_per_epoch()
    epoch, within = divmod(step % (spe * cfg.grpo.epochs), spe)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.master_seed, _STREAM_SHUFFLE, epoch]))
    order = rng.permutation(cfg.n_train_episodes)
    bs = cfg.grpo.batch_size
    return order[within * bs:(within + 1) * bs]


def _phases(cfg: RunConfig) -> list[tuple[tuple[str, ...], int]]:
    total = cfg.total_steps()
    if cfg.mode != INDEPENDENT:
        return [(AGENTS, total)]
    if cfg.independent_budget == "per_agent":
        return [((a,), total) for a in cfg.independent_order]
    base, extra = divmod(total, 3)
    return [((a,), base + (1 if k < extra else 0)) for k, a in enumerate(cfg.independent_order)]


def _mode_weights(cfg: RunConfig, local: np.ndarray, glob: np.ndarray, trained: tuple[str, ...]):
    """Final rewards (3, G) and credit weights (3,) for one group under the run mode."""
    mode = cfg.mode
    if mode in (JOINT, SINGLE_POLICY):
        _, w = group_credit(local, glob)
    elif mode == EQUAL_LG:
        w = np.full(3, 1.0 / 3.0)
    elif mode == FIXED_WEIGHT:
        w = np.array(cfg.fixed_weights)
    elif mode == LOCAL_ONLY:
        w = np.zeros(3)
    elif mode == GLOBAL_ONLY:
        w = np.full(3, 1.0 / 3.0)
        return w[:, None] * glob[None, :], w
    else:  # independent
        w = np.array([cfg.independent_global_share if a in trained else 0.0 for a in AGENTS])
        return local + w[:, None] * glob[None, :], w
    return final_rewards(local, glob, w, transposed=cfg.transposed_integration), w


def _fmt(x: float) -> str:
    return repr(float(x))


class _Writer:
    def __init__(self, out_dir: Path | None, dump: bool):
        self.out_dir = out_dir
        self.metrics = io.StringIO()
        self.evals = io.StringIO()
        self._m = csv.writer(self.metrics, lineterminator="\n")
        self._e = csv.writer(self.evals, lineterminator="\n")
        self._m.writerow(METRICS_HEADER)
        self._e.writerow(EVAL_HEADER)
        self.dump = None
        if out_dir is not None and dump:
            self.dump = (out_dir / "trajectories.jsonl").open("w", encoding="utf-8")

    def metric(self, row: dict):
        self._m.writerow([row["step"], row["agent"]] + [_fmt(row[k]) for k in METRICS_HEADER[2:]])

    def eval(self, step: int, m: dict):
        self._e.writerow([step] + [_fmt(m[k]) for k in EVAL_HEADER[1:]])

    def close(self):
        if self.dump is not None:
            self.dump.close()


def _prepare_output(out_dir) -> Path | None:
    if out_dir is None:
        return None
    path = Path(out_dir)
    try:
        path.mkdir(parents=True, exist_ok=True)
        probe = path / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise StorageError(path, f"output directory not writable: {exc.strerror or exc}") from exc
    return path


def train(cfg: RunConfig, workers: int = 1, out_dir=None) -> RunReport:
    """Run one training configuration end to end.

    ``workers`` only changes how trajectory groups are sampled; every random
    stream is derived from (master_seed, phase, step, episode_id, index), so
    results do not depend on it.
    """
    out = _prepare_output(out_dir if out_dir is not None else cfg.output_dir)
    train_eps = generate_episodes(cfg.master_seed, cfg.env, cfg.n_train_episodes, split=_SPLIT_TRAIN)
    eval_eps = generate_episodes(cfg.master_seed, cfg.env, cfg.n_eval_episodes, split=_SPLIT_EVAL,
                                 start_id=cfg.n_train_episodes)
    init_seed = int(np.random.SeedSequence([cfg.master_seed, _STREAM_INIT]).generate_state(1)[0])
    shared = SharedPolicy.init(cfg.env, init_seed) if cfg.mode == SINGLE_POLICY else None
    policies = shared.as_policies() if shared is not None else init_policies(cfg.env, init_seed)
    ref = dict(policies)
    K, G = cfg.rewards.K, cfg.grpo.group_size

    writer = _Writer(out, cfg.dump_trajectories)
    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    train_rows: list[dict] = []
    eval_rows: list[dict] = []
    series: dict[str, list[float]] = {a: [] for a in AGENTS}
    weight_sums = np.zeros(3)
    weight_count = 0

    def run_eval(step):
        m = evaluate(policies, eval_eps, K, cfg.rewards)
        writer.eval(step, m)
        eval_rows.append({"step": step, **{k: m[k] for k in EVAL_HEADER[1:]}})
        return m

    try:
        run_eval(0)
        step = 0
        for phase, (trained, n_steps) in enumerate(_phases(cfg)):
            for local_step in range(n_steps):
                sched_step = local_step if cfg.independent_budget == "per_agent" else step
                idx = _batch_schedule(cfg, sched_step)
                batch_eps = [train_eps[i] for i in idx]
                seeds = [_group_seed(cfg.master_seed, phase, step, ep.episode_id) for ep in batch_eps]
                groups = _sample_all(pool, workers, policies, batch_eps, seeds, G, K, cfg.rewards)
                if writer.dump is not None:
                    for g in groups:
                        dump_trajectories(g.trajectories, writer.dump)

                samples = {a: [] for a in trained}
                w_rows = []
                local_acc = np.zeros(3)
                glob_acc = 0.0
                for g in groups:
                    local, glob = g.local_matrix(), g.global_rewards
                    final, w = _mode_weights(cfg, local, glob, trained)
                    w_rows.append(w)
                    local_acc += local.mean(axis=1)
                    glob_acc += glob.mean()
                    for a in trained:
                        n = AGENTS.index(a)
                        adv = group_advantages(final[n], cfg.grpo.std_floor)
                        for i, traj in enumerate(g.trajectories):
                            samples[a].append(Sample(
                                traj.agent_state(n), traj.actions[n].action, traj.actions[n].logprob,
                                float(adv[i]), tag=f"step {step} episode {g.episode_id} trajectory {i}",
                            ))
                w_rows = np.array(w_rows)
                # constant weights (fixed modes) are logged as given, not as a rounded mean
                w_acc = w_rows[0] if np.all(w_rows == w_rows[0]) else w_rows.mean(axis=0)
                local_acc /= len(groups)
                glob_acc /= len(groups)
                weight_sums += w_acc
                weight_count += 1

                if shared is not None:
                    shared, stats = _update_shared(shared, samples, cfg.grpo, ref)
                    policies = shared.as_policies()
                else:
                    stats = {}
                    for a in trained:
                        policies[a], stats[a] = update_agent(
                            policies[a], samples[a], cfg.grpo, ref[a] if cfg.grpo.kl_coeff > 0 else None
                        )

                for a in trained:
                    n = AGENTS.index(a)
                    st = stats[a]
                    row = {
                        "step": step, "agent": a, "r_local_mean": float(local_acc[n]),
                        "r_global_mean": float(glob_acc), "weight": float(w_acc[n]),
                        "adv_std": st.adv_std, "kl_mean": st.kl_mean, "loss": st.loss,
                    }
                    writer.metric(row)
                    train_rows.append(row)
                    series[a].append(float(local_acc[n]))
                step += 1
                if step % cfg.eval_every == 0:
                    run_eval(step)
        if not eval_rows or eval_rows[-1]["step"] != step:
            run_eval(step)
    finally:
        writer.close()
        if pool is not None:
            pool.shutdown()

    conv = {}
    for a in AGENTS:
        s = series[a]
        # short phases (independent mode) shrink the window so a plateau is detectable
        window = max(1, min(cfg.convergence_window, len(s) // 3))
        conv[a] = convergence_step(s, window, cfg.convergence_tol) if s else 0
    report = RunReport(
        config=cfg.to_dict(),
        train_metrics=train_rows,
        eval_series=eval_rows,
        convergence_steps=conv,
        total_steps=total_steps_for(cfg.mode, conv),
        steps_trained={a: len(series[a]) for a in AGENTS},
        final_accuracy=eval_rows[-1]["accuracy"],
        mean_weights={a: float(weight_sums[n] / max(weight_count, 1)) for n, a in enumerate(AGENTS)},
        final_policies={a: [float(x) for x in policies[a].theta] for a in AGENTS},
    )
    if out is not None:
        _write_outputs(out, writer, report)
    return report


def _sample_all(pool, workers, policies, batch_eps, seeds, G, K, reward_cfg) -> list[TrajectoryGroup]:
    if pool is None:
        return _sample_batch((policies, batch_eps, seeds, G, K, reward_cfg))
    chunk = math.ceil(len(batch_eps) / workers)
    jobs = [
        (policies, batch_eps[i:i + chunk], seeds[i:i + chunk], G, K, reward_cfg)
        for i in range(0, len(batch_eps), chunk)
    ]
    groups: list[TrajectoryGroup] = []
    for part in pool.map(_sample_batch, jobs):
        groups.extend(part)
    return groups


def _update_shared(shared: SharedPolicy, samples, cfg: GrpoConfig, ref: Mapping[str, PolicyParams]):
    """One inner-epoch loop for the shared backbone, summing every task's gradient."""
    stats = {}
    ref_lp = {a: reference_logprobs(ref[a], samples[a]) if cfg.kl_coeff > 0 else None for a in samples}
    for _ in range(cfg.inner_epochs):
        g_shared = np.zeros_like(shared.shared)
        g_heads = {}
        for a, batch in samples.items():
            obj, grad, ratios, kls = surrogate(shared.agent_params(a), batch, cfg, ref_lp[a])
            gs, gh = shared.pullback(a, grad)
            g_shared += gs
            g_heads[a] = gh
            adv = np.array([s.advantage for s in batch])
            stats[a] = UpdateStats(
                loss=-float(obj), adv_mean=float(adv.mean()), adv_std=float(adv.std()),
                ratio_mean=float(ratios.mean()) if ratios.size else 1.0,
                kl_mean=float(kls.mean()) if kls.size else 0.0, grad_norm=float(np.linalg.norm(grad)),
            )
        shared = shared.step(g_shared, g_heads, cfg.learning_rate)
    return shared, stats


def _write_outputs(out: Path, writer: _Writer, report: RunReport) -> None:
    try:
        (out / "metrics.csv").write_text(writer.metrics.getvalue(), encoding="utf-8")
        (out / "eval.csv").write_text(writer.evals.getvalue(), encoding="utf-8")
        (out / "report.json").write_text(json.dumps(report.to_dict(), indent=1) + "\n", encoding="utf-8")
        save_policies(report.final_policies, report.config["env"], out / "policies.json")
    except OSError as exc:
        raise StorageError(out, exc.strerror or str(exc)) from exc


# --- policy persistence -----------------------------------------------------


def save_policies(thetas: Mapping[str, Sequence[float]], env: Mapping, path) -> None:
    path = Path(path)
    doc = {"env": dict(env), "policies": {a: [float(x) for x in thetas[a]] for a in AGENTS}}
    try:
        path.write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")
    except OSError as exc:
        raise StorageError(path, exc.strerror or str(exc)) from exc


def load_policies(path) -> tuple[dict[str, PolicyParams], EnvConfig]:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise StorageError(path, exc.strerror or str(exc)) from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc.msg}") from exc
    try:
        env = EnvConfig.from_dict(doc["env"])
        return {a: PolicyParams(a, doc["policies"][a]) for a in AGENTS}, env
    except (KeyError, TypeError) as exc:
        raise DataError(f"{path}: malformed policies file: {exc}") from exc


# --- reports ----------------------------------------------------------------

REPORT_COLUMNS = [
    "run", "mode", "master_seed", "conv_extraction", "conv_profile", "conv_retrieval",
    "total_steps", "final_accuracy", "w_extraction", "w_profile", "w_retrieval",
]


def load_report(run_dir) -> RunReport:
    path = Path(run_dir) / "report.json"
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
        return RunReport.from_dict(data)
    except OSError as exc:
        raise DataError(f"{run_dir}: missing run report ({exc.strerror or exc})") from exc
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DataError(f"{run_dir}: corrupt run report: {exc}") from exc


def report_rows(reports: Sequence[tuple[str, RunReport]]) -> list[dict]:
    rows = []
    for name, rep in reports:
        mode = rep.config["mode"]
        conv = rep.convergence_steps
        rows.append({
            "run": name,
            "mode": mode if mode != FIXED_WEIGHT else f"{mode}{tuple(rep.config['fixed_weights'])}",
            "master_seed": rep.config["master_seed"],
            "conv_extraction": conv["extraction"],
            "conv_profile": conv["profile"],
            "conv_retrieval": conv["retrieval"],
            "total_steps": total_steps_for(mode, conv),
            "final_accuracy": rep.final_accuracy,
            "w_extraction": rep.mean_weights["extraction"],
            "w_profile": rep.mean_weights["profile"],
            "w_retrieval": rep.mean_weights["retrieval"],
        })
    return rows


def format_table(rows: Sequence[dict]) -> str:
    def cell(v):
        return f"{v:.4f}" if isinstance(v, float) else str(v)

    table = [REPORT_COLUMNS] + [[cell(r[c]) for c in REPORT_COLUMNS] for r in rows]
    widths = [max(len(row[i]) for row in table) for i in range(len(REPORT_COLUMNS))]
    lines = ["  ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip() for row in table]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def rows_to_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=REPORT_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


def report(run_dirs: Sequence, out=None) -> tuple[str, str]:
    """Comparison table over finished runs, as (text, csv)."""
    reports = [(Path(d).name, load_report(d)) for d in run_dirs]
    rows = report_rows(reports)
    text, csv_text = format_table(rows), rows_to_csv(rows)
    if out is not None:
        out = _prepare_output(out)
        try:
            (out / "comparison.txt").write_text(text, encoding="utf-8")
            (out / "comparison.csv").write_text(csv_text, encoding="utf-8")
        except OSError as exc:
            raise StorageError(out, exc.strerror or str(exc)) from exc
    return text, csv_text


def with_mode(cfg: RunConfig, mode: str, fixed_weights=None) -> RunConfig:
    return replace(cfg, mode=mode, fixed_weights=tuple(fixed_weights) if fixed_weights is not None else None)
