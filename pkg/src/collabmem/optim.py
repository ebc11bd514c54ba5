"""Group-relative policy optimization for sequence-level agent actions."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import Any, Sequence

import numpy as np

from .errors import ConfigError, DataError, FeasibilityError, ParameterError
from .policies import PolicyParams, logprob_and_grad, logprob_of


@dataclass(frozen=True)
class GrpoConfig:
    clip_epsilon: float = 0.2
    kl_coeff: float = 0.0
    learning_rate: float = 0.5
    group_size: int = 8
    batch_size: int = 128
    epochs: int = 5
    inner_epochs: int = 1
    std_floor: float = 1e-8

    def __post_init__(self):
        for name in ("group_size", "batch_size", "epochs", "inner_epochs"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int):
                raise ConfigError(f"{name}: expected an integer, got {v!r}")
        if self.clip_epsilon <= 0:
            raise ConfigError(f"clip_epsilon: must be > 0, got {self.clip_epsilon}")
        if self.kl_coeff < 0:
            raise ConfigError(f"kl_coeff: must be >= 0, got {self.kl_coeff}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate: must be > 0, got {self.learning_rate}")
        if self.group_size < 2:
            raise ConfigError(f"group_size: must be >= 2, got {self.group_size}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size: must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigError(f"epochs: must be >= 1, got {self.epochs}")
        if self.inner_epochs < 1:
            raise ConfigError(f"inner_epochs: must be >= 1, got {self.inner_epochs}")
        if self.std_floor < 0:
            raise ConfigError(f"std_floor: must be >= 0, got {self.std_floor}")

    @classmethod
    def from_dict(cls, data: dict) -> "GrpoConfig":
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"grpo: unknown keys {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)


def group_advantages(rewards, std_floor: float = 1e-8) -> np.ndarray:
    r = np.asarray(rewards, dtype=float).reshape(-1)
    if r.size < 2:
        raise DataError(f"group needs at least 2 rewards, got {r.size}")
    if not np.all(np.isfinite(r)):
        raise DataError("rewards contain non-finite values")
    std = r.std()
    if std < std_floor or std == 0.0:
        return np.zeros_like(r)
    return (r - r.mean()) / std


def clipped_objective(ratio, advantage, clip_epsilon: float):
    clipped = np.clip(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon)
    return np.minimum(ratio * advantage, clipped * advantage)


def kl_estimate(logp_ref, logp_cur):
    """Per-sample ``u - ln u - 1`` with ``u = pi_ref / pi``; always >= 0."""
    log_u = np.asarray(logp_ref, dtype=float) - np.asarray(logp_cur, dtype=float)
    out = np.expm1(log_u) - log_u
    return np.maximum(out, 0.0) if np.ndim(out) else max(float(out), 0.0)


@dataclass(frozen=True)
class Sample:
    state: Any
    action: Any
    old_logprob: float
    advantage: float
    tag: str = ""


@dataclass(frozen=True)
class UpdateStats:
    loss: float
    adv_mean: float
    adv_std: float
    ratio_mean: float
    kl_mean: float
    grad_norm: float


def _eval_sample(params: PolicyParams, s: Sample):
    try:
        return logprob_and_grad(params, s.state, s.action)
    except (FeasibilityError, ParameterError) as exc:
        raise DataError(f"re-evaluating {s.tag or 'sample'}: {exc}") from exc


def surrogate(params: PolicyParams, batch: Sequence[Sample], cfg: GrpoConfig, ref_logprobs=None):
    """Batch-mean clipped surrogate minus the KL penalty, and its gradient.

    Samples with zero advantage contribute nothing when the KL penalty is off
    and are skipped. Returns ``(objective, gradient, ratios, kls)`` where the
    ratio/KL arrays cover the evaluated samples only.
    """
    n = len(batch)
    grad = np.zeros(params.theta.size)
    if n == 0:
        return 0.0, grad, np.zeros(0), np.zeros(0)
    use_kl = cfg.kl_coeff > 0 and ref_logprobs is not None
    total = 0.0
    ratios, kls = [], []
    eps = cfg.clip_epsilon
    for i, s in enumerate(batch):
        if s.advantage == 0.0 and not use_kl:
            continue
        lp, g = _eval_sample(params, s)
        rho = float(np.exp(lp - s.old_logprob))
        a = s.advantage
        ratios.append(rho)
        unclipped = rho * a
        clipped = min(max(rho, 1.0 - eps), 1.0 + eps) * a
        if unclipped <= clipped:
            total += unclipped
            grad += (a * rho) * g
        else:
            total += clipped
        if ref_logprobs is not None:
            kl = kl_estimate(ref_logprobs[i], lp)
            kls.append(kl)
            if use_kl:
                total -= cfg.kl_coeff * kl
                u = float(np.exp(ref_logprobs[i] - lp))
                grad -= cfg.kl_coeff * (1.0 - u) * g
    return total / n, grad / n, np.array(ratios), np.array(kls)


def reference_logprobs(ref_params: PolicyParams | None, batch: Sequence[Sample]):
    if ref_params is None:
        return None
    return np.array([logprob_of(ref_params, s.state, s.action) for s in batch])


def update_agent(
    params: PolicyParams,
    batch: Sequence[Sample],
    cfg: GrpoConfig,
    ref_params: PolicyParams | None = None,
) -> tuple[PolicyParams, UpdateStats]:
    adv = np.array([s.advantage for s in batch], dtype=float)
    ref_lp = reference_logprobs(ref_params, batch) if cfg.kl_coeff > 0 else None
    objective, ratios, kls, gnorm = 0.0, np.zeros(0), np.zeros(0), 0.0
    for _ in range(cfg.inner_epochs):
        objective, grad, ratios, kls = surrogate(params, batch, cfg, ref_lp)
        gnorm = float(np.linalg.norm(grad))
        if gnorm > 0.0:
            params = params.replace(params.theta + cfg.learning_rate * grad)
    stats = UpdateStats(
        loss=-float(objective),
        adv_mean=float(adv.mean()) if adv.size else 0.0,
        adv_std=float(adv.std()) if adv.size else 0.0,
        ratio_mean=float(ratios.mean()) if ratios.size else 1.0,
        kl_mean=float(kls.mean()) if kls.size else 0.0,
        grad_norm=gnorm,
    )
    return params, stats
