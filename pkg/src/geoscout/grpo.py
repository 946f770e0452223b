"""Desk-scale GRPO over tabular softmax policies on the proxy-task answer spaces.

One environment is a single-prompt bandit: a fixed ground truth, a finite
action space (all permutations for jigsaw, all grid indices for anomaly),
and either the dense task reward or a sparse exact-match reward. The policy
is a logit table; one step samples a group, normalizes rewards within the
group, and ascends the clipped surrogate with an exact KL penalty by one
analytic-gradient step. Nothing here involves a neural network.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import GridSpec, all_permutations, derive_seed, make_rng
from .rewards import (
    DEFAULT_CONFIG,
    AnomGT,
    RewardConfig,
    TaskGT,
    TopoGT,
    format_anom_answer,
    format_topo_answer,
    total_reward,
)


@dataclass(frozen=True)
class GrpoConfig:
    group_size: int = 8
    kl_coeff: float = 0.04
    clip_ratio: float = 0.2
    learning_rate: float = 0.1
    steps: int = 4000
    advantage_epsilon: float = 1e-8

    def __post_init__(self):
        if self.group_size < 2:
            raise ValueError("group_size must be >= 2")
        if self.kl_coeff < 0:
            raise ValueError("kl_coeff must be >= 0")
        if not 0.0 < self.clip_ratio < 1.0:
            raise ValueError("clip_ratio must lie in (0, 1)")
        if self.advantage_epsilon <= 0:
            raise ValueError("advantage_epsilon must be positive")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")


@dataclass
class PolicyTable:
    """Softmax policy over a finite action space, parameterized by logits."""

    logits: np.ndarray

    def __post_init__(self):
        self.logits = np.asarray(self.logits, dtype=np.float64).copy()
        if self.logits.ndim != 1 or not np.all(np.isfinite(self.logits)):
            raise ValueError("logits must be a finite 1-d array")

    @classmethod
    def uniform(cls, n_actions: int) -> "PolicyTable":
        return cls(np.zeros(n_actions))

    def probs(self) -> np.ndarray:
        return softmax(self.logits)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - np.max(logits)
    e = np.exp(z)
    return e / e.sum()


@dataclass(frozen=True)
class SimEnv:
    """Single-prompt bandit over a proxy task's discrete answer space."""

    name: str
    kind: str  # "topo" | "anom"
    reward_mode: str  # "dense" | "sparse"
    gt_index: int  # position of the ground-truth action
    action_labels: tuple[str, ...]
    reward_table: np.ndarray  # training reward per action under reward_mode
    accuracy_table: np.ndarray  # dense task accuracy per action (evaluation metric)

    @property
    def n_actions(self) -> int:
        return len(self.action_labels)

    def reward(self, action: int) -> float:
        return float(self.reward_table[action])

    def expected_accuracy(self, probs: np.ndarray) -> float:
        return float(probs @ self.accuracy_table)


# Fixed ground truths per environment; the simulator isolates reward-shape
# effects, so the particular target does not matter as long as it is stable.
ENV_GROUND_TRUTH = {
    "jigsaw1x2": ("topo", GridSpec(1, 2), (1, 0)),
    "jigsaw1x4": ("topo", GridSpec(1, 4), (2, 0, 3, 1)),
    "jigsaw2x2": ("topo", GridSpec(2, 2), (2, 0, 3, 1)),
    "anom2x2": ("anom", GridSpec(2, 2), 0),
    "anom4x2": ("anom", GridSpec(4, 2), 2),
    "anom4x4": ("anom", GridSpec(4, 4), 5),
}

ENV_NAMES = tuple(ENV_GROUND_TRUTH)


def make_env(name: str, reward_mode: str, cfg: RewardConfig = DEFAULT_CONFIG) -> SimEnv:
    """Build a named environment.

    Dense rewards come from scoring each action's canonical answer string
    through the reward engine, so the simulator exercises the exact reward
    path an RL trainer would see.
    """
    if name not in ENV_GROUND_TRUTH:
        raise ValueError(f"unknown environment {name!r} (known: {', '.join(ENV_NAMES)})")
    if reward_mode not in ("dense", "sparse"):
        raise ValueError(f"unknown reward mode {reward_mode!r}")
    kind, grid, target = ENV_GROUND_TRUTH[name]
    gt: TaskGT
    if kind == "topo":
        actions = [p.mapping for p in all_permutations(grid.size)]
        labels = tuple(format_topo_answer(a) for a in actions)
        gt = TopoGT(target)
        gt_index = actions.index(target)
    else:
        actions = list(range(grid.size))
        labels = tuple(format_anom_answer(a) for a in actions)
        gt = AnomGT(target, grid)
        gt_index = target
    accuracy = np.array(
        [total_reward(label, gt, "direct", cfg).r_acc for label in labels], dtype=np.float64
    )
    if reward_mode == "dense":
        reward = accuracy.copy()
    else:
        reward = np.zeros(len(labels))
        reward[gt_index] = 1.0
    return SimEnv(
        name=name,
        kind=kind,
        reward_mode=reward_mode,
        gt_index=gt_index,
        action_labels=labels,
        reward_table=reward,
        accuracy_table=accuracy,
    )


# --- advantages and the surrogate objective -----------------------------------------

def group_advantages(rewards: Sequence[float], eps: float = 1e-8) -> np.ndarray:
    """Group-relative normalization: (r - mean) / max(population std, eps)."""
    r = np.asarray(rewards, dtype=np.float64)
    if r.size < 2:
        raise ValueError("need a group of at least 2 rewards")
    std = float(np.std(r))
    return (r - r.mean()) / max(std, eps)


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """Exact KL(p || q) over the finite action space."""
    return float(np.sum(p * (np.log(p) - np.log(q))))


def surrogate_value(
    logits: np.ndarray,
    ref_logits: np.ndarray,
    old_probs: np.ndarray,
    actions: np.ndarray,
    advantages: np.ndarray,
    clip_ratio: float,
    kl_coeff: float,
) -> float:
    """Clipped surrogate with KL penalty, averaged over the group:

        mean_i min(rho_i A_i, clip(rho_i, 1-eps, 1+eps) A_i) - beta KL(pi || ref)
    """
    p = softmax(logits)
    rho = p[actions] / old_probs[actions]
    clipped = np.clip(rho, 1.0 - clip_ratio, 1.0 + clip_ratio)
    terms = np.minimum(rho * advantages, clipped * advantages)
    value = float(np.mean(terms))
    if kl_coeff > 0:
        value -= kl_coeff * kl_divergence(p, softmax(ref_logits))
    return value


def surrogate_grad(
    logits: np.ndarray,
    ref_logits: np.ndarray,
    old_probs: np.ndarray,
    actions: np.ndarray,
    advantages: np.ndarray,
    clip_ratio: float,
    kl_coeff: float,
) -> np.ndarray:
    """Analytic gradient of surrogate_value with respect to the logits.

    Advantages are treated as constants (GRPO does not differentiate through
    the normalization), and clipped samples contribute no gradient.
    """
    p = softmax(logits)
    n = p.shape[0]
    rho = p[actions] / old_probs[actions]
    clipped = np.clip(rho, 1.0 - clip_ratio, 1.0 + clip_ratio)
    # unclipped branch active when its term is the (tie -> unclipped) minimum
    active = rho * advantages <= clipped * advantages
    coef = np.zeros(n)
    weights = advantages * rho * active
    np.add.at(coef, actions, weights)
    grad = (coef - float(weights.sum()) * p) / len(actions)
    if kl_coeff > 0:
        ref = softmax(ref_logits)
        kl = np.sum(p * (np.log(p) - np.log(ref)))
        grad -= kl_coeff * p * ((np.log(p) - np.log(ref)) - kl)
    return grad


@dataclass(frozen=True)
class StepStats:
    mean_reward: float
    kl: float  # KL(pi_new || pi_ref) after the update


def grpo_step(
    policy: PolicyTable,
    ref: PolicyTable,
    env: SimEnv,
    cfg: GrpoConfig,
    rng: np.random.Generator,
) -> tuple[PolicyTable, StepStats]:
    """One GRPO update: sample a group, normalize rewards, take one ascent step."""
    old_probs = policy.probs()
    actions = rng.choice(env.n_actions, size=cfg.group_size, p=old_probs)
    rewards = env.reward_table[actions]
    advantages = group_advantages(rewards, cfg.advantage_epsilon)
    grad = surrogate_grad(
        policy.logits,
        ref.logits,
        old_probs,
        actions,
        advantages,
        cfg.clip_ratio,
        cfg.kl_coeff,
    )
    new_policy = PolicyTable(policy.logits + cfg.learning_rate * grad)
    kl = kl_divergence(new_policy.probs(), ref.probs())
    return new_policy, StepStats(mean_reward=float(rewards.mean()), kl=kl)


# --- experiment harness ----------------------------------------------------------------

@dataclass
class ExperimentResult:
    env_name: str
    threshold: float
    curves: list[tuple[int, int, str, float, float]]  # (seed, step, mode, mean_reward, kl)
    steps_to_threshold: dict[str, list[float]]  # mode -> per-seed first crossing (inf if never)
    summary: dict

    def write_curves_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["seed", "step", "mode", "mean_reward", "kl"])
            for seed, step, mode, mean_reward, kl in self.curves:
                writer.writerow([seed, step, mode, repr(mean_reward), repr(kl)])

    def write_summary_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.summary, fh, ensure_ascii=False, indent=2)
            fh.write("\n")


def run_training(
    env: SimEnv, cfg: GrpoConfig, seed: int, threshold: float = 0.99
) -> tuple[list[tuple[int, float, float]], float]:
    """Train one policy; returns per-step rows and the first threshold crossing.

    Row 0 is the pre-training snapshot (exact expected reward, zero KL); row
    t >= 1 reports the sampled group mean and the post-update KL. The
    crossing is the smallest step count after which the policy's expected
    accuracy reaches threshold * max accuracy.
    """
    rng = make_rng(seed)
    policy = PolicyTable.uniform(env.n_actions)
    ref = PolicyTable.uniform(env.n_actions)
    target = threshold * float(env.accuracy_table.max())
    rows: list[tuple[int, float, float]] = [
        (0, float(policy.probs() @ env.reward_table), 0.0)
    ]
    crossed = math.inf
    if env.expected_accuracy(policy.probs()) >= target:
        crossed = 0
    for step in range(1, cfg.steps + 1):
        policy, stats = grpo_step(policy, ref, env, cfg, rng)
        rows.append((step, stats.mean_reward, stats.kl))
        if math.isinf(crossed) and env.expected_accuracy(policy.probs()) >= target:
            crossed = step
    return rows, crossed


def run_experiment(
    envs: dict[str, SimEnv],
    cfg: GrpoConfig,
    seeds: Sequence[int],
    threshold: float = 0.99,
) -> ExperimentResult:
    """Seed sweep over reward modes; summarizes median steps-to-threshold per mode."""
    if len(seeds) < 10:
        raise ValueError(f"need at least 10 seeds, got {len(seeds)}")
    names = {env.name for env in envs.values()}
    if len(names) != 1:
        raise ValueError("all reward modes must share one environment")
    curves: list[tuple[int, int, str, float, float]] = []
    steps_to_threshold: dict[str, list[float]] = {}
    for mode, env in envs.items():
        crossings: list[float] = []
        for seed in seeds:
            run_seed = derive_seed(seed, env.name, mode, 0)
            rows, crossed = run_training(env, cfg, run_seed, threshold)
            crossings.append(crossed)
            curves.extend((seed, step, mode, r, kl) for step, r, kl in rows)
        steps_to_threshold[mode] = crossings
    summary = {
        "env": names.pop(),
        "threshold": threshold,
        "steps": cfg.steps,
        "group_size": cfg.group_size,
        "kl_coeff": cfg.kl_coeff,
        "clip_ratio": cfg.clip_ratio,
        "learning_rate": cfg.learning_rate,
        "seeds": len(seeds),
        "modes": {
            mode: {
                "median_steps_to_threshold": float(np.median(vals)),
                "reached": sum(1 for v in vals if math.isfinite(v)),
            }
            for mode, vals in steps_to_threshold.items()
        },
    }
    return ExperimentResult(
        env_name=summary["env"],
        threshold=threshold,
        curves=curves,
        steps_to_threshold=steps_to_threshold,
        summary=summary,
    )
