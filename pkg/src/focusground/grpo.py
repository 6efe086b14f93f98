"""Group-relative advantages and the two-step clipped surrogate."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .config import load_kv
from .errors import ContractError, InvalidGroupError, InvalidRatioError
from .protocol import EpisodeRecord, run_episode
from .reward import RewardVariant, RewardWeights


@dataclass(frozen=True)
class GrpoConfig:
    epsilon: float = 0.2
    group_size: int = 6
    learning_rate: float = 0.05
    inner_epochs: int = 1
    kl_beta: float = 0.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.group_size < 2:
            raise ValueError(f"group_size must be >= 2, got {self.group_size}")
        if self.inner_epochs < 1:
            raise ValueError("inner_epochs must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")

    @classmethod
    def from_mapping(cls, values: dict) -> GrpoConfig:
        casts = {"epsilon": float, "group_size": int, "learning_rate": float,
                 "inner_epochs": int, "kl_beta": float}
        return cls(**{k: casts[k](v) for k, v in values.items() if k in casts})

    @classmethod
    def load(cls, path) -> GrpoConfig:
        return cls.from_mapping(load_kv(path))


# settings used for the full-size model; the toy default above only differs in learning rate
REFERENCE_CONFIG = GrpoConfig(learning_rate=1e-6)


def group_advantages(rewards: Sequence[float]) -> np.ndarray:
    """``(R_i - mean) / std`` with the population std; zeros if the group is flat."""
    r = np.asarray(rewards, dtype=np.float64)
    if r.ndim != 1 or r.size < 2:
        raise InvalidGroupError(f"need at least 2 rewards, got {r.size}")
    std = r.std()
    if std < 1e-8:
        return np.zeros_like(r)
    return (r - r.mean()) / std


def clip_ratio(rho: float, epsilon: float) -> float:
    return min(max(rho, 1 - epsilon), 1 + epsilon)


def clipped_term(rho: float, A: float, epsilon: float) -> float:
    """``min(rho*A, clip(rho)*A)``."""
    if not rho > 0:
        raise InvalidRatioError(f"importance ratio must be positive, got {rho}")
    return min(rho * A, clip_ratio(rho, epsilon) * A)


def clip_active(rho: float, A: float, epsilon: float) -> bool:
    """True where the clipped branch wins and is flat in ``rho`` (zero gradient)."""
    return (A > 0 and rho > 1 + epsilon) or (A < 0 and rho < 1 - epsilon)


@dataclass
class Group:
    trajectories: list[EpisodeRecord]
    rewards: np.ndarray
    advantages: Optional[np.ndarray] = None
    logp_old: Optional[list[list[float]]] = None
    logp_new: Optional[list[list[float]]] = None

    @classmethod
    def from_episodes(cls, episodes: Sequence[EpisodeRecord]) -> Group:
        logp = [[s.logprob for s in ep.steps if s.logprob is not None] for ep in episodes]
        g = cls(list(episodes), np.array([ep.reward.total for ep in episodes]), logp_old=logp)
        g.logp_new = [list(x) for x in logp]
        return g

    def normalise(self) -> Group:
        self.advantages = group_advantages(self.rewards)
        return self


def surrogate_objective(groups: Sequence[Group], cfg: GrpoConfig) -> float:
    """Mean over trajectories of the per-step mean clipped term.

    A trajectory contributes the average over the steps it actually took, so
    a direct answer counts once and a tool episode averages its two steps.
    """
    per_traj = []
    for g in groups:
        if g.advantages is None or g.logp_old is None or g.logp_new is None:
            raise ContractError("group needs advantages and both log-prob sets")
        for A, old, new in zip(g.advantages, g.logp_old, g.logp_new):
            if len(old) != len(new) or not old:
                raise ContractError("log-probs missing for a trajectory")
            terms = [clipped_term(math.exp(n - o), float(A), cfg.epsilon) for o, n in zip(old, new)]
            per_traj.append(sum(terms) / len(terms))
    if not per_traj:
        raise ContractError("no trajectories")
    return float(np.mean(per_traj))


@dataclass
class StepMetrics:
    mean_reward: float
    success_rate: float
    tool_rate: float
    objective: float = 0.0
    clip_fraction: float = 0.0
    extra: dict = field(default_factory=dict)


def episode_seed(seed: int, *index: int) -> int:
    """Deterministic child seed for ``(seed, *index)``."""
    return int(np.random.SeedSequence([seed, *index]).generate_state(1)[0])


def sample_group(policy, screen, group_size: int, seed: int, weights: RewardWeights,
                 variant: RewardVariant) -> Group:
    episodes = [
        run_episode(policy, screen.instruction, screen.image, screen.gt, episode_seed(seed, j),
                    weights, variant)
        for j in range(group_size)
    ]
    return Group.from_episodes(episodes).normalise()


def surrogate_gradient(policy, groups: Sequence[Group], cfg: GrpoConfig) -> tuple[float, np.ndarray, float]:
    """Objective, its gradient w.r.t. ``policy.params.flat()``, and the clipped fraction.

    Refreshes each group's ``logp_new`` from the policy's current parameters.
    Terms whose clipped branch is active contribute no gradient.
    """
    grad = np.zeros(policy.params.size)
    n_traj, clipped, n_terms = 0, 0, 0
    for g in groups:
        for i, (A, ep) in enumerate(zip(g.advantages, g.trajectories)):
            infos = [s.info for s in ep.steps if s.logprob is not None]
            new = []
            for t, info in enumerate(infos):
                lp, dlp = policy.logprob(info)
                new.append(lp)
                rho = math.exp(lp - g.logp_old[i][t])
                if clip_active(rho, A, cfg.epsilon):
                    clipped += 1
                else:
                    grad += (A * rho / len(infos)) * dlp
                n_terms += 1
            g.logp_new[i] = new
            n_traj += 1
    return surrogate_objective(groups, cfg), grad / max(n_traj, 1), clipped / max(n_terms, 1)


def train_step(policy, screens: Sequence, cfg: GrpoConfig, seed: int,
               weights: Optional[RewardWeights] = None,
               variant: RewardVariant = RewardVariant.FULL) -> StepMetrics:
    """Sample a group per screen, then ascend the clipped surrogate.

    ``policy`` must expose ``params`` (with ``flat``/``with_flat``) and
    ``logprob(step_info) -> (logprob, grad)``. The policy is updated in place.
    """
    if cfg.kl_beta != 0:
        raise NotImplementedError("KL penalty is not implemented; use kl_beta = 0")
    weights = weights if weights is not None else RewardWeights()
    groups = [sample_group(policy, s, cfg.group_size, episode_seed(seed, i), weights, variant)
              for i, s in enumerate(screens)]
    objective, clip_fraction = 0.0, 0.0
    for _epoch in range(cfg.inner_epochs):
        objective, grad, clip_fraction = surrogate_gradient(policy, groups, cfg)
        policy.params = policy.params.with_flat(policy.params.flat() + cfg.learning_rate * grad)

    episodes = [ep for g in groups for ep in g.trajectories]
    return StepMetrics(
        mean_reward=float(np.mean([ep.reward.total for ep in episodes])),
        success_rate=float(np.mean([ep.reward.r_acc for ep in episodes])),
        tool_rate=float(np.mean([ep.step_count == 2 for ep in episodes])),
        objective=objective,
        clip_fraction=clip_fraction,
    )
