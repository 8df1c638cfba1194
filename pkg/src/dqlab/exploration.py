"""Behaviour policies: annealed epsilon-greedy, greedy, and survival-masked epsilon-greedy."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .mdp_core import N_ACTIONS, RngStream


@dataclass(frozen=True)
class ExplorationSchedule:
    epsilon_start: float = 1.0
    epsilon_final: float = 0.1
    anneal_steps: int = 125_000

    def __post_init__(self):
        if not 0 <= self.epsilon_final <= self.epsilon_start <= 1:
            raise ValueError("need 0 <= epsilon_final <= epsilon_start <= 1")
        if self.anneal_steps < 0:
            raise ValueError("anneal_steps must be non-negative")


def epsilon_at(s: ExplorationSchedule, t: int) -> float:
    """Linear from epsilon_start at t=0 to epsilon_final at anneal_steps, then flat."""
    if t >= s.anneal_steps:
        return s.epsilon_final
    return s.epsilon_start + (s.epsilon_final - s.epsilon_start) * (t / s.anneal_steps)


@dataclass(frozen=True)
class EpsGreedy:
    schedule: ExplorationSchedule


@dataclass(frozen=True)
class Greedy:
    pass


@dataclass(frozen=True)
class SafeEpsGreedy:
    schedule: ExplorationSchedule
    tau: float = -0.5

    def __post_init__(self):
        if not math.isfinite(self.tau):
            raise ValueError("safety threshold must be finite")


def argmax(values) -> int:
    """First index of the maximum (lowest action wins ties)."""
    best, best_v = 0, values[0]
    for i in range(1, len(values)):
        if values[i] > best_v:
            best, best_v = i, values[i]
    return best


def safe_action_set(q_env_values, tau: float) -> list[int]:
    """Actions whose survival value clears ``tau``; never empty."""
    safe = [a for a in range(N_ACTIONS) if q_env_values[a] >= tau]
    return safe or [argmax(q_env_values)]


def policy_epsilon(policy, t: int) -> float:
    if isinstance(policy, Greedy):
        return 0.0
    return epsilon_at(policy.schedule, t)


def choose(policy, combined, env_values, t: int, rng: RngStream) -> tuple[int, bool]:
    """Pick an action from precomputed values; returns ``(action, explored)``.

    ``combined`` is the acted-upon Q (the sum for decomposed agents);
    ``env_values`` is the survival side, only read by SafeEpsGreedy.
    """
    if isinstance(policy, Greedy):
        return argmax(combined), False
    eps = epsilon_at(policy.schedule, t)
    if isinstance(policy, SafeEpsGreedy):
        safe = safe_action_set(env_values, policy.tau)
        if eps > 0 and rng.gen.random() < eps:
            return safe[int(rng.gen.integers(len(safe)))], True
        return max(safe, key=lambda a: (combined[a], -a)), False
    if eps > 0 and rng.gen.random() < eps:
        return int(rng.gen.integers(N_ACTIONS)), True
    return argmax(combined), False


def select_action(policy, q, obs, t: int, rng: RngStream) -> int:
    """Behaviour action for ``obs`` under ``policy``.

    ``q`` is a single value function or a :class:`~dqlab.qcore.DecomposedQ`;
    SafeEpsGreedy needs the latter.
    """
    combined = q.q_list(obs)
    env_values = None
    if isinstance(policy, SafeEpsGreedy):
        env_values = q.q_env.q_list(obs)
    return choose(policy, combined, env_values, t, rng)[0]


def safe_greedy(combined, env_values, tau: float) -> int:
    safe = safe_action_set(env_values, tau)
    return max(safe, key=lambda a: (combined[a], -a))
