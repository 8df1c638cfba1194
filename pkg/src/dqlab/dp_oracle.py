"""Exact value iteration on small deterministic MDPs (ground truth for tests)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cliffwalk import CliffConfig, CliffState, enumerate_states, step as cliff_step
from .mdp_core import N_ACTIONS, NumericalError
from .snapshot import write_snapshot


@dataclass
class EnumerableMdp:
    """Deterministic MDP in array form.

    ``next_state[s, a]`` is a state index, or -1 when the transition is
    absorbing. Rewards are kept split into their env and task parts.
    """

    states: list
    next_state: np.ndarray
    r_env: np.ndarray
    r_task: np.ndarray
    gamma: float = 0.95

    def __post_init__(self):
        n = len(self.states)
        for arr in (self.next_state, self.r_env, self.r_task):
            if arr.shape != (n, N_ACTIONS):
                raise ValueError(f"expected arrays of shape {(n, N_ACTIONS)}, got {arr.shape}")
        if ((self.next_state < -1) | (self.next_state >= n)).any():
            raise ValueError("next_state refers outside the state list")

    @property
    def terminal(self) -> np.ndarray:
        return self.next_state < 0

    @classmethod
    def from_function(cls, states, transition, gamma: float = 0.95) -> "EnumerableMdp":
        """Build from ``transition(state, action) -> (next, DecomposedReward, terminal)``."""
        index = {s: i for i, s in enumerate(states)}
        n = len(states)
        nxt = np.full((n, N_ACTIONS), -1, dtype=np.int64)
        r_env = np.zeros((n, N_ACTIONS))
        r_task = np.zeros((n, N_ACTIONS))
        for i, s in enumerate(states):
            for a in range(N_ACTIONS):
                s2, rew, term = transition(s, a)
                r_env[i, a], r_task[i, a] = rew.r_env, rew.r_task
                if not term:
                    nxt[i, a] = index[s2]
        return cls(list(states), nxt, r_env, r_task, gamma)

    @classmethod
    def from_cliffwalk(cls, config: CliffConfig | None = None, gamma: float = 0.95) -> "EnumerableMdp":
        """Cliff world as an infinite-horizon MDP keyed by agent position."""
        config = config or CliffConfig()
        positions = [s.agent_pos for s in enumerate_states(config)]
        # no horizon: a huge max_steps keeps timeouts out of the model
        unbounded = CliffConfig(config.width, config.height, config.start, config.goal,
                                config.cliff, config.r_goal, config.r_cliff, max_steps=2**62)

        def transition(pos, a):
            nxt, rew, term = cliff_step(CliffState(pos), a, unbounded)
            return nxt.agent_pos, rew, term

        return cls.from_function(positions, transition, gamma)


def _backup(mdp: EnumerableMdp, q: np.ndarray, rewards: np.ndarray) -> np.ndarray:
    v = q.max(axis=1)
    boot = np.where(mdp.terminal, 0.0, v[np.maximum(mdp.next_state, 0)])
    return rewards + mdp.gamma * boot


def value_iteration(mdp: EnumerableMdp, tol: float = 1e-10, max_iter: int = 100_000) -> np.ndarray:
    """Q* by repeated Bellman optimality backups from zero."""
    rewards = mdp.r_env + mdp.r_task
    q = np.zeros_like(rewards)
    for _ in range(max_iter):
        new = _backup(mdp, q, rewards)
        delta = np.abs(new - q).max() if q.size else 0.0
        q = new
        if delta < tol:
            return q
    raise NumericalError(f"value iteration did not converge to {tol} in {max_iter} sweeps "
                         f"(last change {delta:.3g})")


def decomposed_value_iteration(mdp: EnumerableMdp, tol: float = 1e-10,
                               max_iter: int = 100_000) -> tuple[np.ndarray, np.ndarray]:
    """Env and task tables under joint-greedy backups.

    Both sides back up at a*(s') = argmax (Q_env + Q_task)(s', .). Iterating
    that rule directly can cycle forever when two actions tie on the sum but
    split it differently, so a* is taken from the converged monolithic Q*
    (lowest index among actions within ``tol`` of the max) and each side is
    then evaluated under that fixed greedy policy. The sum is Q*.
    """
    q_star = value_iteration(mdp, tol, max_iter)
    n = len(mdp.states)
    near_best = q_star >= q_star.max(axis=1, keepdims=True) - tol if n else q_star.astype(bool)
    best = np.argmax(near_best, axis=1)
    rows = np.arange(n)
    safe_next = np.maximum(mdp.next_state, 0)
    q_env = np.zeros_like(mdp.r_env)
    q_task = np.zeros_like(mdp.r_task)
    for _ in range(max_iter):
        v_env, v_task = q_env[rows, best], q_task[rows, best]
        new_env = mdp.r_env + mdp.gamma * np.where(mdp.terminal, 0.0, v_env[safe_next])
        new_task = mdp.r_task + mdp.gamma * np.where(mdp.terminal, 0.0, v_task[safe_next])
        delta = max(np.abs(new_env - q_env).max(), np.abs(new_task - q_task).max()) if n else 0.0
        q_env, q_task = new_env, new_task
        if delta < tol:
            return q_env, q_task
    raise NumericalError(f"decomposed value iteration did not converge to {tol} in {max_iter} sweeps")


def bellman_residual(mdp: EnumerableMdp, q: np.ndarray) -> float:
    return float(np.abs(_backup(mdp, q, mdp.r_env + mdp.r_task) - q).max())


def save_qstar(path, mdp: EnumerableMdp, q: np.ndarray) -> None:
    write_snapshot(path, "qtable", {"values": q, "visits": np.zeros(q.shape, dtype=np.int64)},
                   shape=list(q.shape), encoding="position", gamma=mdp.gamma, alpha=0.0, updates=0)
