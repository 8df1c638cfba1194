"""Fixed-capacity FIFO replay memory and the three ways of pre-filling it."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from .exploration import argmax
from .mdp_core import (
    N_ACTIONS,
    ConfigError,
    DecomposedReward,
    RngStream,
    Transition,
    TransitionBatch,
    UsageError,
    derive_substream,
)
from .snapshot import read_snapshot, write_snapshot


class ReplayBuffer:
    """Ring of transitions stored as parallel numpy arrays.

    Storage is allocated on the first push, using that transition's
    observation shape and dtype.
    """

    def __init__(self, capacity: int = 10_000, with_replacement: bool = True):
        if capacity < 1:
            raise ConfigError("replay capacity must be positive")
        self.capacity = int(capacity)
        self.with_replacement = with_replacement
        self.size = 0
        self.inserts = 0
        self._cols = None

    def _allocate(self, obs) -> None:
        obs = np.asarray(obs)
        cap = self.capacity
        self._cols = {
            "obs": np.zeros((cap, *obs.shape), dtype=obs.dtype),
            "actions": np.zeros(cap, dtype=np.int64),
            "r_env": np.zeros(cap),
            "r_task": np.zeros(cap),
            "next_obs": np.zeros((cap, *obs.shape), dtype=obs.dtype),
            "terminal": np.zeros(cap, dtype=bool),
        }

    def push(self, t: Transition) -> None:
        if self._cols is None:
            self._allocate(t.state)
        i = self.inserts % self.capacity
        c = self._cols
        c["obs"][i] = t.state
        c["actions"][i] = t.action
        c["r_env"][i] = t.reward.r_env
        c["r_task"][i] = t.reward.r_task
        c["next_obs"][i] = t.next_state
        c["terminal"][i] = t.terminal
        self.inserts += 1
        if self.size < self.capacity:
            self.size += 1

    def __len__(self) -> int:
        return self.size

    def _order(self) -> np.ndarray:
        """Slot indices from oldest to newest."""
        if self.size < self.capacity:
            return np.arange(self.size)
        start = self.inserts % self.capacity
        return (np.arange(self.capacity) + start) % self.capacity

    def _gather(self, idx) -> TransitionBatch:
        c = self._cols
        return TransitionBatch(c["obs"][idx], c["actions"][idx], c["r_env"][idx],
                               c["r_task"][idx], c["next_obs"][idx], c["terminal"][idx])

    def contents(self) -> TransitionBatch:
        if self._cols is None:
            empty = np.zeros(0)
            return TransitionBatch(empty, empty.astype(np.int64), empty, empty, empty,
                                   empty.astype(bool))
        return self._gather(self._order())

    def transitions(self) -> list[Transition]:
        b = self.contents()
        return [
            Transition(b.obs[i], int(b.actions[i]), DecomposedReward(float(b.r_env[i]), float(b.r_task[i])),
                       b.next_obs[i], bool(b.terminal[i]))
            for i in range(len(b))
        ]

    def sample(self, n: int, rng: RngStream) -> TransitionBatch:
        if self.size == 0:
            raise UsageError("sample() from an empty replay buffer")
        if self.with_replacement:
            idx = rng.gen.integers(self.size, size=n)
        else:
            if n > self.size:
                raise UsageError(f"cannot draw {n} distinct transitions from {self.size}")
            idx = rng.gen.choice(self.size, size=n, replace=False)
        # slots 0..size-1 are exactly the filled ones, before and after wrap-around
        return self._gather(idx)

    def crash_fraction(self) -> float:
        if self.size == 0:
            return 0.0
        return float(np.mean(self.contents().r_env < 0))

    def save(self, path, **meta) -> None:
        b = self.contents()
        write_snapshot(path, "replay", dict(b._asdict()), capacity=self.capacity,
                       inserts=self.inserts, **meta)

    @classmethod
    def load(cls, path) -> "ReplayBuffer":
        header, arrays = read_snapshot(path, kind="replay")
        buf = cls(header["capacity"])
        n = len(arrays["actions"])
        if n > buf.capacity:
            raise UsageError("snapshot holds more transitions than its capacity")
        if n:
            buf._allocate(arrays["obs"][0])
            for k, v in arrays.items():
                buf._cols[k][:n] = v
        buf.size = buf.inserts = n
        return buf


# Seeding strategies ---------------------------------------------------------

@dataclass(frozen=True)
class RandomPolicy:
    def act(self, obs, rng: RngStream) -> int:
        return int(rng.gen.integers(N_ACTIONS))


@dataclass(frozen=True)
class SourceTaskPolicy:
    """Greedy over a frozen phase-1 agent (its combined Q)."""

    q: Any

    def act(self, obs, rng: RngStream) -> int:
        return argmax(self.q.q_list(obs))


@dataclass(frozen=True)
class SurvivalPolicy:
    """Greedy over a frozen survival function."""

    q_env: Any

    def act(self, obs, rng: RngStream) -> int:
        return argmax(self.q_env.q_list(obs))


def make_transition(obs, action, reward, next_obs, next_state,
                    timeout_bootstraps: bool = True) -> Transition:
    terminal = next_state.absorbing or (next_state.terminated and not timeout_bootstraps)
    return Transition(obs, action, reward, next_obs, terminal)


def seed_buffer(strategy, env, task, n: int, rng: RngStream,
                encode: Callable, capacity: int = 10_000,
                timeout_bootstraps: bool = True) -> ReplayBuffer:
    """Fill a fresh buffer with ``n`` transitions gathered under ``strategy``.

    Rewards are labelled with ``task`` (the task about to be learned), not
    the task the seeding policy was trained on.
    """
    if n > capacity:
        raise ConfigError(f"cannot seed {n} transitions into a buffer of {capacity}")
    buf = ReplayBuffer(capacity)
    env_rng = derive_substream(rng, "env-spawn")
    act_rng = derive_substream(rng, "exploration")
    state = None
    obs = None
    while len(buf) < n:
        if state is None or state.terminated:
            state = env.reset(env_rng)
            obs = encode(state)
        action = strategy.act(obs, act_rng)
        nxt, reward, _ = env.step(state, action, task, env_rng)
        nobs = encode(nxt)
        buf.push(make_transition(obs, action, reward, nobs, nxt, timeout_bootstraps))
        state, obs = nxt, nobs
    return buf
