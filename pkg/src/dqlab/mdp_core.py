"""Shared episodic-MDP types: actions, decomposed rewards, transitions, seeded streams."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, NamedTuple

import numpy as np


class ConfigError(ValueError):
    """Invalid configuration (bad probabilities, unknown labels, even window...)."""


class UsageError(RuntimeError):
    """An operation was called in a state that does not allow it."""


class NumericalError(ArithmeticError):
    """Non-finite values or a solver that failed to converge."""


class ActionId(enum.IntEnum):
    UP = 0
    DOWN = 1
    LEFT = 2
    RIGHT = 3


N_ACTIONS = len(ActionId)

# (d_row, d_col); row 0 is the bottom row in both shipped worlds
ACTION_DELTAS = ((1, 0), (-1, 0), (0, -1), (0, 1))


class DecomposedReward(NamedTuple):
    r_env: float = 0.0
    r_task: float = 0.0

    @property
    def total(self) -> float:
        return self.r_env + self.r_task


class Transition(NamedTuple):
    """One interaction step.

    ``terminal`` means the next state is absorbing: learners drop the
    bootstrap term. A horizon timeout is *not* terminal in this sense.
    """

    state: Any
    action: int
    reward: DecomposedReward
    next_state: Any
    terminal: bool


@dataclass
class EpisodeTrace:
    transitions: list[Transition] = field(default_factory=list)

    @property
    def step_count(self) -> int:
        return len(self.transitions)

    def append(self, t: Transition) -> None:
        if self.transitions and self.transitions[-1].terminal:
            raise UsageError("cannot extend a trace past its terminal transition")
        self.transitions.append(t)

    def __len__(self) -> int:
        return len(self.transitions)

    def __iter__(self):
        return iter(self.transitions)


def discounted_return(trace, gamma: float) -> float:
    """Sum of gamma**t times the total (env + task) reward of step t."""
    total = 0.0
    discount = 1.0
    for t in trace:
        total += discount * (t.reward.r_env + t.reward.r_task)
        discount *= gamma
    return total


# Stable codes: changing them changes every derived stream.
SUBSTREAMS = {
    "env-spawn": 1,
    "exploration": 2,
    "replay-sampling": 3,
    "weight-init": 4,
    "evaluation": 5,
    "eval-set": 6,
}


class RngStream:
    """A seeded numpy Generator addressed by ``(seed, path)``.

    Two streams with the same seed and path produce the same draws; the path
    keeps children independent of each other and of the parent.
    """

    def __init__(self, seed: int, path: tuple[int, ...] = ()):
        self.seed = int(seed)
        self.path = tuple(int(p) for p in path)
        ss = np.random.SeedSequence(self.seed, spawn_key=self.path)
        self.gen = np.random.Generator(np.random.PCG64(ss))

    def fork(self, *keys: int) -> "RngStream":
        return RngStream(self.seed, self.path + tuple(keys))

    def random(self) -> float:
        return self.gen.random()

    def integers(self, high: int, size=None):
        return self.gen.integers(high, size=size)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, path={self.path})"


def derive_substream(rng: RngStream, label: str) -> RngStream:
    try:
        code = SUBSTREAMS[label]
    except KeyError:
        raise ConfigError(f"unknown substream label {label!r}") from None
    # offset keeps label codes disjoint from the small ints used by fork()
    return rng.fork(1000 + code)


def render_ascii(height: int, width: int, char_at) -> str:
    """Top row first; ``char_at(row, col)`` gives the glyph for one cell."""
    lines = []
    for r in range(height - 1, -1, -1):
        lines.append("".join(char_at(r, c) for c in range(width)))
    return "\n".join(lines) + "\n"


class TransitionBatch(NamedTuple):
    """Struct-of-arrays view of several transitions (what learners consume)."""

    obs: np.ndarray
    actions: np.ndarray
    r_env: np.ndarray
    r_task: np.ndarray
    next_obs: np.ndarray
    terminal: np.ndarray

    @classmethod
    def from_transitions(cls, transitions) -> "TransitionBatch":
        ts = list(transitions)
        return cls(
            obs=np.asarray([t.state for t in ts]),
            actions=np.asarray([int(t.action) for t in ts], dtype=np.int64),
            r_env=np.asarray([t.reward.r_env for t in ts], dtype=float),
            r_task=np.asarray([t.reward.r_task for t in ts], dtype=float),
            next_obs=np.asarray([t.next_state for t in ts]),
            terminal=np.asarray([t.terminal for t in ts], dtype=bool),
        )

    def __len__(self) -> int:
        return len(self.actions)

    @property
    def total(self) -> np.ndarray:
        return self.r_env + self.r_task
