"""Deterministic cliff-walking world with decoupled reward routing.

Falling into the cliff is an environment punishment (r_env = -1); reaching
the goal is the task reward (r_task = +1). There is no per-step penalty.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .mdp_core import (
    ACTION_DELTAS,
    ConfigError,
    DecomposedReward,
    UsageError,
    render_ascii,
)

CLIFF_REWARD = DecomposedReward(-1.0, 0.0)
GOAL_REWARD = DecomposedReward(0.0, 1.0)
NO_REWARD = DecomposedReward(0.0, 0.0)


def _default_cliff(width: int = 12) -> frozenset:
    return frozenset((0, c) for c in range(1, width - 1))


@dataclass(frozen=True)
class CliffConfig:
    width: int = 12
    height: int = 4
    start: tuple[int, int] = (0, 0)
    goal: tuple[int, int] = (0, 11)
    cliff: frozenset = field(default_factory=_default_cliff)
    r_goal: float = 1.0
    r_cliff: float = -1.0
    max_steps: int = 100

    @classmethod
    def classic(cls, width: int = 12, height: int = 4, **kw) -> "CliffConfig":
        """Bottom-left start, bottom-right goal, cliff strictly between."""
        return cls(
            width=width,
            height=height,
            start=(0, 0),
            goal=(0, width - 1),
            cliff=_default_cliff(width),
            **kw,
        )

    def validate(self) -> None:
        cells = [self.start, self.goal, *self.cliff]
        for r, c in cells:
            if not (0 <= r < self.height and 0 <= c < self.width):
                raise ConfigError(f"cell {(r, c)} outside the {self.height}x{self.width} grid")
        if self.start == self.goal:
            raise ConfigError("start and goal coincide")
        if self.start in self.cliff or self.goal in self.cliff:
            raise ConfigError("start/goal inside the cliff")
        if self.r_cliff > 0 or self.r_goal < 0:
            raise ConfigError("cliff reward must be <= 0 and goal reward >= 0")


@dataclass(frozen=True)
class CliffState:
    agent_pos: tuple[int, int]
    steps_elapsed: int = 0
    terminated: bool = False
    outcome: str | None = None  # "crash" | "goal" | "timeout"

    @property
    def absorbing(self) -> bool:
        return self.outcome in ("crash", "goal")


def reset(config: CliffConfig) -> CliffState:
    config.validate()
    return CliffState(config.start)


def step(state: CliffState, action: int, config: CliffConfig):
    if state.terminated:
        raise UsageError("step() on a terminated episode")
    r, c = state.agent_pos
    dr, dc = ACTION_DELTAS[action]
    nr, nc = r + dr, c + dc
    if not (0 <= nr < config.height and 0 <= nc < config.width):
        nr, nc = r, c
    pos = (nr, nc)
    steps = state.steps_elapsed + 1
    if pos in config.cliff:
        reward, outcome = DecomposedReward(config.r_cliff, 0.0), "crash"
    elif pos == config.goal:
        reward, outcome = DecomposedReward(0.0, config.r_goal), "goal"
    else:
        reward, outcome = NO_REWARD, None
    if outcome is None and steps >= config.max_steps:
        outcome = "timeout"
    nxt = CliffState(pos, steps, outcome is not None, outcome)
    return nxt, reward, nxt.terminated


def enumerate_states(config: CliffConfig) -> list[CliffState]:
    """All non-terminal positions, row-major (row 0 first)."""
    config.validate()
    return [
        CliffState((r, c))
        for r in range(config.height)
        for c in range(config.width)
        if (r, c) not in config.cliff and (r, c) != config.goal
    ]


class CliffWalk:
    name = "cliffwalk"

    def __init__(self, config: CliffConfig | None = None):
        self.config = config or CliffConfig()
        self.config.validate()

    @property
    def n_cells(self) -> int:
        return self.config.width * self.config.height

    def reset(self, rng=None) -> CliffState:
        return reset(self.config)

    def step(self, state: CliffState, action: int, task=None, rng=None):
        return step(state, action, self.config)

    def encode(self, state: CliffState) -> int:
        r, c = state.agent_pos
        return r * self.config.width + c


def render(state: CliffState, config: CliffConfig) -> str:
    def glyph(r, c):
        if (r, c) == state.agent_pos:
            return "A"
        if (r, c) in config.cliff:
            return "#"
        if (r, c) == config.goal:
            return "G"
        return "."

    return render_ascii(config.height, config.width, glyph)
