"""11x11 collect-and-avoid gridworld.

Cells hold one of four codes (empty, obstacle, collectible of type 0 or 1);
the agent position is tracked separately. Walking into an obstacle ends the
episode with an environment reward of -1. Picking up a collectible removes it
and respawns one of the same type on a random empty cell; only the desired
type pays a task reward of +1. Walking off the grid leaves the agent in place.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .mdp_core import (
    ACTION_DELTAS,
    ConfigError,
    DecomposedReward,
    RngStream,
    UsageError,
    render_ascii,
)

EMPTY, OBSTACLE, COLLECT0, COLLECT1 = 0, 1, 2, 3
N_CODES = 4
GLYPHS = {EMPTY: ".", OBSTACLE: "#", COLLECT0: "0", COLLECT1: "1"}

CRASH_REWARD = DecomposedReward(-1.0, 0.0)
COLLECT_REWARD = DecomposedReward(0.0, 1.0)
NO_REWARD = DecomposedReward(0.0, 0.0)


@dataclass(frozen=True)
class GridConfig:
    width: int = 11
    height: int = 11
    p_obstacle: float = 0.15
    p_collectible: float = 0.05
    # False: p_collectible is the total over both types (0.025 each).
    collectible_prob_per_type: bool = False
    n_collectible_types: int = 2
    max_steps: int = 50

    @property
    def n_cells(self) -> int:
        return self.width * self.height

    @property
    def p_collectible_total(self) -> float:
        if self.collectible_prob_per_type:
            return self.p_collectible * self.n_collectible_types
        return self.p_collectible

    def validate(self) -> None:
        if self.width < 1 or self.height < 1 or self.n_cells < 2:
            raise ConfigError("grid needs at least two cells")
        if self.n_collectible_types != 2:
            raise ConfigError("exactly two collectible types are supported")
        if not (0.0 <= self.p_obstacle <= 1.0 and 0.0 <= self.p_collectible <= 1.0):
            raise ConfigError("spawn probabilities must lie in [0, 1]")
        if self.p_obstacle + self.p_collectible_total >= 1.0:
            raise ConfigError(
                "p_obstacle + collectible probability must stay below 1 "
                "so that an empty cell can exist"
            )
        if self.max_steps < 1:
            raise ConfigError("max_steps must be positive")


@dataclass(frozen=True)
class TaskSpec:
    desired_type: int = 0

    def __post_init__(self):
        if self.desired_type not in (0, 1):
            raise ConfigError(f"desired_type must be 0 or 1, got {self.desired_type}")


@dataclass(frozen=True)
class GridState:
    """Immutable snapshot. ``cells`` is row-major with row 0 at the bottom."""

    width: int
    height: int
    agent_pos: tuple[int, int]
    cells: bytes
    steps_elapsed: int = 0
    terminated: bool = False
    outcome: str | None = None  # "crash" | "timeout" once terminated

    @property
    def agent_index(self) -> int:
        return self.agent_pos[0] * self.width + self.agent_pos[1]

    @property
    def absorbing(self) -> bool:
        return self.outcome == "crash"

    def grid(self) -> np.ndarray:
        return np.frombuffer(self.cells, dtype=np.uint8).reshape(self.height, self.width)

    def counts(self) -> tuple[int, int, int]:
        """(#obstacles, #type-0, #type-1)."""
        return (
            self.cells.count(OBSTACLE),
            self.cells.count(COLLECT0),
            self.cells.count(COLLECT1),
        )


def reset(config: GridConfig, rng: RngStream) -> GridState:
    config.validate()
    n = config.n_cells
    p_obs = config.p_obstacle
    p_col = config.p_collectible_total
    gen = rng.gen
    while True:
        agent = int(gen.integers(n))
        u = gen.random(n)
        codes = np.full(n, EMPTY, dtype=np.uint8)
        codes[u < p_obs] = OBSTACLE
        if p_col > 0:
            is_col = (u >= p_obs) & (u < p_obs + p_col)
            # reuse the same uniform to pick the type: uniform over the two types
            kind = np.minimum(((u - p_obs) / p_col * 2).astype(np.int64), 1)
            codes[is_col] = COLLECT0 + kind[is_col]
        codes[agent] = EMPTY
        if np.count_nonzero(codes == EMPTY) >= 2:
            break
    return GridState(
        width=config.width,
        height=config.height,
        agent_pos=divmod(agent, config.width),
        cells=codes.tobytes(),
    )


def step(state: GridState, action: int, task: TaskSpec, rng: RngStream, max_steps: int = 50):
    """Advance one step; returns ``(next_state, DecomposedReward, terminal)``."""
    if state.terminated:
        raise UsageError("step() on a terminated episode")
    w, h = state.width, state.height
    r, c = state.agent_pos
    dr, dc = ACTION_DELTAS[action]
    nr, nc = r + dr, c + dc
    if not (0 <= nr < h and 0 <= nc < w):
        nr, nc = r, c
    idx = nr * w + nc
    cells = state.cells
    target = cells[idx]
    steps = state.steps_elapsed + 1
    reward = NO_REWARD
    outcome = None

    if target == OBSTACLE:
        reward = CRASH_REWARD
        outcome = "crash"
    elif target == COLLECT0 or target == COLLECT1:
        kind = target - COLLECT0
        buf = bytearray(cells)
        buf[idx] = EMPTY
        free = [i for i, v in enumerate(buf) if v == EMPTY and i != idx]
        buf[free[int(rng.gen.integers(len(free)))]] = target
        cells = bytes(buf)
        if kind == task.desired_type:
            reward = COLLECT_REWARD
    if outcome is None and steps >= max_steps:
        outcome = "timeout"

    nxt = GridState(w, h, (nr, nc), cells, steps, outcome is not None, outcome)
    return nxt, reward, nxt.terminated


class GridWorld:
    """Config-bound wrapper so harness code can treat both worlds alike."""

    name = "gridworld"

    def __init__(self, config: GridConfig | None = None):
        self.config = config or GridConfig()
        self.config.validate()

    def reset(self, rng: RngStream) -> GridState:
        return reset(self.config, rng)

    def step(self, state: GridState, action: int, task: TaskSpec, rng: RngStream):
        return step(state, action, task, rng, self.config.max_steps)


def encode_onehot(state: GridState) -> np.ndarray:
    """Four flattened channels: agent, obstacle, type-0, type-1."""
    n = len(state.cells)
    codes = np.frombuffer(state.cells, dtype=np.uint8)
    out = np.zeros((N_CODES, n))
    out[codes, np.arange(n)] = 1.0
    out[0] = 0.0  # channel 0 holds EMPTY cells until replaced by the agent bit
    out[0, state.agent_index] = 1.0
    return out.ravel()


@lru_cache(maxsize=None)
def _window_table(width: int, height: int, k: int) -> tuple[tuple[int, ...], ...]:
    """For each agent cell, the neighbour cell indices (-1 = off-grid)."""
    half = k // 2
    table = []
    for r in range(height):
        for c in range(width):
            nbrs = []
            # top row of the window first, matching the ASCII rendering
            for dr in range(half, -half - 1, -1):
                for dc in range(-half, half + 1):
                    if dr == 0 and dc == 0:
                        continue
                    rr, cc = r + dr, c + dc
                    nbrs.append(rr * width + cc if 0 <= rr < height and 0 <= cc < width else -1)
            table.append(tuple(nbrs))
    return tuple(table)


def local_table_size(k: int) -> int:
    return N_CODES ** (k * k - 1)


def encode_local(state: GridState, window: int = 3) -> int:
    """Base-4 index of the egocentric ``window`` x ``window`` patch.

    The first neighbour (top-left) is the most significant digit, off-grid
    cells read as obstacles and the centre cell is left out.
    """
    if window % 2 == 0 or window < 1:
        raise ConfigError(f"window must be odd and positive, got {window}")
    if window > min(state.width, state.height):
        raise ConfigError("window larger than the grid")
    cells = state.cells
    index = 0
    for j in _window_table(state.width, state.height, window)[state.agent_index]:
        index = index * 4 + (cells[j] if j >= 0 else OBSTACLE)
    return index


def render(state: GridState) -> str:
    ar, ac = state.agent_pos
    cells = state.cells
    w = state.width

    def glyph(r, c):
        if (r, c) == (ar, ac):
            return "A"
        return GLYPHS[cells[r * w + c]]

    return render_ascii(state.height, w, glyph)
