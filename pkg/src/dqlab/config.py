"""Experiment configuration and its strict JSON loader.

Unknown keys are rejected, and every error names the line of the offending
key so that a typo in a hyperparameter cannot pass silently.
"""

from __future__ import annotations

import dataclasses
import json
import re
import typing
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .mdp_core import ConfigError

SCHEMA_VERSION = 1
METHODS = ("naive", "transfer", "decoupled")
LEARNERS = ("tabular-local-window", "mlp-onehot")


@dataclass
class EnvSection:
    kind: str = "gridworld"  # "gridworld" | "cliffwalk"
    width: int = 11
    height: int = 11
    p_obstacle: float = 0.15
    p_collectible: float = 0.05
    collectible_prob_per_type: bool = False
    max_steps: int = 50


@dataclass
class AdamSection:
    lr: float = 0.000025
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class LearnerSection:
    kind: str = "tabular-local-window"
    window: int = 3
    alpha: float = 0.1
    alpha_schedule: str = "constant"
    alpha_min: float = 0.1
    hidden: list = field(default_factory=lambda: [64, 16])
    adam: AdamSection = field(default_factory=AdamSection)


@dataclass
class ExplorationSection:
    epsilon_start: float = 1.0
    epsilon_final: float = 0.1
    # fraction of the phase's step budget (episodes * max_steps)
    anneal_fraction: float = 0.5
    tau: float = -0.5


@dataclass
class ReplaySection:
    capacity: int = 10_000
    batch_size: int = 32
    seed_size: int = 10_000
    with_replacement: bool = True
    train_every: int = 1


@dataclass
class EvalSection:
    every: int = 100
    episodes: int = 30
    fixed_states: int = 100
    set_seed: int = 0
    discounted: bool = False


@dataclass
class OutputSection:
    snapshots: str = "first-seed"  # value functions: "first-seed" | "all" | "none"
    replay_snapshots: bool = True  # seeded phase-2 buffers, every seed
    log_phase1: bool = False


@dataclass
class OracleSection:
    """Settings for ``oracle-check`` (tabular learner vs exact Q*)."""

    episodes: int = 20_000
    alpha_schedule: str = "inverse-visits"
    tolerance: float = 0.05
    start_tolerance: float = 0.02
    min_visits: int = 100
    equivalence_transitions: int = 50_000
    equivalence_tolerance: float = 1e-9


@dataclass
class ExperimentConfig:
    version: int = SCHEMA_VERSION
    env: EnvSection = field(default_factory=EnvSection)
    learner: LearnerSection = field(default_factory=LearnerSection)
    update_mode: str = "independent-max"
    gamma: float = 0.95
    exploration: ExplorationSection = field(default_factory=ExplorationSection)
    replay: ReplaySection = field(default_factory=ReplaySection)
    eval: EvalSection = field(default_factory=EvalSection)
    output: OutputSection = field(default_factory=OutputSection)
    oracle: OracleSection = field(default_factory=OracleSection)
    phase1_episodes: int = 5000
    phase2_episodes: int = 5000
    seeds: list = field(default_factory=lambda: list(range(9)))
    methods: list = field(default_factory=lambda: list(METHODS))
    timeout_bootstraps: bool = True

    def validate(self) -> None:
        if self.version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported config version {self.version}")
        if self.env.kind not in ("gridworld", "cliffwalk"):
            raise ConfigError(f"env.kind must be gridworld or cliffwalk, not {self.env.kind!r}")
        if self.learner.kind not in LEARNERS:
            raise ConfigError(f"learner.kind must be one of {LEARNERS}")
        if self.update_mode not in ("independent-max", "joint-greedy"):
            raise ConfigError("update_mode must be independent-max or joint-greedy")
        if not self.seeds:
            raise ConfigError("seeds must be a nonempty list")
        if self.phase1_episodes < 0 or self.phase2_episodes <= 0:
            raise ConfigError("phase1_episodes must be >= 0 and phase2_episodes > 0")
        bad = [m for m in self.methods if m not in METHODS]
        if bad or not self.methods:
            raise ConfigError(f"methods must be a nonempty subset of {METHODS}, got {self.methods}")
        if not 0 <= self.gamma <= 1:
            raise ConfigError("gamma must lie in [0, 1]")
        if self.replay.seed_size > self.replay.capacity:
            raise ConfigError("replay.seed_size exceeds replay.capacity")
        if self.eval.every <= 0 or self.eval.episodes <= 0:
            raise ConfigError("eval.every and eval.episodes must be positive")
        if self.output.snapshots not in ("first-seed", "all", "none"):
            raise ConfigError("output.snapshots must be first-seed, all or none")

    def to_dict(self) -> dict:
        return asdict(self)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


def _line_of(text: str, key: str) -> int | None:
    if not text:
        return None
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _err(text: str, where: str, key: str, msg: str) -> ConfigError:
    line = _line_of(text, key)
    prefix = f"{where}line {line}: " if line else where
    return ConfigError(f"{prefix}{msg}")


def _build(cls, data, text: str, where: str, prefix: str = ""):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}{prefix or 'config'} must be an object")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        dotted = prefix + key
        if key not in names:
            raise _err(text, where, key, f"unknown key {dotted!r}")
        hint = hints[key]
        if dataclasses.is_dataclass(hint):
            kwargs[key] = _build(hint, value, text, where, dotted + ".")
            continue
        origin = typing.get_origin(hint) or hint
        ok = {
            bool: lambda v: isinstance(v, bool),
            int: lambda v: isinstance(v, int) and not isinstance(v, bool),
            float: lambda v: isinstance(v, (int, float)) and not isinstance(v, bool),
            str: lambda v: isinstance(v, str),
            list: lambda v: isinstance(v, list),
        }.get(origin, lambda v: True)(value)
        if not ok:
            raise _err(text, where, key, f"{dotted!r} expects {origin.__name__}, got {value!r}")
        kwargs[key] = float(value) if origin is float else value
    return cls(**kwargs)


def config_from_dict(data: dict, text: str = "", source: str = "") -> ExperimentConfig:
    where = f"{source}: " if source else ""
    cfg = _build(ExperimentConfig, data, text, where)
    try:
        cfg.validate()
    except ConfigError as exc:
        raise ConfigError(f"{where}{exc}") from None
    return cfg


def load_config(path) -> ExperimentConfig:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    return config_from_dict(data, text, str(path))
