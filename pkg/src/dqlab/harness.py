"""Two-phase experiment: learn task 0, switch to task 1, compare three methods.

* naive -- fresh value function, replay seeded by a random policy, annealed
  epsilon-greedy.
* transfer -- phase-1 value function copied and trained further, replay
  seeded by the phase-1 greedy policy, always greedy.
* decoupled -- phase-1 survival function frozen and reused, fresh task
  function, replay seeded by the survival policy, epsilon-greedy restricted
  to actions the survival function deems safe.

Every (method, seed) run draws from its own RNG substreams, so runs are
independent and their output does not depend on execution order.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import io
import logging
import time
from dataclasses import astuple, dataclass, field, fields
from typing import Callable

import numpy as np

from . import gridworld
from .cliffwalk import CliffConfig, CliffWalk
from .config import ExperimentConfig
from .exploration import (
    EpsGreedy,
    ExplorationSchedule,
    Greedy,
    SafeEpsGreedy,
    argmax,
    choose,
    policy_epsilon,
    safe_greedy,
)
from .gridworld import GridConfig, GridWorld, TaskSpec
from .mdp_core import (
    NumericalError,
    RngStream,
    UsageError,
    derive_substream,
)
from .qcore import (
    AdamConfig,
    DecomposedQ,
    MlpApproximator,
    QTable,
    decomposed_update,
    q_learning_update,
    xavier_init,
)
from .replay import (
    RandomPolicy,
    ReplayBuffer,
    SourceTaskPolicy,
    SurvivalPolicy,
    make_transition,
    seed_buffer,
)

log = logging.getLogger(__name__)

CSV_HEADER = ("method,seed,phase,episode,mean_return,mean_length,crash_rate,"
              "fixed_state_mean_q,epsilon,wall_clock_ms")
LINEAGE_CODES = {"monolithic": 1, "decoupled": 2}
METHOD_CODES = {"naive": 1, "transfer": 2, "decoupled": 3}
PHASE1_TASK = TaskSpec(0)
PHASE2_TASK = TaskSpec(1)


@dataclass
class MetricsRow:
    method: str
    seed: int
    phase: int
    episode: int
    mean_return: float
    mean_length: float
    crash_rate: float
    fixed_state_mean_q: float
    epsilon: float
    wall_clock_ms: float = 0.0

    def csv_fields(self) -> list[str]:
        out = []
        for v in astuple(self):
            out.append(format(v, ".10g") if isinstance(v, float) else str(v))
        return out


# World and learner construction --------------------------------------------

def make_env(cfg: ExperimentConfig):
    e = cfg.env
    if e.kind == "gridworld":
        return GridWorld(GridConfig(width=e.width, height=e.height, p_obstacle=e.p_obstacle,
                                    p_collectible=e.p_collectible,
                                    collectible_prob_per_type=e.collectible_prob_per_type,
                                    max_steps=e.max_steps))
    return CliffWalk(CliffConfig.classic(width=e.width, height=e.height, max_steps=e.max_steps))


@dataclass
class Encoder:
    encode: Callable
    size: int  # table rows, or input width for a network
    name: str


def make_encoder(env, cfg: ExperimentConfig) -> Encoder:
    tabular = cfg.learner.kind == "tabular-local-window"
    if isinstance(env, GridWorld):
        if tabular:
            k = cfg.learner.window
            return Encoder(lambda s: gridworld.encode_local(s, k), gridworld.local_table_size(k),
                           f"local{k}")
        return Encoder(gridworld.encode_onehot, gridworld.N_CODES * env.config.n_cells, "onehot")
    if tabular:
        return Encoder(env.encode, env.n_cells, "position")
    n = env.n_cells

    def onehot(s):
        v = np.zeros(n)
        v[env.encode(s)] = 1.0
        return v

    return Encoder(onehot, n, "position-onehot")


def new_value_function(cfg: ExperimentConfig, enc: Encoder, rng: RngStream):
    lc = cfg.learner
    if lc.kind == "tabular-local-window":
        return QTable(enc.size, alpha=lc.alpha, gamma=cfg.gamma, alpha_schedule=lc.alpha_schedule,
                      alpha_min=lc.alpha_min, encoding=enc.name)
    adam = AdamConfig(lr=lc.adam.lr, beta1=lc.adam.beta1, beta2=lc.adam.beta2, eps=lc.adam.eps,
                      batch_size=cfg.replay.batch_size)
    net = MlpApproximator(enc.size, tuple(lc.hidden), adam=adam, gamma=cfg.gamma, encoding=enc.name)
    xavier_init(net, rng)
    return net


# Agents ---------------------------------------------------------------------

class MonolithicAgent:
    lineage = "monolithic"

    def __init__(self, q):
        self.q = q

    def values(self, obs):
        return self.q.q_list(obs), None

    def greedy(self, obs) -> int:
        return argmax(self.q.q_list(obs))

    def predict(self, obs_batch) -> np.ndarray:
        return self.q.predict(obs_batch)

    def learn(self, batch) -> None:
        q_learning_update(self.q, batch)

    def copy(self) -> "MonolithicAgent":
        return MonolithicAgent(self.q.copy())


class DecoupledAgent:
    """Survival + task functions. ``train_env=False`` freezes the survival side."""

    lineage = "decoupled"

    def __init__(self, dq: DecomposedQ, tau: float, train_env: bool = True):
        self.dq = dq
        self.tau = tau
        self.train_env = train_env

    def values(self, obs):
        env_v = self.dq.q_env.q_list(obs)
        task_v = self.dq.q_task.q_list(obs)
        return [e + t for e, t in zip(env_v, task_v)], env_v

    def greedy(self, obs) -> int:
        combined, env_v = self.values(obs)
        if self.train_env:
            return argmax(combined)
        return safe_greedy(combined, env_v, self.tau)

    def predict(self, obs_batch) -> np.ndarray:
        return self.dq.predict(obs_batch)

    def learn(self, batch) -> None:
        decomposed_update(self.dq, batch, train_env=self.train_env)


def _check_finite(agent) -> None:
    fns = [agent.q] if isinstance(agent, MonolithicAgent) else [agent.dq.q_env, agent.dq.q_task]
    for f in fns:
        arr = f.values if isinstance(f, QTable) else f.get_flat()
        if not np.isfinite(arr).all():
            raise NumericalError("value function diverged (non-finite entries)")


# Metrics --------------------------------------------------------------------

@dataclass
class FixedEvalSet:
    states: list

    def content_hash(self) -> str:
        """Git-style blob hash of the serialised states."""
        body = b"".join(_state_bytes(s) for s in self.states)
        return hashlib.sha1(b"blob %d\0" % len(body) + body).hexdigest()


def _state_bytes(s) -> bytes:
    r, c = s.agent_pos
    cells = getattr(s, "cells", b"")
    return bytes([r, c]) + cells


def make_eval_set(env, cfg: ExperimentConfig) -> FixedEvalSet:
    rng = derive_substream(RngStream(cfg.eval.set_seed), "eval-set")
    return FixedEvalSet([env.reset(rng) for _ in range(cfg.eval.fixed_states)])


def eval_fixed_states(agent, eval_set: FixedEvalSet, encode: Callable) -> float:
    """Mean over the frozen states of max_a Q (combined Q for decoupled agents)."""
    if not eval_set.states:
        return 0.0
    obs = np.asarray([encode(s) for s in eval_set.states])
    return float(agent.predict(obs).max(axis=1).mean())


def eval_policy(agent, env, task, n_episodes: int, rng: RngStream, encode: Callable,
                gamma: float | None = None):
    """Greedy roll-outs without learning: (mean_return, mean_length, crash_rate).

    The return is the undiscounted episode sum unless ``gamma`` is given.
    """
    if n_episodes <= 0:
        raise UsageError("n_episodes must be positive")
    env_rng = derive_substream(rng, "env-spawn")
    returns, lengths, crashes = [], [], 0
    for _ in range(n_episodes):
        state = env.reset(env_rng)
        total, disc, steps = 0.0, 1.0, 0
        while not state.terminated:
            state, reward, _ = env.step(state, agent.greedy(encode(state)), task, env_rng)
            total += disc * (reward.r_env + reward.r_task)
            if gamma is not None:
                disc *= gamma
            steps += 1
        returns.append(total)
        lengths.append(steps)
        crashes += state.outcome == "crash"
    return float(np.mean(returns)), float(np.mean(lengths)), crashes / n_episodes


def eval_points(episodes: int, every: int) -> list[int]:
    pts = list(range(0, episodes, every))
    if not pts or pts[-1] != episodes:
        pts.append(episodes)
    return pts


# Training loop --------------------------------------------------------------

@dataclass
class ActionRecord:
    obs: object
    action: int
    explored: bool


def _train(agent, env, task, policy, buffer: ReplayBuffer, episodes: int, cfg: ExperimentConfig,
           rng: RngStream, encode: Callable, on_eval: Callable | None = None,
           action_log: list | None = None, outcomes: list | None = None) -> int:
    """Run ``episodes`` learning episodes; returns the number of env steps taken.

    ``outcomes`` (if given) receives each training episode's end state outcome.
    """
    env_rng = derive_substream(rng, "env-spawn")
    explore_rng = derive_substream(rng, "exploration")
    replay_rng = derive_substream(rng, "replay-sampling")
    batch_size = cfg.replay.batch_size
    train_every = cfg.replay.train_every
    tb = cfg.timeout_bootstraps
    evals = set(eval_points(episodes, cfg.eval.every)) if on_eval else set()
    t = 0
    for ep in range(episodes):
        if ep in evals:
            _check_finite(agent)
            on_eval(ep, t)
        state = env.reset(env_rng)
        obs = encode(state)
        while True:
            combined, env_v = agent.values(obs)
            action, explored = choose(policy, combined, env_v, t, explore_rng)
            if action_log is not None:
                action_log.append(ActionRecord(obs, action, explored))
            nxt, reward, done = env.step(state, action, task, env_rng)
            nobs = encode(nxt)
            buffer.push(make_transition(obs, action, reward, nobs, nxt, tb))
            t += 1
            if len(buffer) >= batch_size and t % train_every == 0:
                agent.learn(buffer.sample(batch_size, replay_rng))
            if done:
                if outcomes is not None:
                    outcomes.append(nxt.outcome)
                break
            state, obs = nxt, nobs
    _check_finite(agent)
    if on_eval and episodes in evals:
        on_eval(episodes, t)
    return t


def _schedule(cfg: ExperimentConfig, episodes: int) -> ExplorationSchedule:
    x = cfg.exploration
    budget = episodes * cfg.env.max_steps
    return ExplorationSchedule(x.epsilon_start, x.epsilon_final,
                               int(round(x.anneal_fraction * budget)))


class _Recorder:
    def __init__(self, cfg, env, enc, eval_set, agent, policy, method, seed, phase, task, rows):
        self.__dict__.update(locals())
        self.start = time.perf_counter()
        self.base = RngStream(seed).fork(3, phase)
        self.point = 0

    def __call__(self, episode: int, t: int) -> None:
        cfg = self.cfg
        rng = derive_substream(self.base.fork(self.point), "evaluation")
        self.point += 1
        ret, length, crash = eval_policy(self.agent, self.env, self.task, cfg.eval.episodes, rng,
                                         self.enc.encode,
                                         cfg.gamma if cfg.eval.discounted else None)
        self.rows.append(MetricsRow(
            method=self.method, seed=self.seed, phase=self.phase, episode=episode,
            mean_return=ret, mean_length=length, crash_rate=crash,
            fixed_state_mean_q=eval_fixed_states(self.agent, self.eval_set, self.enc.encode),
            epsilon=policy_epsilon(self.policy, t),
            wall_clock_ms=round((time.perf_counter() - self.start) * 1000.0, 3),
        ))


@dataclass
class Phase1Artifacts:
    lineage: str
    seed: int
    agent: object
    buffer: ReplayBuffer
    eval_set: FixedEvalSet
    rows: list = field(default_factory=list)
    steps: int = 0
    outcomes: list = field(default_factory=list)  # per training episode

    def training_crash_rate(self, first: int | None = None, last: int | None = None) -> float:
        eps = self.outcomes[:first] if first is not None else self.outcomes
        eps = eps[-last:] if last is not None else eps
        return sum(o == "crash" for o in eps) / len(eps) if eps else 0.0


@dataclass
class Phase2Result:
    method: str
    seed: int
    agent: object
    buffer: ReplayBuffer
    seeded_buffer_crash_fraction: float
    rows: list
    steps: int
    action_log: list | None = None
    seeded_buffer: ReplayBuffer | None = None


def run_phase1(cfg: ExperimentConfig, seed: int, lineage: str = "monolithic",
               env=None, eval_set: FixedEvalSet | None = None) -> Phase1Artifacts:
    """Train on task 0 from scratch with annealed epsilon-greedy exploration."""
    if lineage not in LINEAGE_CODES:
        raise UsageError(f"unknown lineage {lineage!r}")
    env = env or make_env(cfg)
    enc = make_encoder(env, cfg)
    eval_set = eval_set or make_eval_set(env, cfg)
    rng = RngStream(seed).fork(1, LINEAGE_CODES[lineage])
    w_rng = derive_substream(rng, "weight-init")
    if lineage == "monolithic":
        agent = MonolithicAgent(new_value_function(cfg, enc, w_rng))
    else:
        dq = DecomposedQ(new_value_function(cfg, enc, w_rng), new_value_function(cfg, enc, w_rng),
                         cfg.update_mode)
        agent = DecoupledAgent(dq, cfg.exploration.tau, train_env=True)
    policy = EpsGreedy(_schedule(cfg, cfg.phase1_episodes))
    buffer = ReplayBuffer(cfg.replay.capacity, cfg.replay.with_replacement)
    rows: list = []
    rec = None
    if cfg.output.log_phase1:
        rec = _Recorder(cfg, env, enc, eval_set, agent, policy, lineage, seed, 1, PHASE1_TASK, rows)
    outcomes: list = []
    steps = _train(agent, env, PHASE1_TASK, policy, buffer, cfg.phase1_episodes, cfg, rng,
                   enc.encode, rec, outcomes=outcomes)
    return Phase1Artifacts(lineage, seed, agent, buffer, eval_set, rows, steps, outcomes)


def run_phase2(method: str, artifacts: Phase1Artifacts, cfg: ExperimentConfig, seed: int,
               env=None, record_actions: bool = False,
               keep_seeded_buffer: bool = False) -> Phase2Result:
    """Train on task 1 with ``method``, starting from ``artifacts``."""
    if method == "transfer" and artifacts.lineage != "monolithic":
        raise UsageError("transfer needs monolithic phase-1 artifacts")
    if method == "decoupled" and artifacts.lineage != "decoupled":
        raise UsageError("decoupled needs decoupled phase-1 artifacts")
    if method not in METHOD_CODES:
        raise UsageError(f"unknown method {method!r}")
    env = env or make_env(cfg)
    enc = make_encoder(env, cfg)
    rng = RngStream(seed).fork(2, METHOD_CODES[method])
    seed_rng = rng.fork(0)
    sched = _schedule(cfg, cfg.phase2_episodes)
    n_seed = cfg.replay.seed_size
    if method == "naive":
        agent = MonolithicAgent(new_value_function(cfg, enc, derive_substream(rng, "weight-init")))
        strategy = RandomPolicy()
        policy = EpsGreedy(sched)
    elif method == "transfer":
        agent = artifacts.agent.copy()
        strategy = SourceTaskPolicy(artifacts.agent.q.copy())
        policy = Greedy()
    else:
        q_env = artifacts.agent.dq.q_env  # shared, never written in phase 2
        dq = DecomposedQ(q_env, new_value_function(cfg, enc, derive_substream(rng, "weight-init")),
                         cfg.update_mode)
        agent = DecoupledAgent(dq, cfg.exploration.tau, train_env=False)
        strategy = SurvivalPolicy(q_env)
        policy = SafeEpsGreedy(sched, cfg.exploration.tau)
    buffer = seed_buffer(strategy, env, PHASE2_TASK, n_seed, seed_rng, enc.encode,
                         capacity=cfg.replay.capacity, timeout_bootstraps=cfg.timeout_bootstraps)
    buffer.with_replacement = cfg.replay.with_replacement
    seeded_crash = buffer.crash_fraction()
    seeded = copy.deepcopy(buffer) if keep_seeded_buffer else None
    rows: list = []
    rec = _Recorder(cfg, env, enc, artifacts.eval_set, agent, policy, method, seed, 2,
                    PHASE2_TASK, rows)
    action_log = [] if record_actions else None
    steps = _train(agent, env, PHASE2_TASK, policy, buffer, cfg.phase2_episodes, cfg, rng,
                   enc.encode, rec, action_log)
    log.info("phase 2 %s seed %d: %d steps, final return %.3f", method, seed, steps,
             rows[-1].mean_return)
    return Phase2Result(method, seed, agent, buffer, seeded_crash, rows, steps, action_log, seeded)


@dataclass
class SeedRun:
    seed: int
    phase1: dict
    phase2: dict
    rows: list


def run_seed(cfg: ExperimentConfig, seed: int, record_actions: bool = False,
             keep_seeded_buffers: bool = False) -> SeedRun:
    env = make_env(cfg)
    eval_set = make_eval_set(env, cfg)
    phase1 = {}
    if "transfer" in cfg.methods or "naive" in cfg.methods:
        phase1["monolithic"] = run_phase1(cfg, seed, "monolithic", env, eval_set)
    if "decoupled" in cfg.methods:
        phase1["decoupled"] = run_phase1(cfg, seed, "decoupled", env, eval_set)
    rows = [r for a in phase1.values() for r in a.rows]
    phase2 = {}
    for method in cfg.methods:
        arts = phase1["decoupled" if method == "decoupled" else "monolithic"]
        res = run_phase2(method, arts, cfg, seed, env, record_actions, keep_seeded_buffers)
        phase2[method] = res
        rows += res.rows
    return SeedRun(seed, phase1, phase2, rows)


def _seed_worker(args):
    cfg, seed = args
    run = run_seed(cfg, seed)
    return run.rows


def run_experiment(cfg: ExperimentConfig, parallel: int = 1) -> list[MetricsRow]:
    """All seeds and methods; rows sorted by (method, seed, phase, episode)."""
    cfg.validate()
    jobs = [(cfg, s) for s in cfg.seeds]
    if parallel > 1 and len(jobs) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=parallel) as pool:
            chunks = list(pool.map(_seed_worker, jobs))
    else:
        chunks = [_seed_worker(j) for j in jobs]
    rows = [r for c in chunks for r in c]
    return sort_rows(rows)


def sort_rows(rows: list[MetricsRow]) -> list[MetricsRow]:
    order = {m: i for i, m in enumerate(("monolithic", "naive", "transfer", "decoupled"))}
    return sorted(rows, key=lambda r: (order.get(r.method, 99), r.method, r.seed, r.phase, r.episode))


# CSV and aggregation --------------------------------------------------------

def rows_to_csv(rows: list[MetricsRow], include_wall_clock: bool = True) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = CSV_HEADER.split(",")
    w.writerow(header if include_wall_clock else header[:-1])
    for r in rows:
        f = r.csv_fields()
        w.writerow(f if include_wall_clock else f[:-1])
    return buf.getvalue()


def csv_content_hash(text: str) -> str:
    """SHA-256 of the CSV with the wall_clock_ms column dropped."""
    lines = [",".join(line.split(",")[:-1]) for line in text.splitlines()]
    return hashlib.sha256("\n".join(lines).encode()).hexdigest()


_FIELD_TYPES = {f.name: f.type for f in fields(MetricsRow)}


def read_metrics_csv(path) -> list[MetricsRow]:
    """Parse a metrics CSV; raises ValueError naming the offending line."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: line 1: empty file") from None
        if ",".join(header) != CSV_HEADER:
            raise ValueError(f"{path}: line 1: unexpected header {','.join(header)!r}")
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) != len(header):
                raise ValueError(f"{path}: line {lineno}: expected {len(header)} fields, got {len(rec)}")
            try:
                rows.append(MetricsRow(rec[0], int(rec[1]), int(rec[2]), int(rec[3]),
                                       *(float(x) for x in rec[4:])))
            except ValueError as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from None
    return rows


METRIC_NAMES = ("mean_return", "mean_length", "crash_rate", "fixed_state_mean_q", "epsilon")


@dataclass
class Curve:
    method: str
    phase: int
    episodes: np.ndarray
    mean: np.ndarray
    sd: np.ndarray
    n_seeds: int


def aggregate_seeds(rows: list[MetricsRow], metric: str = "mean_return",
                    phase: int | None = None) -> dict[str, Curve]:
    """Pointwise mean and sample standard deviation across seeds, per method."""
    if metric not in METRIC_NAMES:
        raise ValueError(f"unknown metric {metric!r}")
    groups: dict = {}
    for r in rows:
        if phase is not None and r.phase != phase:
            continue
        groups.setdefault((r.method, r.phase), {}).setdefault(r.seed, {})[r.episode] = getattr(r, metric)
    out = {}
    for (method, ph), by_seed in groups.items():
        grids = {tuple(sorted(d)) for d in by_seed.values()}
        if len(grids) != 1:
            raise UsageError(f"{method}: seeds disagree on evaluation points")
        eps = np.array(sorted(next(iter(grids))))
        vals = np.array([[d[e] for e in eps] for _, d in sorted(by_seed.items())])
        sd = vals.std(axis=0, ddof=1) if len(vals) > 1 else np.zeros(len(eps))
        key = method if phase is not None else f"{method}/phase{ph}"
        out[key] = Curve(method, ph, eps, vals.mean(axis=0), sd, len(vals))
    return out


# Output directory layout ----------------------------------------------------

def _value_functions(agent) -> dict:
    if isinstance(agent, MonolithicAgent):
        return {"q": agent.q}
    return {"q_env": agent.dq.q_env, "q_task": agent.dq.q_task}


def run_seed_to_dir(cfg: ExperimentConfig, seed: int, out_dir, save_snapshots: bool,
                    save_replay: bool = False):
    """Run one seed; optionally write its snapshots. Returns (rows, written paths)."""
    from pathlib import Path

    run = run_seed(cfg, seed, keep_seeded_buffers=save_snapshots or save_replay)
    written = []
    snap_dir = Path(out_dir) / "snapshots"
    if save_snapshots or save_replay:
        snap_dir.mkdir(parents=True, exist_ok=True)

    def save(f, name):
        path = snap_dir / name
        f.save(path)
        written.append(path)

    if save_snapshots:
        for lineage, arts in run.phase1.items():
            for name, f in _value_functions(arts.agent).items():
                save(f, f"seed{seed}_phase1_{lineage}_{name}.snap")
    for method, res in run.phase2.items():
        if save_replay:
            path = snap_dir / f"seed{seed}_phase2_{method}_seeded_replay.snap"
            res.seeded_buffer.save(path, strategy=method, seed=seed)
            written.append(path)
        if save_snapshots:
            for name, f in _value_functions(res.agent).items():
                save(f, f"seed{seed}_phase2_{method}_{name}.snap")
    return run.rows, written


def _dir_worker(args):
    return run_seed_to_dir(*args)


def run_experiment_to_dir(cfg: ExperimentConfig, out_dir, parallel: int = 1):
    """Every seed of ``cfg``; snapshots per ``cfg.output``."""
    policy = cfg.output.snapshots
    jobs = [(cfg, s, out_dir, policy == "all" or (policy == "first-seed" and i == 0),
             cfg.output.replay_snapshots)
            for i, s in enumerate(cfg.seeds)]
    if parallel > 1 and len(jobs) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=parallel) as pool:
            results = list(pool.map(_dir_worker, jobs))
    else:
        results = [_dir_worker(j) for j in jobs]
    rows = sort_rows([r for rs, _ in results for r in rs])
    files = sorted(p for _, ps in results for p in ps)
    return rows, files


# Oracle comparison on enumerable worlds -------------------------------------

@dataclass
class OracleReport:
    max_error: float
    start_value: float
    optimal_start_value: float
    n_compared_states: int
    episodes: int
    steps: int

    def passed(self, tol: float, start_tol: float) -> bool:
        return (self.n_compared_states > 0 and self.max_error <= tol
                and abs(self.start_value - self.optimal_start_value) <= start_tol)


def train_online(env, q: QTable, episodes: int, schedule: ExplorationSchedule,
                 rng: RngStream, encode: Callable) -> int:
    """Plain one-step Q-learning, one update per environment step (no replay)."""
    env_rng = derive_substream(rng, "env-spawn")
    explore_rng = derive_substream(rng, "exploration")
    policy = EpsGreedy(schedule)
    values, visits = q.values, q.visits
    gamma = q.gamma
    inverse = q.alpha_schedule == "inverse-visits"
    t = 0
    for _ in range(episodes):
        state = env.reset(env_rng)
        obs = encode(state)
        while True:
            a, _ = choose(policy, values[obs].tolist(), None, t, explore_rng)
            nxt, reward, done = env.step(state, a, None, env_rng)
            nobs = encode(nxt)
            # scalar form of QTable.fit, kept inline for speed
            target = reward.r_env + reward.r_task
            if not nxt.absorbing:
                target += gamma * max(values[nobs].tolist())
            visits[obs, a] += 1
            step = max(q.alpha_min, 1.0 / visits[obs, a]) if inverse else q.alpha
            values[obs, a] += step * (target - values[obs, a])
            t += 1
            if done:
                break
            state, obs = nxt, nobs
    q.updates += t
    return t


def oracle_check(cfg: ExperimentConfig, seed: int | None = None) -> OracleReport:
    """Train a tabular learner on the cliff world and compare it with value iteration."""
    from .dp_oracle import EnumerableMdp, value_iteration

    if cfg.env.kind != "cliffwalk":
        raise UsageError(f"oracle check needs an enumerable world (cliffwalk), not {cfg.env.kind!r}")
    env = make_env(cfg)
    mdp = EnumerableMdp.from_cliffwalk(env.config, cfg.gamma)
    q_star = value_iteration(mdp)
    oc = cfg.oracle
    q = QTable(env.n_cells, alpha=cfg.learner.alpha, gamma=cfg.gamma,
               alpha_schedule=oc.alpha_schedule, alpha_min=cfg.learner.alpha_min,
               encoding="position")
    seed = cfg.seeds[0] if seed is None else seed
    steps = train_online(env, q, oc.episodes, _schedule(cfg, oc.episodes),
                         RngStream(seed).fork(4), env.encode)
    rows = [r * env.config.width + c for r, c in mdp.states]
    learned = q.values[rows]
    visited = q.visits[rows].sum(axis=1) >= oc.min_visits
    err = np.abs(learned - q_star)[visited]
    start = mdp.states.index(env.config.start)
    return OracleReport(
        max_error=float(err.max()) if err.size else float("inf"),
        start_value=float(learned[start].max()),
        optimal_start_value=float(q_star[start].max()),
        n_compared_states=int(visited.sum()),
        episodes=oc.episodes,
        steps=steps,
    )


def random_transition_stream(env, n: int, rng: RngStream, encode: Callable):
    """``n`` transitions from uniformly random behaviour (resetting on episode end)."""
    from .mdp_core import Transition

    env_rng = derive_substream(rng, "env-spawn")
    act_rng = derive_substream(rng, "exploration")
    out = []
    state = env.reset(env_rng)
    while len(out) < n:
        a = int(act_rng.gen.integers(4))
        nxt, reward, done = env.step(state, a, PHASE1_TASK, env_rng)
        out.append(Transition(encode(state), a, reward, encode(nxt), nxt.absorbing))
        state = env.reset(env_rng) if done else nxt
    return out


def equivalence_check(env, n_states: int, transitions, alpha: float = 0.1,
                      gamma: float = 0.95) -> float:
    """Max |(Q_env + Q_task) - Q_mono| after feeding the same stream to both.

    Uses joint-greedy decomposed updates, one transition at a time.
    """
    from .qcore import td_update_tabular

    mono = QTable(n_states, alpha=alpha, gamma=gamma)
    dq = DecomposedQ(QTable(n_states, alpha=alpha, gamma=gamma),
                     QTable(n_states, alpha=alpha, gamma=gamma), "joint-greedy")
    for t in transitions:
        td_update_tabular(mono, t)
        decomposed_update(dq, t)
    return float(np.abs(dq.q_env.values + dq.q_task.values - mono.values).max())
