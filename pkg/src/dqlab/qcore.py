"""Action-value functions and their updates.

Two backings share one small interface (``q_values``, ``predict``, ``fit``):

* :class:`QTable` -- dense table over integer state indices.
* :class:`MlpApproximator` -- ReLU multilayer perceptron trained with Adam.

:class:`DecomposedQ` pairs a survival (environment) function with a task
function; the acted-upon value is their sum, and each side learns from its
own reward channel.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .mdp_core import (
    N_ACTIONS,
    NumericalError,
    RngStream,
    Transition,
    TransitionBatch,
    UsageError,
)
from .snapshot import read_snapshot, write_snapshot

UPDATE_MODES = ("independent-max", "joint-greedy")


@dataclass
class AdamConfig:
    lr: float = 0.000025
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 32

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("Adam learning rate must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0

    @classmethod
    def zeros_like(cls, params) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(params, grads, cfg: AdamConfig, state: AdamState) -> None:
    """Bias-corrected Adam, applied in place to every array in ``params``."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise UsageError("params, grads and optimizer state differ in length")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise UsageError(f"gradient shape {g.shape} does not match parameter {p.shape}")
    state.t += 1
    b1, b2 = cfg.beta1, cfg.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= cfg.lr * (m / c1) / (np.sqrt(v / c2) + cfg.eps)


class QTable:
    """Dense Q(s, a) table, zero-initialised.

    ``alpha_schedule="inverse-visits"`` uses max(alpha_min, 1/n(s, a)) as the
    step size for the n-th update of (s, a).
    """

    def __init__(self, n_states: int, alpha: float = 0.1, gamma: float = 0.95,
                 alpha_schedule: str = "constant", alpha_min: float = 0.0,
                 encoding: str = "index"):
        if alpha_schedule not in ("constant", "inverse-visits"):
            raise ValueError(f"unknown alpha schedule {alpha_schedule!r}")
        self.values = np.zeros((n_states, N_ACTIONS))
        self.visits = np.zeros((n_states, N_ACTIONS), dtype=np.int64)
        self.alpha = alpha
        self.gamma = gamma
        self.alpha_schedule = alpha_schedule
        self.alpha_min = alpha_min
        self.encoding = encoding
        self.updates = 0

    @property
    def n_states(self) -> int:
        return self.values.shape[0]

    def q_values(self, obs) -> np.ndarray:
        return self.values[self._index(obs)].copy()

    def q_list(self, obs) -> list:
        # hot path for action selection: plain floats, no array allocation
        return self.values[obs].tolist()

    def predict(self, obs) -> np.ndarray:
        return self.values[np.asarray(obs, dtype=np.int64)]

    def _index(self, obs) -> int:
        i = int(obs)
        if not 0 <= i < self.n_states:
            raise UsageError(f"state index {i} outside table of {self.n_states}")
        return i

    def _step_sizes(self, s, a) -> np.ndarray | float:
        if self.alpha_schedule == "constant":
            return self.alpha
        return np.maximum(self.alpha_min, 1.0 / self.visits[s, a])

    def fit(self, obs, actions, targets) -> np.ndarray:
        """Move Q(s, a) toward ``targets``; returns the unscaled TD errors.

        Errors are computed from the table as it stood before the call, and
        repeated (s, a) pairs accumulate.
        """
        s = np.asarray(obs, dtype=np.int64)
        a = np.asarray(actions, dtype=np.int64)
        td = targets - self.values[s, a]
        np.add.at(self.visits, (s, a), 1)
        np.add.at(self.values, (s, a), self._step_sizes(s, a) * td)
        self.updates += len(s)
        return td

    def copy(self) -> "QTable":
        return copy.deepcopy(self)

    def fingerprint(self) -> bytes:
        return self.values.tobytes()

    def save(self, path) -> None:
        write_snapshot(path, "qtable", {"values": self.values, "visits": self.visits},
                       shape=list(self.values.shape), encoding=self.encoding,
                       gamma=self.gamma, alpha=self.alpha, updates=self.updates)

    @classmethod
    def load(cls, path, n_states: int | None = None, encoding: str | None = None) -> "QTable":
        header, arrays = read_snapshot(path, kind="qtable")
        shape = tuple(header["shape"])
        if n_states is not None and shape != (n_states, N_ACTIONS):
            raise UsageError(f"snapshot table shape {shape} != expected {(n_states, N_ACTIONS)}")
        if encoding is not None and header["encoding"] != encoding:
            raise UsageError(f"snapshot encoding {header['encoding']!r} != {encoding!r}")
        q = cls(shape[0], alpha=header["alpha"], gamma=header["gamma"], encoding=header["encoding"])
        q.values[:] = arrays["values"]
        q.visits[:] = arrays["visits"]
        q.updates = header["updates"]
        return q


class MlpApproximator:
    """Fully connected ReLU network mapping an encoded state to four Q-values.

    Parameters start at zero; call :func:`xavier_init` for a trainable net.
    """

    def __init__(self, n_inputs: int, hidden=(64, 16), n_outputs: int = N_ACTIONS,
                 adam: AdamConfig | None = None, gamma: float = 0.95,
                 encoding: str = "onehot"):
        self.widths = (int(n_inputs), *map(int, hidden), int(n_outputs))
        self.weights = [np.zeros((a, b)) for a, b in zip(self.widths[:-1], self.widths[1:])]
        self.biases = [np.zeros(b) for b in self.widths[1:]]
        self.adam = adam or AdamConfig()
        self.adam_state = AdamState.zeros_like(self.params)
        self.gamma = gamma
        self.encoding = encoding
        self.updates = 0

    @property
    def params(self) -> list:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat(self, flat: np.ndarray) -> None:
        if flat.shape != (self.n_params,):
            raise UsageError(f"expected {self.n_params} parameters, got {flat.shape}")
        i = 0
        for p in self.params:
            p[...] = flat[i:i + p.size].reshape(p.shape)
            i += p.size

    def _forward(self, x: np.ndarray):
        acts = [x]
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                h = np.maximum(h, 0.0)
            acts.append(h)
        return h, acts

    def predict(self, obs) -> np.ndarray:
        x = np.atleast_2d(np.asarray(obs, dtype=float))
        if x.shape[1] != self.widths[0]:
            raise UsageError(f"input width {x.shape[1]} != network input {self.widths[0]}")
        return self._forward(x)[0]

    def q_values(self, obs) -> np.ndarray:
        return self.predict(obs)[0]

    def q_list(self, obs) -> list:
        return self.predict(obs)[0].tolist()

    def loss_and_grads(self, obs, actions, targets):
        """Mean squared TD loss over the batch and its parameter gradients.

        ``targets`` are treated as constants (no gradient through them).
        """
        x = np.atleast_2d(np.asarray(obs, dtype=float))
        a = np.asarray(actions, dtype=np.int64)
        n = len(a)
        out, acts = self._forward(x)
        rows = np.arange(n)
        diff = out[rows, a] - targets
        loss = float(np.mean(diff ** 2))
        delta = np.zeros_like(out)
        delta[rows, a] = 2.0 * diff / n
        grads_w, grads_b = [], []
        for i in range(len(self.weights) - 1, -1, -1):
            grads_w.append(acts[i].T @ delta)
            grads_b.append(delta.sum(axis=0))
            if i > 0:
                delta = (delta @ self.weights[i].T) * (acts[i] > 0)
        grads = []
        for gw, gb in zip(reversed(grads_w), reversed(grads_b)):
            grads += [gw, gb]
        return loss, grads

    def fit(self, obs, actions, targets) -> float:
        # overflow is caught by the finiteness check below
        with np.errstate(over="ignore", invalid="ignore"):
            loss, grads = self.loss_and_grads(obs, actions, targets)
            adam_step(self.params, grads, self.adam, self.adam_state)
        self.updates += 1
        if not all(np.isfinite(p).all() for p in self.params):
            raise NumericalError("non-finite MLP parameters after update")
        return loss

    def copy(self) -> "MlpApproximator":
        return copy.deepcopy(self)

    def fingerprint(self) -> bytes:
        return self.get_flat().tobytes()

    def save(self, path) -> None:
        write_snapshot(path, "mlp", {"params": self.get_flat()}, widths=list(self.widths),
                       encoding=self.encoding, gamma=self.gamma, updates=self.updates)

    @classmethod
    def load(cls, path, widths=None, encoding: str | None = None) -> "MlpApproximator":
        header, arrays = read_snapshot(path, kind="mlp")
        stored = tuple(header["widths"])
        if widths is not None and tuple(widths) != stored:
            raise UsageError(f"snapshot widths {stored} != expected {tuple(widths)}")
        if encoding is not None and header["encoding"] != encoding:
            raise UsageError(f"snapshot encoding {header['encoding']!r} != {encoding!r}")
        net = cls(stored[0], stored[1:-1], stored[-1], gamma=header["gamma"],
                  encoding=header["encoding"])
        net.set_flat(arrays["params"])
        net.updates = header["updates"]
        return net


def xavier_init(f: MlpApproximator, rng: RngStream) -> None:
    """Uniform Glorot init: weights on +-sqrt(6 / (fan_in + fan_out)), zero biases."""
    for w, b in zip(f.weights, f.biases):
        fan_in, fan_out = w.shape
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        w[...] = rng.gen.uniform(-bound, bound, size=w.shape)
        b[...] = 0.0
    f.adam_state = AdamState.zeros_like(f.params)


def q_values(f, obs) -> np.ndarray:
    return f.q_values(obs)


def _as_batch(t) -> TransitionBatch:
    if isinstance(t, Transition):
        return TransitionBatch.from_transitions([t])
    return t


def td_targets(rewards, next_bootstrap, terminal, gamma) -> np.ndarray:
    return rewards + gamma * np.where(terminal, 0.0, next_bootstrap)


def td_update_tabular(q: QTable, t) -> float | np.ndarray:
    """Q(s,a) += alpha * (r + gamma * max_a' Q(s',a') - Q(s,a)) on total reward."""
    batch = _as_batch(t)
    boot = q.predict(batch.next_obs).max(axis=1)
    td = q.fit(batch.obs, batch.actions, td_targets(batch.total, boot, batch.terminal, q.gamma))
    return float(td[0]) if isinstance(t, Transition) else td


def q_learning_update(f, batch: TransitionBatch, gamma: float | None = None):
    """Monolithic update on the total reward; dispatches on the backing."""
    gamma = f.gamma if gamma is None else gamma
    boot = f.predict(batch.next_obs).max(axis=1)
    return f.fit(batch.obs, batch.actions, td_targets(batch.total, boot, batch.terminal, gamma))


def minibatch_update_mlp(f: MlpApproximator, batch: TransitionBatch, gamma: float | None = None) -> float:
    if len(batch) == 0:
        raise UsageError("empty minibatch")
    return q_learning_update(f, batch, gamma)


class DecomposedQ:
    """Survival function plus task function; actions are chosen on their sum."""

    def __init__(self, q_env, q_task, update_mode: str = "independent-max"):
        if update_mode not in UPDATE_MODES:
            raise ValueError(f"update_mode must be one of {UPDATE_MODES}")
        self.q_env = q_env
        self.q_task = q_task
        self.update_mode = update_mode
        self.gamma = q_task.gamma

    def combine(self, obs) -> np.ndarray:
        return self.q_env.q_values(obs) + self.q_task.q_values(obs)

    def q_values(self, obs) -> np.ndarray:
        return self.combine(obs)

    def q_list(self, obs) -> list:
        return (self.q_env.q_values(obs) + self.q_task.q_values(obs)).tolist()

    def predict(self, obs) -> np.ndarray:
        return self.q_env.predict(obs) + self.q_task.predict(obs)

    def copy(self) -> "DecomposedQ":
        return DecomposedQ(self.q_env.copy(), self.q_task.copy(), self.update_mode)


def combine(dq: DecomposedQ, obs) -> np.ndarray:
    return dq.combine(obs)


def decomposed_update(dq: DecomposedQ, t, gamma: float | None = None,
                      train_env: bool = True, train_task: bool = True):
    """Route r_env to the survival side and r_task to the task side.

    ``independent-max`` bootstraps each side on its own greedy action;
    ``joint-greedy`` bootstraps both sides at argmax of their sum (lowest
    index on ties), which makes the sum follow monolithic Q-learning exactly.
    Returns the pair of per-side TD errors (tables) or losses (networks).
    """
    batch = _as_batch(t)
    gamma = dq.gamma if gamma is None else gamma
    nxt_env = dq.q_env.predict(batch.next_obs)
    nxt_task = dq.q_task.predict(batch.next_obs)
    if dq.update_mode == "joint-greedy":
        best = np.argmax(nxt_env + nxt_task, axis=1)
        rows = np.arange(len(best))
        boot_env, boot_task = nxt_env[rows, best], nxt_task[rows, best]
    else:
        boot_env, boot_task = nxt_env.max(axis=1), nxt_task.max(axis=1)
    err_env = err_task = None
    if train_env:
        err_env = dq.q_env.fit(batch.obs, batch.actions,
                               td_targets(batch.r_env, boot_env, batch.terminal, gamma))
    if train_task:
        err_task = dq.q_task.fit(batch.obs, batch.actions,
                                 td_targets(batch.r_task, boot_task, batch.terminal, gamma))
    if isinstance(t, Transition):
        err_env = None if err_env is None else float(np.ravel(err_env)[0])
        err_task = None if err_task is None else float(np.ravel(err_task)[0])
    return err_env, err_task
