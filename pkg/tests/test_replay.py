import numpy as np
import pytest

from dqlab import gridworld as gw
from dqlab.gridworld import GridConfig, GridWorld, TaskSpec
from dqlab.mdp_core import ConfigError, DecomposedReward, RngStream, Transition, UsageError
from dqlab.qcore import QTable
from dqlab.replay import RandomPolicy, ReplayBuffer, SurvivalPolicy, seed_buffer
from dqlab.snapshot import SnapshotError


def item(i):
    return Transition(i, i % 4, DecomposedReward(-float(i % 2), 0.0), i + 1, bool(i % 2))


def test_ring_drops_oldest():
    buf = ReplayBuffer(10_000)
    for i in range(10_001):
        buf.push(item(i))
    assert len(buf) == 10_000
    obs = buf.contents().obs
    assert obs[0] == 1 and obs[-1] == 10_000 and 0 not in obs


def test_order_preserved_and_fifo():
    buf = ReplayBuffer(4)
    for i in range(5):
        buf.push(item(i))
    assert buf.contents().obs.tolist() == [1, 2, 3, 4]
    buf.push(item(5))
    buf.push(item(6))
    assert buf.contents().obs.tolist() == [3, 4, 5, 6]
    small = ReplayBuffer(10)
    for i in range(5):
        small.push(item(i))
    assert [t.state for t in small.transitions()] == [0, 1, 2, 3, 4]


def test_sample_single_element():
    buf = ReplayBuffer(10)
    buf.push(item(7))
    assert buf.sample(32, RngStream(0)).obs.tolist() == [7] * 32


def test_sample_is_uniform():
    buf = ReplayBuffer(10)
    for i in range(10):
        buf.push(item(i))
    rng = RngStream(3)
    draws = np.concatenate([buf.sample(1000, rng).obs for _ in range(100)])
    freq = np.bincount(draws, minlength=10) / len(draws)
    se = np.sqrt(0.1 * 0.9 / len(draws))
    assert np.all(np.abs(freq - 0.1) < 3 * se)


def test_sample_uniform_after_wraparound():
    buf = ReplayBuffer(5)
    for i in range(13):
        buf.push(item(i))
    draws = buf.sample(20_000, RngStream(4)).obs
    assert set(draws.tolist()) == {8, 9, 10, 11, 12}


def test_sample_determinism_and_errors():
    buf = ReplayBuffer(50)
    for i in range(50):
        buf.push(item(i))
    a = buf.sample(32, RngStream(9)).obs
    b = buf.sample(32, RngStream(9)).obs
    assert np.array_equal(a, b)
    with pytest.raises(UsageError):
        ReplayBuffer(3).sample(1, RngStream(0))
    with pytest.raises(ConfigError):
        ReplayBuffer(0)


def test_seed_exact_size_and_no_obstacles():
    env = GridWorld(GridConfig(p_obstacle=0.0))
    buf = seed_buffer(RandomPolicy(), env, TaskSpec(1), 100, RngStream(0), gw.encode_onehot)
    assert len(buf) == 100
    assert buf.contents().obs.shape == (100, 484)
    big = seed_buffer(RandomPolicy(), env, TaskSpec(1), 3000, RngStream(1),
                      lambda s: gw.encode_local(s, 3))
    assert big.crash_fraction() == 0.0


def test_seed_larger_than_capacity():
    with pytest.raises(ConfigError):
        seed_buffer(RandomPolicy(), GridWorld(), TaskSpec(0), 11, RngStream(0),
                    gw.encode_onehot, capacity=10)


def test_rewards_use_the_target_task():
    env = GridWorld(GridConfig(p_obstacle=0.0, p_collectible=0.3))
    enc = lambda s: gw.encode_local(s, 3)
    b = seed_buffer(RandomPolicy(), env, TaskSpec(1), 2000, RngStream(5), enc).contents()
    assert b.r_task.sum() > 0


def test_survival_policy_avoids_known_hazards():
    # only the first action looks survivable everywhere
    enc = lambda s: gw.encode_local(s, 3)
    q_env = QTable(gw.local_table_size(3))
    q_env.values[:, 1:] = -1.0
    buf = seed_buffer(SurvivalPolicy(q_env), GridWorld(), TaskSpec(1), 500, RngStream(2), enc)
    assert set(buf.contents().actions.tolist()) == {0}


def test_snapshot_round_trip(tmp_path):
    env = GridWorld()
    buf = seed_buffer(RandomPolicy(), env, TaskSpec(1), 300, RngStream(8),
                      lambda s: gw.encode_local(s, 3))
    buf.save(tmp_path / "r.snap", strategy="naive")
    back = ReplayBuffer.load(tmp_path / "r.snap")
    assert len(back) == 300 and back.crash_fraction() == buf.crash_fraction()
    for x, y in zip(back.contents(), buf.contents()):
        assert np.array_equal(x, y)
    ReplayBuffer(5).save(tmp_path / "empty.snap")
    assert len(ReplayBuffer.load(tmp_path / "empty.snap")) == 0
    raw = (tmp_path / "r.snap").read_bytes()
    (tmp_path / "cut.snap").write_bytes(raw[:-7])
    with pytest.raises(SnapshotError):
        ReplayBuffer.load(tmp_path / "cut.snap")
