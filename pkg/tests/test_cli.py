import json
import xml.etree.ElementTree as ET

import pytest

from conftest import CONFIGS, tiny_config
from dqlab import cli
from dqlab.config import EvalSection
from dqlab.harness import (
    PHASE2_TASK,
    csv_content_hash,
    eval_points,
    make_encoder,
    make_env,
    rows_to_csv,
    run_phase1,
)
from dqlab.mdp_core import DecomposedReward, RngStream, Transition
from dqlab.replay import RandomPolicy, ReplayBuffer, SurvivalPolicy, seed_buffer

SVG = "{http://www.w3.org/2000/svg}"


def write_config(path, cfg):
    path.write_text(json.dumps(cfg.to_dict(), indent=2))
    return path


@pytest.fixture
def trained(tmp_path):
    cfg = tiny_config(phase2_episodes=10, seeds=[0, 1])
    conf = write_config(tmp_path / "c.json", cfg)
    out = tmp_path / "run"
    assert cli.main(["train", "--config", str(conf), "--out", str(out)]) == 0
    return cfg, conf, out


def test_train_row_count_and_outputs(trained):
    cfg, _, out = trained
    lines = (out / "metrics.csv").read_text().splitlines()
    n_points = len(eval_points(10, cfg.eval.every))
    assert len(lines) - 1 == len(cfg.methods) * n_points * len(cfg.seeds)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seeds"] == [0, 1]
    assert manifest["metrics_hash"] == csv_content_hash((out / "metrics.csv").read_text())
    for rel in manifest["files"]:
        assert (out / rel).is_file()
    assert (out / "figures" / "curves_mean_return.svg").is_file()
    # value-function snapshots for the first seed only, seeded buffers for all
    snaps = sorted(p.name for p in (out / "snapshots").iterdir())
    assert "seed1_phase2_naive_seeded_replay.snap" in snaps
    assert "seed1_phase2_naive_q.snap" not in snaps
    assert "seed0_phase2_decoupled_q_env.snap" in snaps


def test_single_seed_ten_episode_run(tmp_path):
    cfg = tiny_config(phase2_episodes=10, eval=EvalSection(every=100, episodes=2, fixed_states=5))
    conf = write_config(tmp_path / "c.json", cfg)
    assert cli.main(["train", "--config", str(conf), "--out", str(tmp_path / "o"), "--no-plots"]) == 0
    rows = (tmp_path / "o" / "metrics.csv").read_text().splitlines()[1:]
    assert len(rows) == 3 * 2  # evaluation at episodes 0 and 10


def test_rerun_gives_identical_csv(trained, tmp_path):
    _, conf, out = trained
    again = tmp_path / "again"
    assert cli.main(["train", "--config", str(conf), "--out", str(again)]) == 0
    strip = lambda p: [",".join(l.split(",")[:-1]) for l in p.read_text().splitlines()]
    assert strip(out / "metrics.csv") == strip(again / "metrics.csv")
    assert cli.main(["train", "--config", str(conf), "--out", str(out), "--check"]) == 0


def test_check_detects_changed_results(trained):
    _, conf, out = trained
    manifest = json.loads((out / "manifest.json").read_text())
    manifest["metrics_hash"] = "0" * 64
    (out / "manifest.json").write_text(json.dumps(manifest))
    assert cli.main(["train", "--config", str(conf), "--out", str(out), "--check"]) == 1


def test_missing_config_exit_2(tmp_path, capsys):
    assert cli.main(["train", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 2
    assert "not found" in capsys.readouterr().err


def test_invalid_config_exit_2(tmp_path, capsys):
    p = tmp_path / "c.json"
    p.write_text('{\n  "version": 1,\n  "gama": 0.9\n}\n')
    assert cli.main(["train", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    assert "line 3" in capsys.readouterr().err


def test_seed_override_parsing():
    assert cli.parse_seeds("0-3") == [0, 1, 2, 3]
    assert cli.parse_seeds("4,1-2") == [4, 1, 2]
    with pytest.raises(ValueError):
        cli.parse_seeds(",")


# plot ------------------------------------------------------------------------

def test_plot_svg_structure(trained, tmp_path, capsys):
    _, _, out = trained
    target = tmp_path / "fig" / "curves.svg"
    assert cli.main(["plot", str(out / "metrics.csv"), "--out", str(target)]) == 0
    path = tmp_path / "fig" / "curves_mean_return.svg"
    root = ET.parse(path).getroot()
    groups = {g.get("id"): g for g in root.iter(SVG + "g")}
    for method in ("naive", "transfer", "decoupled"):
        curve = groups[f"curve-{method}"]
        assert len(curve.findall(SVG + "path")) == 1
        assert f"band-{method}" in groups
    assert str(path) in capsys.readouterr().out


def test_plot_is_byte_deterministic(trained, tmp_path):
    _, _, out = trained
    a, b = tmp_path / "a", tmp_path / "b"
    cli.main(["plot", str(out / "metrics.csv"), "--out", str(a)])
    cli.main(["plot", str(out / "metrics.csv"), "--out", str(b)])
    for name in ("curves_mean_return.svg", "curves_crash_rate.svg"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_plot_rejects_bad_csv(tmp_path, capsys):
    empty = tmp_path / "e.csv"
    empty.write_text(rows_to_csv([]))
    assert cli.main(["plot", str(empty), "--out", str(tmp_path)]) == 1
    bad = tmp_path / "b.csv"
    bad.write_text(rows_to_csv([]) + "naive,0,2,0,1,1\n")
    assert cli.main(["plot", str(bad), "--out", str(tmp_path)]) == 1
    assert "line 2" in capsys.readouterr().err
    assert cli.main(["plot", str(tmp_path / "missing.csv"), "--out", str(tmp_path)]) == 1


# inspect-replay --------------------------------------------------------------

def crash_line(text):
    return float(next(l for l in text.splitlines() if l.startswith("crash_fraction")).split()[1])


def test_inspect_random_vs_survival(tmp_path, capsys):
    cfg = tiny_config(phase1_episodes=600)
    env = make_env(cfg)
    enc = make_encoder(env, cfg)
    q_env = run_phase1(cfg, 0, "decoupled").agent.dq.q_env
    for name, strategy in (("random", RandomPolicy()), ("survival", SurvivalPolicy(q_env))):
        buf = seed_buffer(strategy, env, PHASE2_TASK, 3000, RngStream(0), enc.encode)
        buf.save(tmp_path / f"{name}.snap")
    capsys.readouterr()
    assert cli.main(["inspect-replay", str(tmp_path / "random.snap")]) == 0
    random_frac = crash_line(capsys.readouterr().out)
    assert cli.main(["inspect-replay", str(tmp_path / "survival.snap")]) == 0
    survival_frac = crash_line(capsys.readouterr().out)
    assert random_frac > survival_frac


def test_inspect_empty_and_truncated(tmp_path, capsys):
    ReplayBuffer(10).save(tmp_path / "empty.snap")
    assert cli.main(["inspect-replay", str(tmp_path / "empty.snap")]) == 0
    assert "size: 0" in capsys.readouterr().out
    buf = ReplayBuffer(10)
    for i in range(5):
        buf.push(Transition(i, 1, DecomposedReward(-1.0, 0.0), i, True))
    buf.save(tmp_path / "full.snap")
    raw = (tmp_path / "full.snap").read_bytes()
    (tmp_path / "cut.snap").write_bytes(raw[: len(raw) // 2])
    assert cli.main(["inspect-replay", str(tmp_path / "cut.snap")]) == 1
    (tmp_path / "junk.snap").write_bytes(b"not a snapshot")
    assert cli.main(["inspect-replay", str(tmp_path / "junk.snap")]) == 1
    assert cli.main(["inspect-replay", str(tmp_path / "full.snap")]) == 0
    out = capsys.readouterr().out
    assert "crash_fraction: 1.000000" in out and "r_env histogram: {-1: 5}" in out


# oracle-check ----------------------------------------------------------------

def test_oracle_check_passes_on_shipped_config(capsys):
    assert cli.main(["oracle-check", "--config", str(CONFIGS / "cliffwalk-oracle.json"),
                     "--equivalence"]) == 0
    out = capsys.readouterr().out
    assert "PASS" in out and "max diff" in out


def test_oracle_check_undertrained_fails(tmp_path):
    data = json.loads((CONFIGS / "cliffwalk-oracle.json").read_text())
    data["oracle"]["episodes"] = 1
    data["oracle"]["min_visits"] = 1
    p = tmp_path / "o.json"
    p.write_text(json.dumps(data))
    assert cli.main(["oracle-check", "--config", str(p)]) == 1


def test_oracle_check_needs_enumerable_world(capsys):
    assert cli.main(["oracle-check", "--config", str(CONFIGS / "smoke.json")]) == 2
    assert "cliffwalk" in capsys.readouterr().err
