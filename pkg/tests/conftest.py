from pathlib import Path

import pytest

from dqlab.config import EvalSection, ExperimentConfig, ReplaySection

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"


def tiny_config(**changes) -> ExperimentConfig:
    """A few-episode gridworld experiment that runs in well under a second."""
    base = ExperimentConfig(
        phase1_episodes=20,
        phase2_episodes=10,
        seeds=[0],
        replay=ReplaySection(seed_size=200),
        eval=EvalSection(every=5, episodes=3, fixed_states=10),
    )
    return base.replace(**changes)


@pytest.fixture
def tiny():
    return tiny_config()


ACCEPTANCE: dict[int, str] = {}


def report(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[n] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
