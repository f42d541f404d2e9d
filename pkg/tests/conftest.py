import time

import pytest

from tests.toydata import TOY_MODEL, write_toy_dataset

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_report():
    """Collector for the one-line verdicts printed by the acceptance tests."""
    return _ACCEPTANCE_LINES.append


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def toy_train_manifest(tmp_path_factory):
    """8-clip two-source training set shared by the overfit criteria."""
    return write_toy_dataset(tmp_path_factory.mktemp("toy_train"), 8, seed=0)


@pytest.fixture(scope="session")
def toy_test_manifest(tmp_path_factory):
    """64-clip held-out set from the same clip family."""
    return write_toy_dataset(tmp_path_factory.mktemp("toy_test"), 64, seed=1000)


@pytest.fixture(scope="session")
def small_manifest(tmp_path_factory):
    """4 clips for cheap training-loop tests."""
    return write_toy_dataset(tmp_path_factory.mktemp("toy_small"), 4, seed=500)


@pytest.fixture(scope="session")
def overfit_run(tmp_path_factory, toy_train_manifest):
    """500-step reduced-model training used by the separation, refinement
    and counting acceptance checks. Trained once per session."""
    from soundsep.training import TrainConfig, train_stage1

    out_dir = tmp_path_factory.mktemp("overfit_run")
    cfg = TrainConfig(
        train_manifest=toy_train_manifest,
        stage="stage1",
        epochs=1000,
        max_steps=500,
        lr=1e-3,
        batch_size=2,
        seed=42,
        out_dir=out_dir,
        model=TOY_MODEL,
    )
    t0 = time.monotonic()
    result = train_stage1(cfg)
    return {"cfg": cfg, "result": result, "wall_s": time.monotonic() - t0}
