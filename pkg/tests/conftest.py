import pytest

from hybridcast.harness.pipeline import PipelineConfig, run_pipeline


def tiny_config(out_dir, **overrides):
    """A 14-day pipeline small enough for unit tests."""
    base = dict(days=14, train_days=8, num_estimators=20, e2e_epochs=5, spread_window_days=3, out_dir=str(out_dir))
    base.update(overrides)
    return PipelineConfig(**base)


@pytest.fixture(scope="session")
def tiny_run(tmp_path_factory):
    out_dir = tmp_path_factory.mktemp("tiny_pipeline")
    cfg = tiny_config(out_dir)
    return cfg, run_pipeline(cfg)


ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Record one pass/fail line per acceptance criterion, then assert it."""

    def record(number, name, ok, detail):
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {name}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
