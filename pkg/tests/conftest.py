import os

import pytest

# one shared place where acceptance checks record their verdicts
ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture(autouse=True)
def _pinned_seed(monkeypatch):
    monkeypatch.delenv("FRACTALSCAPE_SEED", raising=False)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running reproduction checks")
    os.environ.setdefault("PYTHONHASHSEED", "0")
