import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from pfedlia import fixtures  # noqa: E402


def small(method, **overrides):
    """A pathological run small enough for unit tests (20 clients, 12 rounds)."""
    kw = dict(num_clients=20, participation_fraction=0.25, total_rounds=12, warmup_rounds=5, seeds=(0,))
    kw.update(overrides)
    return fixtures.pathological(method, **kw)


@pytest.fixture
def small_config():
    return small


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import REPORT

    if REPORT:
        terminalreporter.section("acceptance criteria")
        for line in REPORT:
            terminalreporter.write_line(line)
