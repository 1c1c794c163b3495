import pytest

from rfiqkd import ChannelParams, ProtocolParams, SessionParams
from rfiqkd.records import load_dataset

ACCEPTANCE = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = {}


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for number in sorted(lines):
            terminalreporter.write_line(lines[number])


@pytest.fixture
def acceptance(request):
    """Record the one-line verdict of an acceptance criterion."""

    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        request.config.stash[ACCEPTANCE][number] = line
        print(line)
        return ok

    return record


@pytest.fixture(scope="session")
def records():
    return {int(r.fiber_km): r for r in load_dataset()}


@pytest.fixture
def ch250():
    return ChannelParams(loss_db=47.10)


@pytest.fixture
def pp250():
    return ProtocolParams(0.388, 0.123, 0.5, 0.5, 0.476, 0.262, 0.262)


@pytest.fixture
def sess():
    return SessionParams()
