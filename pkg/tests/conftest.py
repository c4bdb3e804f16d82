import random
import sys

import pytest
from hypothesis import HealthCheck, settings

from quorumhsm.group import p256, transparent

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def z13():
    return transparent(13)


@pytest.fixture
def toy13():
    return transparent(13, toy_hash=True)


@pytest.fixture
def curve():
    return p256()


@pytest.fixture(params=["transparent", "curve"])
def params(request):
    return transparent(257) if request.param == "transparent" else p256()


@pytest.fixture
def rng():
    return random.Random(1234)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        terminalreporter.write_line(results[number])
