from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from delaykit.cli import load

SYSTEMS = Path(__file__).resolve().parent.parent / "data" / "systems"

settings.register_profile(
    "default",
    deadline=None,
    max_examples=25,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def system_file():
    cache = {}

    def get(name: str):
        if name not in cache:
            cache[name] = load(str(SYSTEMS / f"{name}.json"))
        return cache[name]

    return get


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_criteria: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, text): acceptance criterion reported in the summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call":
        return
    number, text = marker.args
    _criteria[number] = ("PASS" if report.passed else "FAIL", text)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        status, text = _criteria[number]
        terminalreporter.write_line(f"criterion {number:2d}: {status}  {text}")
