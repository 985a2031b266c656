import hypothesis
import numpy as np
import pytest

from planecycle.weights import Arch, synth_weights

hypothesis.settings.register_profile("default", deadline=None, max_examples=100)
hypothesis.settings.register_profile("fast", deadline=None, max_examples=10)
hypothesis.settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_weights():
    # head dim 12: valid for both the 2-axis and 3-axis rotary split
    return synth_weights(3, Arch(depth=2, channels=24, heads=2, in_channels=1))


def random_volume(rng, d, h, w, in_ch=1):
    return rng.standard_normal((d, 16 * h, 16 * w, in_ch)).astype(np.float32)


# acceptance reporting: one PASS/FAIL line per criterion in the terminal summary

_criteria: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    if report.when == "call" or (report.when == "setup" and not report.passed):
        status = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
        _criteria[number] = (title, status, getattr(report, "duration", 0.0))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, status, duration = _criteria[number]
        terminalreporter.write_line(f"{status} criterion {number:>2}: {title} ({duration:.2f}s)")
