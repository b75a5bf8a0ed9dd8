import numpy as np
import pytest


def rgb_grid(levels=16):
    """Deterministic levels**3 RGB sample as a (levels, levels**2, 3) image."""
    values = np.linspace(0, 255, levels).round().astype(np.uint8)
    r, g, b = np.meshgrid(values, values, values, indexing="ij")
    return np.stack([r, g, b], axis=-1).reshape(levels, levels * levels, 3)


@pytest.fixture
def grid():
    return rgb_grid()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(label): acceptance criterion reported in the summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    label = marker.args[0]
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _CRITERIA[label] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(_CRITERIA, key=lambda s: int(s.split(".")[0])):
        status = "PASS" if _CRITERIA[label] == "passed" else "FAIL"
        terminalreporter.write_line(f"{status}  {label}")
