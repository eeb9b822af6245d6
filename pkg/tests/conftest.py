import numpy as np
import pytest

from pedintent.sim import ScenarioConfig

CLEAN = dict(detection_miss_rate=0.0, false_positive_rate=0.0, keypoint_noise_sigma=0.0,
             keypoint_dropout=0.0)


def clean_config(n_pedestrians=2, seed=0, **kw):
    return ScenarioConfig(n_pedestrians=n_pedestrians, seed=seed, **{**CLEAN, **kw})


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# ------------------------------------------------------------ acceptance summary

_ACCEPTANCE = {}


@pytest.fixture
def detail(request):
    """Attach a one-line measurement to the acceptance summary of this test."""
    def note(text):
        request.node.user_properties.append(("detail", text))
    return note


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    name = marker.args[0]
    if report.when == "call" or (report.when == "setup" and not report.passed):
        notes = [v for k, v in item.user_properties if k == "detail"]
        passed = report.passed and _ACCEPTANCE.get(name, (True, []))[0]
        prev = _ACCEPTANCE.get(name, (True, []))[1]
        _ACCEPTANCE[name] = (passed, prev + notes)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, (passed, notes) in _ACCEPTANCE.items():
        line = f"{'PASS' if passed else 'FAIL'}  {name}"
        if notes:
            line += "  [" + "; ".join(notes) + "]"
        terminalreporter.write_line(line)
