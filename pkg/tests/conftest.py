import numpy as np
import pytest

from anchorsync.synthesis import generate_ground_truth, synthesize_observations

_ACCEPTANCE = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(label): acceptance criterion reported in the summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call" and not (report.when == "setup" and report.failed):
        return
    detail = dict(item.user_properties).get("detail", "")
    _ACCEPTANCE.append((marker.args[0], report.passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, passed, detail in _ACCEPTANCE:
        status = "PASS" if passed else "FAIL"
        line = f"[{status}] criterion {label}"
        if detail:
            line += f": {detail}"
        terminalreporter.write_line(line)
    n_pass = sum(p for _, p, _ in _ACCEPTANCE)
    terminalreporter.write_line(f"{n_pass}/{len(_ACCEPTANCE)} acceptance checks passed")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def noisy_instance(rng):
    gt = generate_ground_truth(12, 3, 1.0, rng)
    obs = synthesize_observations(gt, 0.3, 0.3, rng)
    return gt, obs


@pytest.fixture
def clean_instance(rng):
    gt = generate_ground_truth(15, 3, 1.5, rng)
    obs = synthesize_observations(gt, 0.0, 0.0, rng)
    return gt, obs
