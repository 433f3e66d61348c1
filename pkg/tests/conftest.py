import numpy as np
import pytest

from fuse2d.ingest import Label, LabelInterval, Recording


def make_recording(seconds=60, labels=None, seed=0, subject="S1"):
    if labels is None:
        labels = ((0, seconds, "nostress"),)
    rng = np.random.default_rng(seed)
    return Recording(
        subject_id=subject,
        ppg=rng.normal(size=64 * seconds),
        eda=rng.normal(size=4 * seconds),
        acc_xyz=rng.normal(size=(32 * seconds, 3)),
        labels=tuple(LabelInterval(a, b, Label(lab)) for a, b, lab in labels),
    )


@pytest.fixture
def recording():
    return make_recording()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_criteria = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when not in ("setup", "call"):
        return
    number, text = marker.args
    ok = rep.passed and _criteria.get(number, (True, text))[0]
    if rep.when == "setup" and rep.passed:
        return
    _criteria[number] = (ok, text)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        ok, text = _criteria[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {text}")
