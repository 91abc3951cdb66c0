import numpy as np
import pytest

from radsentry.ingest import DEFAULT_COLUMNS

HEADER = ",".join(DEFAULT_COLUMNS[k] for k in (
    "captured_time", "latitude", "longitude", "value", "unit", "device_id", "uploaded_time"
))


def export_text(rows):
    """Render Safecast-layout CSV text from 7-tuples."""
    lines = [HEADER]
    lines += [",".join(str(f) for f in r) for r in rows]
    return "\n".join(lines) + "\n"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance summary ------------------------------------------------------------------

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n, title = mark.args
    failed = call.excinfo is not None and not call.excinfo.errisinstance(pytest.skip.Exception)
    prev = _CRITERIA.get(n, (title, "PASS"))[1]
    if call.when == "call" or failed:
        _CRITERIA[n] = (title, "FAIL" if failed or prev == "FAIL" else "PASS")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, status = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n} [{status}] {title}")
