import numpy as np
import pytest
from hypothesis import settings

# jit compilation on first call can exceed hypothesis' default deadline
settings.register_profile("shapeflow", deadline=None, max_examples=60, derandomize=True)
settings.load_profile("shapeflow")


@pytest.fixture(scope="session")
def default_spec():
    from shapeflow.levelset import GridSpec
    return GridSpec.cube()


@pytest.fixture(scope="session")
def sphere_grid(default_spec):
    from shapeflow.levelset import rasterize
    return rasterize("sphere", default_spec)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# --- acceptance summary -----------------------------------------------------
# Tests marked ``criterion(n, title)`` get one PASS/FAIL line each at the end of
# the run, followed by whatever they stored with ``record_property``.

_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n, title = mark.args
    entry = _criteria.setdefault(n, {"title": title, "ok": True, "notes": []})
    if report.failed or (report.when == "call" and not report.passed):
        entry["ok"] = False
    if report.when == "call":
        entry["notes"].extend(f"{k}={v}" for k, v in report.user_properties)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(_criteria):
        e = _criteria[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if e['ok'] else 'FAIL'}  {e['title']}")
        if e["notes"]:
            terminalreporter.write_line("    " + ", ".join(e["notes"]))
