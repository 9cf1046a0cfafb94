import pytest

from mazeorch.maze import MazeGrid

_ACCEPTANCE: dict[str, list[str]] = {}


def grid_from(rows, starts=None, **kw):
    """Build a grid from row strings; the start defaults to the first 'O'."""
    rows = [r.replace(" ", "") for r in rows]
    if starts is None:
        for r, row in enumerate(rows):
            if "O" in row:
                starts = [(r, row.index("O"))]
                break
    return MazeGrid.from_rows(rows, starts, **kw)


@pytest.fixture
def make_grid():
    return grid_from


def pytest_runtest_logreport(report):
    marker = report.__dict__.get("acceptance_name")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _ACCEPTANCE.setdefault(marker, []).append(report.outcome)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    m = item.get_closest_marker("acceptance")
    if m is not None:
        report.acceptance_name = m.args[0]


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcomes in _ACCEPTANCE.items():
        verdict = "PASS" if all(o == "passed" for o in outcomes) else "FAIL"
        terminalreporter.write_line(f"ACCEPTANCE {verdict}: {name}")
