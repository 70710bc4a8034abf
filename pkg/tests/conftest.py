import numpy as np
import pytest

from tipscope.integrate import compiled_available


@pytest.fixture(params=["compiled", "python"])
def backend(request, monkeypatch):
    """Run a test once per integration backend."""
    if request.param == "compiled" and not compiled_available():
        pytest.skip("compiled extension not built")
    monkeypatch.setenv("TIPSCOPE_BACKEND", request.param)
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_CRITERIA = []


@pytest.fixture
def record_criterion():
    """Collect one PASS/FAIL line per acceptance criterion for the terminal summary."""

    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _CRITERIA.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERIA, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
