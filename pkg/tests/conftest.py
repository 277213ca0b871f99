import time

import pytest

_START = time.perf_counter()
_LINES = []


@pytest.fixture
def report(request):
    """Record one verdict line per acceptance criterion, printed in the terminal summary."""
    def emit(number, ok, detail, seconds):
        _LINES.append((number, f"criterion {number:>2}: {'PASS' if ok else 'FAIL'} "
                               f"({seconds:.2f} s) {detail}"))
    return emit


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for _, line in sorted(_LINES):
        tr.write_line(line)
    total = time.perf_counter() - _START
    tr.write_line(f"whole suite: {'PASS' if total < 300 else 'FAIL'} "
                  f"({total:.1f} s, limit 300 s)")
