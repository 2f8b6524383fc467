import re

import pytest

_LINES: dict = {}


@pytest.fixture
def criterion(request):
    """Recorder for one acceptance criterion; the number comes from the test name."""
    k = int(re.search(r"criterion_(\d+)", request.node.name).group(1))

    def record(ok: bool, detail: str) -> bool:
        line = f"CRITERION {k}: {'PASS' if ok else 'FAIL'} {detail}"
        _LINES[k] = line
        print(line)
        return ok

    yield record
    _LINES.setdefault(k, f"CRITERION {k}: FAIL did not complete")


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_LINES):
        terminalreporter.write_line(_LINES[k])
