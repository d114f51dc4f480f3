import pytest

# criterion number -> list of (ok, detail); filled by tests/test_acceptance.py
ACCEPTANCE = {}


@pytest.fixture
def acceptance():
    def record(number, ok, detail):
        ACCEPTANCE.setdefault(number, []).append((bool(ok), detail))
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[number]
        ok = all(p for p, _ in parts)
        tr.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  " + "; ".join(d for _, d in parts))
