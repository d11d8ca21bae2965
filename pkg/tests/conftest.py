from __future__ import annotations

# (number, title, passed, detail, seconds), filled by test_acceptance.py
ACCEPTANCE_RESULTS: list[tuple[int, str, bool, str, float]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num, title, ok, detail, secs in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {num}. {title}: {detail} ({secs:.1f} s)")
