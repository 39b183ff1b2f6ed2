from hypothesis import settings

settings.register_profile("default", deadline=None)
settings.load_profile("default")

# acceptance results, filled by tests/test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, title, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {n}. {title}: {detail}")
