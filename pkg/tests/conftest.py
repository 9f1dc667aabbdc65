import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "repo", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow], derandomize=True
)
settings.load_profile("repo")

# filled by test_acceptance; echoed in the terminal summary so the report survives output capture
ACCEPTANCE: dict[int, list] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        checks = ACCEPTANCE[number]
        status = "PASS" if all(c.passed for c in checks) else "FAIL"
        passed = sum(c.passed for c in checks)
        terminalreporter.write_line(f"criterion {number:2d}: {status} ({passed}/{len(checks)} checks)")
        for c in checks:
            terminalreporter.write_line("    " + c.line())


@pytest.fixture
def acceptance_log():
    return ACCEPTANCE
