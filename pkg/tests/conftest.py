import sys


def pytest_terminal_summary(terminalreporter):
    """Echo the one-line acceptance verdicts after the test tally."""
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "CRITERION_LINES", None) if mod else None
    if lines:
        terminalreporter.section("acceptance criteria")
        for ln in lines:
            terminalreporter.write_line(ln)
