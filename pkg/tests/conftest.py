"""Shared pytest plumbing: a place for tests to report headline figures."""

REPORTED: list = []


def report_figure(line: str) -> None:
    """Queue a line for the end-of-run summary (node counts and the like)."""
    REPORTED.append(line)


def pytest_terminal_summary(terminalreporter):
    if REPORTED:
        terminalreporter.section("reported figures")
        for line in REPORTED:
            terminalreporter.line(line)
