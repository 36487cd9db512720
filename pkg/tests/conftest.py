"""Shared pytest wiring: collects acceptance-criterion outcomes and prints
one line per criterion in the terminal summary."""

ACCEPTANCE_RESULTS = {}


def record_criterion(name, status):
    ACCEPTANCE_RESULTS[name] = status


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, status in ACCEPTANCE_RESULTS.items():
        terminalreporter.write_line(f"{status:<10s} {name}")
