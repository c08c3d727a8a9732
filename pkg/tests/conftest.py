import _util


def pytest_terminal_summary(terminalreporter):
    if _util.ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _util.ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
