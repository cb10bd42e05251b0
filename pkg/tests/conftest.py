"""Echo acceptance verdict lines after the run, outside output capture."""

verdict_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if verdict_lines:
        terminalreporter.section("acceptance verdicts")
        for line in verdict_lines:
            terminalreporter.write_line(line)
