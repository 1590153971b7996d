import sys

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance summary")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def record(line: str) -> None:
    ACCEPTANCE_LINES.append(line)
    print(line, file=sys.stderr)
