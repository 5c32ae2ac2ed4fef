_criterion_lines = []


def pytest_runtest_logreport(report):
    # repeat the acceptance PASS/FAIL lines at the end of the run, since
    # pytest only shows captured output for failing tests
    if report.when == "call" and "test_acceptance" in report.nodeid:
        for _, text in report.sections:
            _criterion_lines.extend(line for line in text.splitlines() if line.startswith("[criterion"))


def pytest_terminal_summary(terminalreporter):
    if _criterion_lines:
        terminalreporter.section("acceptance criteria")
        for line in _criterion_lines:
            terminalreporter.write_line(line)
