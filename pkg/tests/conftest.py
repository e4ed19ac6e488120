import pytest

LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[LINES] = []


@pytest.fixture(scope="session")
def criterion_log(request):
    """Record one PASS/FAIL line per acceptance criterion; printed in the terminal summary."""
    lines = request.config.stash[LINES]

    def log(name: str, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        lines.append(line)
        print(line)
        return ok
    return log


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash[LINES]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
