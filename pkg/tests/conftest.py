import pytest

VERDICTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[VERDICTS] = []


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL/SKIP line for the acceptance summary."""
    lines = request.config.stash[VERDICTS]

    def record(name, ok, detail=""):
        line = f"{name}: {'PASS' if ok else 'FAIL'}" + (f"  ({detail})" if detail else "")
        lines.append(line)
        print(line)
        return ok

    record.skip = lambda name, why: (lines.append(f"{name}: SKIP  ({why})"), print(f"{name}: SKIP  ({why})"))
    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash[VERDICTS]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
