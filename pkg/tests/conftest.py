import pytest

from release_ladder.config import ModelParams, default_scenario, symmetric_benchmark
from release_ladder.ladder import solve_ladder


@pytest.fixture(scope="session")
def bench_params() -> ModelParams:
    return symmetric_benchmark()


@pytest.fixture(scope="session")
def bench_ladder(bench_params):
    return solve_ladder(bench_params)


@pytest.fixture(scope="session")
def scenario():
    return default_scenario()


@pytest.fixture(scope="session")
def ladder(scenario):
    return solve_ladder(scenario.params)


def pytest_terminal_summary(terminalreporter):
    lines = []
    for key in ("passed", "failed"):
        for rep in terminalreporter.stats.get(key, []):
            if rep.when == "call":
                lines += [v for k, v in rep.user_properties if k == "criterion"]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
