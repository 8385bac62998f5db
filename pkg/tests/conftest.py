import numpy as np
import pytest

from subspace_perturb.graph import (
    build_constraint_matrices,
    complete_graph,
    generate_geometric_graph,
    path_graph,
)


@pytest.fixture(scope="session")
def graph20():
    return generate_geometric_graph(20, seed=7)


@pytest.fixture(scope="session")
def triangle():
    return complete_graph(3)


@pytest.fixture(scope="session")
def path2():
    return path_graph(2)


@pytest.fixture(scope="session")
def cm20(graph20):
    return build_constraint_matrices(graph20, 1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)



# acceptance lines, printed once in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def record_acceptance(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


@pytest.fixture
def acceptance():
    return record_acceptance


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
