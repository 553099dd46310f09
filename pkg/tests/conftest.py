import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from pfschannel.curve import load_params  # noqa: E402

ACCEPTANCE_RESULTS: dict[str, str] = {}


@pytest.fixture(scope="session")
def toy():
    return load_params("toy")


@pytest.fixture(scope="session")
def sm2():
    return load_params("sm2")


@pytest.fixture(scope="session")
def toy_points(toy):
    from oracles import enumerate_affine

    return enumerate_affine(toy.p, toy.a, toy.b)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE_RESULTS, key=lambda k: int(k.split()[0][1:])):
        terminalreporter.write_line(f"{ACCEPTANCE_RESULTS[name]}  {name}")
