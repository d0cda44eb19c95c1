import os

import pytest
from hypothesis import HealthCheck, settings

from teamcoord.game import RawNode, make_game
from teamcoord.games import benchmark
from teamcoord.refinement import perfect_recall_refinement

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def coord2():
    return benchmark("coord-2")


@pytest.fixture(scope="session")
def coord4():
    return benchmark("coord-4")


@pytest.fixture(scope="session")
def coord2_imb():
    return benchmark("coord-2-imb")


@pytest.fixture(scope="session")
def patrolling():
    return benchmark("patrolling_4_3")


@pytest.fixture(scope="session")
def coord2_refined(coord2):
    return perfect_recall_refinement(coord2)


@pytest.fixture(scope="session")
def coord4_refined(coord4):
    return perfect_recall_refinement(coord4)


@pytest.fixture(scope="session")
def patrolling_refined(patrolling):
    return perfect_recall_refinement(patrolling)


def observer_variant():
    """coord-2 where T1 sees O's move and T2 does not."""
    def leaf(o, a1, a2, k=100.0):
        u = k if o == a1 == a2 else 0.0
        return RawNode.terminal([u, u, -u], label=f"z{o}{a1}{a2}")

    def t2(o, a1):
        return RawNode.decision("T2", "T2.0", [(a, leaf(o, a1, a)) for a in "LR"], label=f"{o}{a1}")

    def t1(o):
        return RawNode.decision("T1", f"T1.{o}", [(a, t2(o, a)) for a in "LR"], label=o)

    root = RawNode.decision("O", "O.0", [(o, t1(o)) for o in "LR"], label="root")
    return make_game(("T1", "T2", "O"), root, team=("T1", "T2"), zero_sum=True)


_ACCEPTANCE: list[str] = []


def acceptance_line(line: str) -> None:
    print(line)
    _ACCEPTANCE.append(line)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
