import pytest

from cfbwp import pace
from cfbwp.sim import SimConfig, simulate


@pytest.fixture(scope="session")
def small_league():
    """Three seasons of a 12-team league with a random schedule."""
    games, truth = simulate(SimConfig(n_teams=12, seasons=(2019, 2020, 2021), games_per_team=8,
                                      seed=11))
    return games, truth


@pytest.fixture(scope="session")
def small_paces(small_league):
    games, _ = small_league
    return pace.solve_seasons(games)


def pytest_terminal_summary(terminalreporter):
    from tests import acceptance_log

    if not acceptance_log.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(acceptance_log.RESULTS):
        status, name = acceptance_log.RESULTS[n]
        terminalreporter.write_line(f"[{status}] {n:2d}. {name}")
