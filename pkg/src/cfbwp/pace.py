"""Opponent-adjusted team pace and expected possessions remaining.

A team's pace is the number of possessions (both offenses combined) it
would be expected to play in a game against an opponent of league-average
tempo. It is the fixed point of::

    mu     = mean(pace_prev)
    pace_k = mu + (possessions_k - sum(pace_prev[j] for j in opponents_k)) / games_k

iterated from zero until no team moves by more than ``tol``.
"""

from __future__ import annotations

import csv
import io
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .ingest import GAME_SECONDS

DEFAULT_TOL = 1e-4
DEFAULT_MAX_ITER = 10_000


class PaceError(ValueError):
    pass


class PaceConvergenceError(RuntimeError):
    def __init__(self, iterations, last_change):
        self.iterations = iterations
        self.last_change = last_change
        super().__init__(f"pace did not converge in {iterations} iterations "
                         f"(last max change {last_change:.6g})")


@dataclass(frozen=True)
class TeamSeasonStats:
    team: str
    season: int
    total_possessions: int
    games_played: int
    opponents: tuple[str, ...]


@dataclass
class PaceTable:
    season: int
    pace: dict[str, float]
    iterations: int
    tolerance: float
    league_mean: float
    max_change: float = 0.0
    flags: list[str] = field(default_factory=list)

    def __getitem__(self, team):
        return self.pace[team]

    def __contains__(self, team):
        return team in self.pace

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["team", "pace"])
        for team in sorted(self.pace):
            w.writerow([team, repr(self.pace[team])])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, season: int) -> "PaceTable":
        rows = list(csv.DictReader(io.StringIO(text)))
        pace = {r["team"]: float(r["pace"]) for r in rows}
        mean = float(np.mean(list(pace.values()))) if pace else 0.0
        return cls(season=season, pace=pace, iterations=0, tolerance=float("nan"),
                   league_mean=mean)


def solve_pace(stats, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> PaceTable:
    """Iterate the pace recursion for one season.

    Raises ``PaceConvergenceError`` when ``max_iter`` passes without the largest
    per-team change dropping to ``tol``.
    """
    stats = list(stats)
    if not stats:
        raise PaceError("no teams to rate")
    if not tol > 0:
        raise PaceError(f"tolerance must be positive, got {tol}")
    seasons = {s.season for s in stats}
    if len(seasons) != 1:
        raise PaceError(f"stats span several seasons: {sorted(seasons)}")
    teams = [s.team for s in stats]
    if len(set(teams)) != len(teams):
        raise PaceError("duplicate team in stats")
    pos = {t: i for i, t in enumerate(teams)}
    n = len(teams)
    opp = np.zeros((n, n))
    x = np.empty(n)
    w = np.empty(n)
    for i, s in enumerate(stats):
        if s.games_played < 1 or len(s.opponents) != s.games_played:
            raise PaceError(f"{s.team}: games_played must equal the opponent count")
        if s.total_possessions < s.games_played:
            raise PaceError(f"{s.team}: fewer possessions than games")
        for o in s.opponents:
            if o not in pos:
                raise PaceError(f"{s.team}: opponent {o!r} has no stats")
            opp[i, pos[o]] += 1
        x[i] = s.total_possessions
        w[i] = s.games_played

    prev = np.zeros(n)
    change = np.inf
    for it in range(1, max_iter + 1):
        mu = prev.mean()
        eps = (x - opp @ prev) / w
        cur = mu + eps
        change = float(np.max(np.abs(cur - prev)))
        prev = cur
        if change <= tol:
            break
    else:
        raise PaceConvergenceError(max_iter, change)

    table = PaceTable(season=stats[0].season, pace=dict(zip(teams, prev.tolist())),
                      iterations=it, tolerance=tol, league_mean=float(prev.mean()),
                      max_change=change)
    raw_mean = float(np.mean(x / w))
    if abs(table.league_mean - raw_mean) > 10 * tol:
        table.flags.append(
            f"league mean pace {table.league_mean:.4f} differs from mean possessions "
            f"per game {raw_mean:.4f}; schedule is unbalanced")
    return table


def expected_possessions_remaining(pace_home: float, pace_away: float, t: float) -> float:
    """Average of the two paces scaled by the fraction of regulation left."""
    if not 0 <= t <= GAME_SECONDS:
        raise ValueError(f"elapsed seconds {t} outside [0, {GAME_SECONDS}]")
    return ((GAME_SECONDS - t) / GAME_SECONDS) * ((pace_home + pace_away) / 2)


def game_possessions(game) -> int:
    """Possessions played in ``game``, both offenses combined."""
    return len({p.possession_number for p in game.plays})


def team_season_stats(games, teams=None) -> dict[int, list[TeamSeasonStats]]:
    """Collect per-team possession totals for each season.

    Games against a team outside ``teams`` (default: every team seen) are
    dropped from both sides' totals, as are games without plays.
    """
    games = list(games)
    if teams is None:
        teams = {g.home_team for g in games} | {g.away_team for g in games}
    teams = set(teams)
    acc = defaultdict(lambda: defaultdict(lambda: [0, []]))
    for g in games:
        if g.home_team not in teams or g.away_team not in teams or not g.plays:
            continue
        n = game_possessions(g)
        for team, other in ((g.home_team, g.away_team), (g.away_team, g.home_team)):
            slot = acc[g.season][team]
            slot[0] += n
            slot[1].append(other)
    out = {}
    for season in sorted(acc):
        out[season] = [
            TeamSeasonStats(team, season, total, len(opps), tuple(sorted(opps)))
            for team, (total, opps) in sorted(acc[season].items())
        ]
    return out


def solve_seasons(games, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                  teams=None) -> dict[int, PaceTable]:
    return {season: solve_pace(stats, tol, max_iter)
            for season, stats in team_season_stats(games, teams).items()}
