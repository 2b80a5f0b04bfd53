"""Synthetic league generator emitting format-conformant play-by-play.

Games alternate possessions. Drives are played snap by snap (see
``ScoringModel``) and end in a touchdown with PAT (7), a field goal (3) or
nothing. The number of possessions per game follows the two teams' latent
tempos, and the clock is spread over the drives so every game ends at 3600
seconds with a closing row that records the regulation score.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np

from .ingest import AWAY, GAME_SECONDS, HOME, GameRecord, PlayRecord


class SimConfigError(ValueError):
    pass


def _sigmoid(z):
    return 1.0 / (1.0 + math.exp(-z))


@dataclass(frozen=True)
class ScoringModel:
    """Snap-level drive model.

    Every snap may go the distance with probability
    ``sigmoid(td_intercept + td_strength * edge + td_yards * yards)``; otherwise
    it gains ``Normal(gain_mean + gain_strength * edge, gain_sd)`` yards or,
    with ``turnover_rate``, gives the ball away. Fourth down inside
    ``fg_range`` is a field-goal try made with probability
    ``sigmoid(fg_intercept + fg_strength * edge + fg_yards * yards)``; short
    fourth downs near midfield are played, longer ones punted.

    Late in a game the offense changes style: protecting a lead it loses
    ``protect_gain`` of its yards per snap and never goes for it on fourth
    down; chasing a deficit it goes for it everywhere outside field-goal
    range and turns the ball over ``chase_turnover`` times as often. A drive
    cut short by the clock (``max_snaps``) ends with a field-goal try when in
    range and nothing otherwise.
    """

    td_intercept: float = 0.3
    td_strength: float = 0.5
    td_yards: float = -0.17
    gain_mean: float = 4.0
    gain_strength: float = 2.0
    gain_sd: float = 3.0
    turnover_rate: float = 0.02
    fg_range: int = 35
    fg_intercept: float = 3.0
    fg_strength: float = 0.3
    fg_yards: float = -0.07
    punt_net: int = 40
    protect_gain: float = 0.5
    chase_turnover: float = 2.0

    def td_prob(self, edge: float, yards: int) -> float:
        return _sigmoid(self.td_intercept + self.td_strength * edge + self.td_yards * yards)

    def fg_prob(self, edge: float, yards: int) -> float:
        return _sigmoid(self.fg_intercept + self.fg_strength * edge + self.fg_yards * yards)

    def run_drive(self, rng, edge: float, start: int, mode: str = "normal",
                  max_snaps: int | None = None):
        """Play one drive from ``start`` yards out.

        ``mode`` is ``"normal"``, ``"protect"`` or ``"chase"``. Returns
        ``(snaps, points, next_start)`` where ``snaps`` lists the pre-snap
        ``(yards, down, distance)`` and ``next_start`` is where the other
        offense begins, before any kickoff after a score.
        """
        gain_mean = self.gain_mean + self.gain_strength * edge
        turnover = self.turnover_rate
        if mode == "protect":
            gain_mean *= 1.0 - self.protect_gain
        elif mode == "chase":
            turnover *= self.chase_turnover
        yards, down, dist = start, 1, min(10, start)
        snaps = []
        while True:
            if max_snaps is not None and len(snaps) == max_snaps:
                if yards <= self.fg_range and rng.random() < self.fg_prob(edge, yards):
                    return snaps, 3, 75
                return snaps, 0, 75
            snaps.append((yards, down, dist))
            if rng.random() < self.td_prob(edge, yards):
                return snaps, 7, 75
            if down == 4:
                if yards <= self.fg_range and mode != "chase":
                    if rng.random() < self.fg_prob(edge, yards):
                        return snaps, 3, 75
                    return snaps, 0, min(99, 100 - yards)
                go = mode == "chase" or (mode == "normal" and dist <= 2 and yards <= 55)
                if not go:
                    return snaps, 0, int(np.clip(100 + self.punt_net - yards, 1, 80))
            if rng.random() < turnover:
                return snaps, 0, min(99, 100 - yards)
            gain = int(round(rng.normal(gain_mean, self.gain_sd)))
            if gain >= yards:
                return snaps, 7, 75
            yards = min(99, yards - gain)
            if gain >= dist:
                down, dist = 1, min(10, yards)
            elif down == 4:
                return snaps, 0, min(99, 100 - yards)
            else:
                down, dist = down + 1, min(dist - gain, yards)


@functools.lru_cache(maxsize=32)
def drive_value_curve(model: ScoringModel, n_drives: int = 4000):
    """Monte Carlo expected points per drive from the 25, tabulated by edge."""
    rng = np.random.default_rng(12345)
    edges = np.linspace(-2.5, 2.5, 11)
    values = []
    for e in edges:
        values.append(np.mean([model.run_drive(rng, float(e), 75)[1] for _ in range(n_drives)]))
    return edges, np.asarray(values)


def expected_drive_points(model: ScoringModel, edge: float) -> float:
    edges, values = drive_value_curve(model)
    return float(np.interp(edge, edges, values))


@dataclass(frozen=True)
class SimConfig:
    n_teams: int = 24
    seasons: tuple[int, ...] = tuple(range(2014, 2022))
    games_per_team: int | None = 10
    strength_sd: float = 0.12
    strength_drift_sd: float = 0.04
    tempo_range: tuple[float, float] = (23.0, 31.0)
    home_edge: float = 0.06
    spread_noise_sd: float = 2.5
    possession_sd: float = 1.5
    late_possessions: int = 6
    late_lead: int = 8
    clock_snaps: tuple[int, int] = (1, 8)
    scoring: ScoringModel = field(default_factory=ScoringModel)
    strengths: tuple[float, ...] | None = None
    tempos: tuple[float, ...] | None = None
    seed: int = 0

    def validate(self) -> None:
        if self.n_teams < 2:
            raise SimConfigError("need at least two teams")
        if not self.seasons:
            raise SimConfigError("need at least one season")
        if self.games_per_team is not None:
            if self.games_per_team < 1:
                raise SimConfigError("games_per_team must be positive")
            if self.n_teams % 2:
                raise SimConfigError("random schedules need an even team count")
        lo, hi = self.tempo_range
        if not 0 < lo <= hi:
            raise SimConfigError(f"tempo range must be positive, got {self.tempo_range}")
        if self.tempos is not None:
            if len(self.tempos) != self.n_teams or min(self.tempos) <= 0:
                raise SimConfigError("tempos must be positive, one per team")
        if self.strengths is not None and len(self.strengths) != self.n_teams:
            raise SimConfigError("strengths must have one entry per team")
        if self.late_possessions < 0 or self.late_lead < 0:
            raise SimConfigError("late-game settings must be nonnegative")
        if not 1 <= self.clock_snaps[0] <= self.clock_snaps[1]:
            raise SimConfigError(f"clock_snaps must satisfy 1 <= lo <= hi, got {self.clock_snaps}")
        for v in (self.strength_sd, self.strength_drift_sd, self.spread_noise_sd,
                  self.possession_sd):
            if v < 0:
                raise SimConfigError("standard deviations must be nonnegative")


@dataclass
class Drive:
    offense: str
    possession_number: int
    start_yards: int
    points: int


@dataclass
class SimTruth:
    """Hidden quantities behind the emitted games."""

    tempo: dict[str, float]
    strength: dict[tuple[int, str], float]
    expected_margin: dict[str, float] = field(default_factory=dict)
    drives: dict[str, list[Drive]] = field(default_factory=dict)


def team_ids(n: int) -> list[str]:
    width = max(2, len(str(n)))
    return [f"T{i:0{width}d}" for i in range(1, n + 1)]


def _schedule(cfg: SimConfig, rng) -> list[tuple[int, int]]:
    n = cfg.n_teams
    if cfg.games_per_team is None:
        pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
        return [(i, j) if rng.random() < 0.5 else (j, i) for i, j in pairs]
    out = []
    for _ in range(cfg.games_per_team):
        perm = rng.permutation(n)
        for k in range(0, n, 2):
            a, b = int(perm[k]), int(perm[k + 1])
            out.append((a, b) if rng.random() < 0.5 else (b, a))
    return out


def simulate_game(cfg: SimConfig, season: int, game_no: int, home: str, away: str,
                  s_home: float, s_away: float, tempo_home: float, tempo_away: float,
                  truth: SimTruth | None = None) -> GameRecord:
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, season, game_no]))
    gid = f"{season}-{game_no:04d}"
    sc = cfg.scoring
    edge = {HOME: s_home - s_away + cfg.home_edge, AWAY: s_away - s_home}

    n_poss = max(8, int(round(rng.normal((tempo_home + tempo_away) / 2, cfg.possession_sd))))
    mean_poss = (tempo_home + tempo_away) / 2
    exp_margin = mean_poss / 2 * (expected_drive_points(sc, edge[HOME])
                                  - expected_drive_points(sc, edge[AWAY]))
    spread = -round(2 * (exp_margin + rng.normal(0.0, cfg.spread_noise_sd))) / 2 + 0.0

    # each half gets its own share of the clock; the last drive of a half is
    # cut short, and late drives depend on the score
    half = n_poss // 2
    weights = rng.gamma(4.0, size=n_poss)
    bounds = np.concatenate([
        [0.0], np.cumsum(weights[:half]) / weights[:half].sum() * (GAME_SECONDS / 2),
        GAME_SECONDS / 2 + np.cumsum(weights[half:]) / weights[half:].sum() * (GAME_SECONDS / 2),
    ])
    offense = HOME if rng.random() < 0.5 else AWAY
    score = {HOME: 0, AWAY: 0}
    start = 75
    plays, drives = [], []
    idx = 0
    for k in range(n_poss):
        other = AWAY if offense == HOME else HOME
        mode = "normal"
        if k >= n_poss - cfg.late_possessions:
            margin = score[offense] - score[other]
            if margin > cfg.late_lead:
                mode = "protect"
            elif margin < -cfg.late_lead:
                mode = "chase"
        limit = None
        if k in (half - 1, n_poss - 1):
            limit = int(rng.integers(cfg.clock_snaps[0], cfg.clock_snaps[1] + 1))
        if k == half:
            start = 75
        snaps, points, next_start = sc.run_drive(rng, edge[offense], start, mode, limit)
        n_plays = len(snaps)
        t0, t1 = bounds[k], bounds[k + 1]
        for i, (yl, down, dist) in enumerate(snaps):
            idx += 1
            t = min(int(t0 + (t1 - t0) * i / n_plays), GAME_SECONDS - 1)
            plays.append(PlayRecord(gid, season, idx, t, score[HOME], score[AWAY], offense,
                                    down, dist, yl, k + 1))
        drives.append(Drive(offense, k + 1, start, points))
        score[offense] += points
        start = next_start
        offense = other

    # closing row: regulation score, no down
    idx += 1
    prev_off = drives[-1].offense
    plays.append(PlayRecord(gid, season, idx, GAME_SECONDS, score[HOME], score[AWAY], prev_off,
                            None, 0, snaps[-1][0], n_poss))
    final_h, final_a = score[HOME], score[AWAY]
    if final_h == final_a:
        home_wins_ot = rng.random() < _sigmoid(edge[HOME] - edge[AWAY])
        ot_points = 7 if rng.random() < 0.5 else 3
        if home_wins_ot:
            final_h += ot_points
        else:
            final_a += ot_points

    if truth is not None:
        truth.expected_margin[gid] = exp_margin
        truth.drives[gid] = drives
    return GameRecord(gid, season, home, away, float(spread), final_h, final_a, tuple(plays))


def simulate_season(cfg: SimConfig, season: int, truth: SimTruth | None = None):
    """Simulate one season; returns ``(games, truth)``."""
    cfg.validate()
    if truth is None:
        truth = _latent(cfg)
    teams = team_ids(cfg.n_teams)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, season, 1_000_000]))
    games = []
    for game_no, (h, a) in enumerate(_schedule(cfg, rng), start=1):
        th, ta = teams[h], teams[a]
        games.append(simulate_game(cfg, season, game_no, th, ta,
                                   truth.strength[(season, th)], truth.strength[(season, ta)],
                                   truth.tempo[th], truth.tempo[ta], truth))
    return games, truth


def _latent(cfg: SimConfig) -> SimTruth:
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0]))
    teams = team_ids(cfg.n_teams)
    if cfg.tempos is not None:
        tempo = list(cfg.tempos)
    else:
        tempo = rng.uniform(*cfg.tempo_range, size=cfg.n_teams).tolist()
    if cfg.strengths is not None:
        base = np.asarray(cfg.strengths, dtype=float)
    else:
        base = rng.normal(0.0, cfg.strength_sd, size=cfg.n_teams)
    strength = {}
    for season in cfg.seasons:
        drift = rng.normal(0.0, cfg.strength_drift_sd, size=cfg.n_teams)
        if cfg.strengths is not None:
            drift = np.zeros(cfg.n_teams)
        for team, b, d in zip(teams, base, drift):
            strength[(season, team)] = float(b + d)
    return SimTruth(tempo=dict(zip(teams, tempo)), strength=strength)


def simulate(cfg: SimConfig):
    """Simulate every configured season; returns ``(games, truth)``."""
    cfg.validate()
    truth = _latent(cfg)
    games = []
    for season in cfg.seasons:
        g, _ = simulate_season(cfg, season, truth)
        games.extend(g)
    return games, truth
