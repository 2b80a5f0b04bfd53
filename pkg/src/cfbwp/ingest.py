"""Play-by-play data model, file formats and the train/test partition.

Two interchangeable on-disk forms:

* a CSV pair: ``games.csv`` (one row per game) and ``plays.csv`` (one row
  per play), with the headers in ``GAME_FIELDS`` / ``PLAY_FIELDS``;
* JSONL: one game object per line carrying its ``plays`` array.

Scores on a play row are the scores when the play starts. Spread sign
convention: negative means the home team is favored. Overtime plays are not
part of the format (``elapsed_seconds`` is capped at 3600); a game decided in
overtime still carries its overtime final score.
"""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

HOME = "home"
AWAY = "away"
_POSS_CODE = {"H": HOME, "A": AWAY}
_POSS_OUT = {HOME: "H", AWAY: "A"}

PLAY_FIELDS = (
    "game_id", "season", "play_index", "elapsed_seconds", "home_score", "away_score",
    "possession", "down", "distance", "yards_to_endzone", "possession_number",
)
GAME_FIELDS = (
    "game_id", "season", "home_team", "away_team", "pregame_spread",
    "final_home_score", "final_away_score",
)
GAME_SECONDS = 3600


class IngestError(Exception):
    """Base class for every ingest failure."""


class DataIOError(IngestError):
    """The file could not be read or written."""


class SchemaError(IngestError):
    """A row is malformed: wrong header, unparsable or out-of-range field."""

    def __init__(self, message, *, path=None, row=None, field=None):
        self.path = path
        self.row = row
        self.field = field
        where = []
        if path is not None:
            where.append(str(path))
        if row is not None:
            where.append(f"row {row}")
        if field is not None:
            where.append(f"field '{field}'")
        super().__init__(f"{': '.join([', '.join(where), message]) if where else message}")


class InvariantError(IngestError):
    """Rows parse individually but a game as a whole is inconsistent."""

    def __init__(self, message, *, game_id=None, row=None):
        self.game_id = game_id
        self.row = row
        prefix = f"game {game_id}: " if game_id is not None else ""
        suffix = f" (row {row})" if row is not None else ""
        super().__init__(prefix + message + suffix)


@dataclass(frozen=True)
class PlayRecord:
    game_id: str
    season: int
    play_index: int
    elapsed_seconds: int
    home_score: int
    away_score: int
    possession: str
    down: int | None
    distance: int
    yards_to_endzone: int
    possession_number: int

    @property
    def home_lead(self) -> int:
        return self.home_score - self.away_score

    @property
    def home_has_ball(self) -> bool:
        return self.possession == HOME


@dataclass(frozen=True)
class GameRecord:
    game_id: str
    season: int
    home_team: str
    away_team: str
    pregame_spread: float
    final_home_score: int
    final_away_score: int
    plays: tuple[PlayRecord, ...] = ()

    @property
    def home_win(self) -> int:
        return int(self.final_home_score > self.final_away_score)

    @property
    def final_margin(self) -> int:
        return self.final_home_score - self.final_away_score

    def regulation_score(self) -> tuple[int, int]:
        """Home and away score at the end of regulation.

        A closing play stamped at 3600 seconds carries the regulation score;
        without one the final score is the best available answer.
        """
        if self.plays and self.plays[-1].elapsed_seconds == GAME_SECONDS:
            last = self.plays[-1]
            return last.home_score, last.away_score
        return self.final_home_score, self.final_away_score


@dataclass(frozen=True)
class DataPartition:
    test_seasons: frozenset
    point_value_games: frozenset
    win_prob_games: frozenset
    seed: int

    def split(self, games):
        """Return ``(point_value, win_prob, test)`` lists preserving input order."""
        pv = [g for g in games if g.game_id in self.point_value_games]
        wp = [g for g in games if g.game_id in self.win_prob_games]
        test = [g for g in games if g.season in self.test_seasons]
        return pv, wp, test

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "test_seasons": sorted(self.test_seasons),
            "point_value_games": sorted(self.point_value_games),
            "win_prob_games": sorted(self.win_prob_games),
        }


# -- field parsing -----------------------------------------------------------

def _int(raw, field, row, path, lo=None, hi=None):
    try:
        v = int(raw)
    except (TypeError, ValueError):
        raise SchemaError(f"expected an integer, got {raw!r}", path=path, row=row,
                          field=field) from None
    if (lo is not None and v < lo) or (hi is not None and v > hi):
        rng = f"[{'-inf' if lo is None else lo}, {'inf' if hi is None else hi}]"
        raise SchemaError(f"value {v} outside {rng}", path=path, row=row, field=field)
    return v


def _float(raw, field, row, path):
    try:
        v = float(raw)
    except (TypeError, ValueError):
        raise SchemaError(f"expected a number, got {raw!r}", path=path, row=row,
                          field=field) from None
    if not np.isfinite(v):
        raise SchemaError(f"non-finite value {raw!r}", path=path, row=row, field=field)
    return v


def _text(raw, field, row, path):
    if raw is None or str(raw) == "":
        raise SchemaError("empty value", path=path, row=row, field=field)
    return str(raw)


def _play_from_fields(d, row, path) -> PlayRecord:
    poss_raw = d.get("possession")
    if poss_raw not in _POSS_CODE:
        raise SchemaError(f"expected H or A, got {poss_raw!r}", path=path, row=row,
                          field="possession")
    down_raw = d.get("down")
    down = None if down_raw in ("", None) else _int(down_raw, "down", row, path, 1, 4)
    play = PlayRecord(
        game_id=_text(d.get("game_id"), "game_id", row, path),
        season=_int(d.get("season"), "season", row, path),
        play_index=_int(d.get("play_index"), "play_index", row, path, 1),
        elapsed_seconds=_int(d.get("elapsed_seconds"), "elapsed_seconds", row, path, 0,
                             GAME_SECONDS),
        home_score=_int(d.get("home_score"), "home_score", row, path, 0),
        away_score=_int(d.get("away_score"), "away_score", row, path, 0),
        possession=_POSS_CODE[poss_raw],
        down=down,
        distance=_int(d.get("distance"), "distance", row, path, 0),
        yards_to_endzone=_int(d.get("yards_to_endzone"), "yards_to_endzone", row, path, 1, 100),
        possession_number=_int(d.get("possession_number"), "possession_number", row, path, 1),
    )
    if play.distance > play.yards_to_endzone:
        raise SchemaError(
            f"distance {play.distance} exceeds yards_to_endzone {play.yards_to_endzone}",
            path=path, row=row, field="distance")
    return play


def _game_from_fields(d, row, path) -> GameRecord:
    return GameRecord(
        game_id=_text(d.get("game_id"), "game_id", row, path),
        season=_int(d.get("season"), "season", row, path),
        home_team=_text(d.get("home_team"), "home_team", row, path),
        away_team=_text(d.get("away_team"), "away_team", row, path),
        pregame_spread=_float(d.get("pregame_spread"), "pregame_spread", row, path),
        final_home_score=_int(d.get("final_home_score"), "final_home_score", row, path, 0),
        final_away_score=_int(d.get("final_away_score"), "final_away_score", row, path, 0),
    )


def _check_game(game: GameRecord, rows=None) -> None:
    prev = None
    for k, p in enumerate(game.plays):
        row = rows[k] if rows is not None else None
        if p.season != game.season:
            raise InvariantError(f"play season {p.season} differs from game season "
                                 f"{game.season}", game_id=game.game_id, row=row)
        if prev is not None:
            if p.play_index <= prev.play_index:
                raise InvariantError("play_index not strictly increasing",
                                     game_id=game.game_id, row=row)
            if p.possession_number < prev.possession_number:
                raise InvariantError("possession_number decreases",
                                     game_id=game.game_id, row=row)
            if p.elapsed_seconds < prev.elapsed_seconds:
                raise InvariantError("clock runs backward", game_id=game.game_id, row=row)
        prev = p
    if prev is not None and (prev.home_score > game.final_home_score
                             or prev.away_score > game.final_away_score):
        raise InvariantError("last play's score exceeds the final score",
                             game_id=game.game_id)


def validate_game(game: GameRecord) -> GameRecord:
    """Raise ``InvariantError`` if ``game`` breaks a cross-row invariant."""
    _check_game(game)
    return game


# -- readers -----------------------------------------------------------------

def _open_text(path, mode="r"):
    try:
        return open(path, mode, encoding="utf-8", newline="")
    except OSError as exc:
        raise DataIOError(f"{path}: {exc.strerror or exc}") from exc


def _read_csv(path, expected):
    with _open_text(path) as fh:
        try:
            text = fh.read()
        except (OSError, UnicodeDecodeError) as exc:
            raise DataIOError(f"{path}: {exc}") from exc
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError("empty file, header missing", path=path, row=1) from None
    if tuple(header) != expected:
        raise SchemaError(f"header {header} != expected {list(expected)}", path=path, row=1)
    out = []
    for lineno, rec in enumerate(reader, start=2):
        if len(rec) != len(expected):
            raise SchemaError(f"expected {len(expected)} fields, got {len(rec)}",
                              path=path, row=lineno)
        out.append((lineno, dict(zip(expected, rec))))
    return out


def read_csv_pair(games_path, plays_path) -> list[GameRecord]:
    game_rows = _read_csv(games_path, GAME_FIELDS)
    play_rows = _read_csv(plays_path, PLAY_FIELDS)
    games = {}
    order = []
    for lineno, d in game_rows:
        g = _game_from_fields(d, lineno, games_path)
        if g.game_id in games:
            raise InvariantError("duplicate game row", game_id=g.game_id, row=lineno)
        games[g.game_id] = g
        order.append(g.game_id)
    plays = {gid: [] for gid in order}
    rows = {gid: [] for gid in order}
    for lineno, d in play_rows:
        p = _play_from_fields(d, lineno, plays_path)
        if p.game_id not in plays:
            raise InvariantError("play references an unknown game", game_id=p.game_id,
                                 row=lineno)
        plays[p.game_id].append(p)
        rows[p.game_id].append(lineno)
    out = []
    for gid in order:
        g = games[gid]
        g = GameRecord(**{**g.__dict__, "plays": tuple(plays[gid])})
        _check_game(g, rows[gid])
        out.append(g)
    return out


def read_jsonl(path) -> list[GameRecord]:
    with _open_text(path) as fh:
        try:
            lines = fh.read().split("\n")
        except (OSError, UnicodeDecodeError) as exc:
            raise DataIOError(f"{path}: {exc}") from exc
    out, seen = [], set()
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON: {exc.msg}", path=path, row=lineno) from None
        if not isinstance(obj, dict):
            raise SchemaError("expected a JSON object", path=path, row=lineno)
        fields = {k: ("" if obj.get(k) is None else obj.get(k)) for k in GAME_FIELDS}
        g = _game_from_fields(fields, lineno, path)
        raw_plays = obj.get("plays", [])
        if not isinstance(raw_plays, list):
            raise SchemaError("plays must be an array", path=path, row=lineno, field="plays")
        plays = []
        for pd in raw_plays:
            if not isinstance(pd, dict):
                raise SchemaError("play entries must be objects", path=path, row=lineno,
                                  field="plays")
            flat = {k: ("" if pd.get(k) is None else str(pd.get(k))) for k in PLAY_FIELDS}
            plays.append(_play_from_fields(flat, lineno, path))
        if g.game_id in seen:
            raise InvariantError("duplicate game", game_id=g.game_id, row=lineno)
        seen.add(g.game_id)
        g = GameRecord(**{**g.__dict__, "plays": tuple(plays)})
        if any(p.game_id != g.game_id for p in plays):
            raise InvariantError("play game_id differs from its game", game_id=g.game_id,
                                 row=lineno)
        _check_game(g, [lineno] * len(plays))
        out.append(g)
    return out


def parse_game_file(path, plays_path=None) -> list[GameRecord]:
    """Parse games from a JSONL file, a games CSV, or a directory.

    For a games CSV the plays file defaults to the sibling whose name swaps
    ``games`` for ``plays`` (``games.csv`` -> ``plays.csv``). A directory must
    contain ``games.csv`` and ``plays.csv`` or ``games.jsonl``.
    """
    path = Path(path)
    if not path.exists():
        raise DataIOError(f"{path}: no such file or directory")
    if path.is_dir():
        if (path / "games.csv").exists():
            return read_csv_pair(path / "games.csv", path / "plays.csv")
        if (path / "games.jsonl").exists():
            return read_jsonl(path / "games.jsonl")
        raise DataIOError(f"{path}: no games.csv or games.jsonl found")
    if path.suffix == ".jsonl":
        return read_jsonl(path)
    if plays_path is None:
        if "games" not in path.name:
            raise DataIOError(f"{path}: cannot infer the plays file; pass plays_path")
        plays_path = path.with_name(path.name.replace("games", "plays"))
    return read_csv_pair(path, plays_path)


# -- writers -----------------------------------------------------------------

def _fmt_float(v: float) -> str:
    return repr(float(v))


def _play_row(p: PlayRecord) -> list[str]:
    return [p.game_id, str(p.season), str(p.play_index), str(p.elapsed_seconds),
            str(p.home_score), str(p.away_score), _POSS_OUT[p.possession],
            "" if p.down is None else str(p.down), str(p.distance),
            str(p.yards_to_endzone), str(p.possession_number)]


def _game_row(g: GameRecord) -> list[str]:
    return [g.game_id, str(g.season), g.home_team, g.away_team, _fmt_float(g.pregame_spread),
            str(g.final_home_score), str(g.final_away_score)]


def games_csv_text(games) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(GAME_FIELDS)
    for g in games:
        w.writerow(_game_row(g))
    return buf.getvalue()


def plays_csv_text(games) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PLAY_FIELDS)
    for g in games:
        for p in g.plays:
            w.writerow(_play_row(p))
    return buf.getvalue()


def jsonl_text(games) -> str:
    lines = []
    for g in games:
        obj = dict(zip(GAME_FIELDS, [g.game_id, g.season, g.home_team, g.away_team,
                                     float(g.pregame_spread), g.final_home_score,
                                     g.final_away_score]))
        obj["plays"] = [
            {"game_id": p.game_id, "season": p.season, "play_index": p.play_index,
             "elapsed_seconds": p.elapsed_seconds, "home_score": p.home_score,
             "away_score": p.away_score, "possession": _POSS_OUT[p.possession],
             "down": p.down, "distance": p.distance,
             "yards_to_endzone": p.yards_to_endzone,
             "possession_number": p.possession_number}
            for p in g.plays
        ]
        lines.append(json.dumps(obj, separators=(",", ":")))
    return "".join(line + "\n" for line in lines)


def _write_text(path, text):
    try:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise DataIOError(f"{path}: {exc.strerror or exc}") from exc


def write_csv_pair(games, games_path, plays_path) -> None:
    _write_text(games_path, games_csv_text(games))
    _write_text(plays_path, plays_csv_text(games))


def write_jsonl(games, path) -> None:
    _write_text(path, jsonl_text(games))


# -- partition ---------------------------------------------------------------

class PartitionError(ValueError):
    pass


def partition(games, n_test_seasons: int = 5, seed: int = 0) -> DataPartition:
    """Hold out the latest seasons for testing; halve the rest at random.

    The remaining games are shuffled (ordered by ``game_id`` first, so input
    order does not matter) and split into point-value and win-probability
    halves; with an odd count the point-value half gets the extra game.
    """
    seasons = sorted({g.season for g in games})
    if n_test_seasons < 0 or len(seasons) < n_test_seasons + 1:
        raise PartitionError(
            f"need at least {n_test_seasons + 1} seasons, found {len(seasons)}")
    test = frozenset(seasons[len(seasons) - n_test_seasons:]) if n_test_seasons else frozenset()
    rest = sorted(g.game_id for g in games if g.season not in test)
    perm = np.random.default_rng(seed).permutation(len(rest))
    half = (len(rest) + 1) // 2
    pv = frozenset(rest[i] for i in perm[:half])
    wp = frozenset(rest[i] for i in perm[half:])
    return DataPartition(test_seasons=test, point_value_games=pv, win_prob_games=wp,
                         seed=seed)
