"""Command-line pipeline.

    cfbwp simulate     --out-dir data --seed 1
    cfbwp pace         --data data --artifacts art
    cfbwp train-pv     --data data --artifacts art --model boost --seed 1
    cfbwp fit-prior    --artifacts art [--poll poll.csv]
    cfbwp index        --data data --artifacts art
    cfbwp fit-weights  --data data --artifacts art --form d2 --seed 1
    cfbwp evaluate     --data data --artifacts art --seed 1
    cfbwp trace        --data data --artifacts art --game-id 2021-0007
    cfbwp pipeline     --out-dir run --seed 1

Every subcommand also takes ``--config file.json`` whose keys are flag names
(``n_test_seasons`` or ``n-test-seasons``); explicit flags win over the file.
Failures print one JSON error record on stderr and exit with 2 (usage),
3 (bad data), 4 (fit or convergence failure) or 5 (I/O).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, ingest, pace, pointvalue as pv, trees, winprob
from .evaluation import (EvaluationError, evaluate_models, fit_baseline, trace_csv,
                         trace_game)
from .sim import SimConfig, SimConfigError, simulate

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_FIT, EXIT_IO = 0, 2, 3, 4, 5
ARTIFACT_FORMAT_VERSION = 1


class CLIError(Exception):
    def __init__(self, message, code, kind=None, **detail):
        super().__init__(message)
        self.code = code
        self.kind = kind or type(self).__name__
        self.detail = detail


class UsageError(CLIError):
    def __init__(self, message, **detail):
        super().__init__(message, EXIT_USAGE, "UsageError", **detail)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# -- artifact io -------------------------------------------------------------

def _meta(kind, seed, **extra):
    return {"artifact": kind, "format_version": ARTIFACT_FORMAT_VERSION,
            "package_version": __version__, "seed": seed, **extra}


def _write(path: Path, text: str) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise CLIError(f"{path}: {exc.strerror or exc}", EXIT_IO, "DataIOError") from exc
    return path


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


def _write_json(path, obj):
    return _write(Path(path), _dumps(obj))


def _write_csv(path, text, meta):
    """CSV plus a ``.meta.json`` sidecar carrying the version and seed."""
    path = Path(path)
    _write(path, text)
    _write_json(path.with_name(path.name + ".meta.json"), meta)
    return path


def _read(path) -> str:
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            return fh.read()
    except OSError as exc:
        raise CLIError(f"{path}: {exc.strerror or exc}", EXIT_IO, "DataIOError",
                       path=str(path)) from exc


def _read_json(path):
    text = _read(path)
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise CLIError(f"{path}: invalid JSON ({exc.msg})", EXIT_DATA, "FormatError",
                       path=str(path)) from None


def _check_artifact(d, kind, path):
    if not isinstance(d, dict) or d.get("artifact") != kind:
        raise CLIError(f"{path}: not a {kind} artifact", EXIT_DATA, "FormatError",
                       path=str(path))
    if d.get("format_version") != ARTIFACT_FORMAT_VERSION:
        raise CLIError(f"{path}: unsupported format version {d.get('format_version')!r}",
                       EXIT_DATA, "FormatError", path=str(path))
    return d


def _load_games(data):
    return ingest.parse_game_file(data)


def _load_paces(art: Path, seasons):
    out = {}
    for s in sorted(seasons):
        p = art / f"pace_{s}.csv"
        out[s] = pace.PaceTable.from_csv(_read(p), s)
    return out


def _load_partition(art: Path):
    p = art / "partition.json"
    d = _check_artifact(_read_json(p), "partition", p)
    return ingest.DataPartition(frozenset(d["test_seasons"]), frozenset(d["point_value_games"]),
                                frozenset(d["win_prob_games"]), d["split_seed"])


def _load_pv_model(art: Path):
    return pv.loads_model(_read(art / "pv_model.json"))


def _load_prior(art: Path):
    p = art / "prior.json"
    if not p.exists():
        return winprob.PriorTable.default()
    d = _read_json(p)
    rows = d["rows"] if isinstance(d, dict) else d
    return winprob.PriorTable.from_rows(rows)


def _load_index(art: Path):
    p = art / "index.json"
    d = _read_json(p)
    sched = winprob.WindowSchedule(**d.get("schedule", {}))
    return winprob.ReferenceIndex.from_dict(d), sched


def _load_weights(art: Path):
    p = art / "weights.json"
    d = _read_json(p)
    return winprob.WeightSpec.from_dict(d), float(d["sigma"])


def _wp_model(art: Path, with_weights=True):
    index, sched = _load_index(art)
    prior = _load_prior(art)
    weights, sigma = _load_weights(art) if with_weights else (None, 14.0)
    return winprob.WinProbModel(index, prior, weights, sched, sigma)


def _seasons(spec):
    """``2014-2021`` or ``2019,2020`` -> tuple of years."""
    if isinstance(spec, (list, tuple)):
        return tuple(int(s) for s in spec)
    spec = str(spec)
    try:
        if "-" in spec:
            lo, hi = spec.split("-")
            return tuple(range(int(lo), int(hi) + 1))
        return tuple(int(s) for s in spec.split(","))
    except ValueError:
        raise UsageError(f"bad seasons spec {spec!r}; use 2014-2021 or 2019,2020") from None


# -- subcommands -------------------------------------------------------------

def cmd_simulate(a):
    cfg = SimConfig(n_teams=a.teams, seasons=_seasons(a.seasons),
                    games_per_team=None if a.games_per_team == 0 else a.games_per_team,
                    seed=a.seed)
    games, _ = simulate(cfg)
    out = Path(a.out_dir)
    written = []
    if a.format == "jsonl":
        written.append(_write(out / "games.jsonl", ingest.jsonl_text(games)))
    else:
        written.append(_write(out / "games.csv", ingest.games_csv_text(games)))
        written.append(_write(out / "plays.csv", ingest.plays_csv_text(games)))
    written.append(_write_json(out / "simulation.meta.json", _meta(
        "simulation", a.seed, teams=a.teams, seasons=list(cfg.seasons),
        games_per_team=cfg.games_per_team, n_games=len(games))))
    return written


def cmd_pace(a):
    games = _load_games(a.data)
    art = Path(a.artifacts)
    written = []
    for season, stats in pace.team_season_stats(games).items():
        try:
            table = pace.solve_pace(stats, a.tol, a.max_iter)
        except pace.PaceConvergenceError as exc:
            raise CLIError(str(exc), EXIT_FIT, "PaceConvergenceError", season=season) from exc
        written.append(_write_csv(art / f"pace_{season}.csv", table.to_csv(), _meta(
            "pace", None, season=season, iterations=table.iterations, tolerance=table.tolerance,
            league_mean=table.league_mean, max_change=table.max_change, flags=table.flags)))
    return written


def _tree_params(a, default):
    return trees.TreeParams(
        max_depth=default.max_depth if a.max_depth is None else
        (None if a.max_depth < 0 else a.max_depth),
        min_leaf_size=default.min_leaf_size if a.min_leaf is None else a.min_leaf,
        features_per_split=(default.features_per_split if a.features_per_split is None
                            else a.features_per_split),
        sample_fraction=default.sample_fraction,
    )


def cmd_train_pv(a):
    games = _load_games(a.data)
    art = Path(a.artifacts)
    part = ingest.partition(games, a.n_test_seasons, a.split_seed)
    pv_games, _, test_games = part.split(games)
    paces = _load_paces(art, {g.season for g in games})
    train = pv.build_examples(pv_games, paces)
    test = pv.build_examples(test_games, paces)
    kw = dict(seed=a.seed,
              n_forest_trees=a.n_trees or 500,
              forest_params=_tree_params(a, trees.DEFAULT_FOREST_PARAMS),
              eta=a.eta,
              n_boost_trees=a.n_trees or 200,
              boost_params=_tree_params(a, trees.DEFAULT_BOOST_PARAMS))
    kinds = pv.MODEL_KINDS if a.model == "best" else (a.model,)
    if a.tune and "boost" in kinds:
        ids = sorted(set(train.game_ids))
        perm = np.random.default_rng(a.seed).permutation(len(ids))
        valid_ids = {ids[i] for i in perm[: max(1, len(ids) // 4)]}
        in_valid = np.array([g in valid_ids for g in train.game_ids])
        tuned = pv.tune_boosted(train.subset(~in_valid), train.subset(in_valid),
                                pv.BoostGrid(eta=a.eta), a.seed)
        kw.update(eta=tuned.eta, n_boost_trees=tuned.n_trees, boost_params=tuned.params)
    report = pv.compare_models(train, test, kinds, **kw)
    model = report.models[report.chosen]
    part_doc = _meta("partition", a.seed, split_seed=a.split_seed, **{
        k: v for k, v in part.to_dict().items() if k != "seed"})
    return [
        _write_json(art / "partition.json", part_doc),
        _write(art / "pv_model.json", pv.dumps_model(model, a.seed)),
        _write_csv(art / "pv_report.csv", report.to_csv(), _meta(
            "pv_report", a.seed, chosen=report.chosen, n_train=len(train), n_test=len(test))),
    ]


def cmd_fit_prior(a):
    if a.poll:
        table = winprob.fit_prior_from_poll(winprob.read_poll_csv(_read(a.poll)))
        source = "poll"
    else:
        table = winprob.PriorTable.default()
        source = "default"
    doc = _meta("prior", None, source=source)
    doc["rows"] = [r.to_dict() for r in table.rows]
    return [_write_json(Path(a.artifacts) / "prior.json", doc)]


def _schedule(a):
    return winprob.WindowSchedule(a.h_tau, a.h_omega, a.shrink_start, a.shrink_end)


def cmd_index(a):
    games = _load_games(a.data)
    art = Path(a.artifacts)
    part = _load_partition(art)
    _, wp_games, _ = part.split(games)
    paces = _load_paces(art, {g.season for g in games})
    index = winprob.index_reference_games(wp_games, paces, _load_pv_model(art))
    doc = index.to_dict(a.seed)
    doc["schedule"] = _schedule(a).__dict__
    return [_write_json(art / "index.json", doc)]


def cmd_fit_weights(a):
    games = _load_games(a.data)
    art = Path(a.artifacts)
    part = _load_partition(art)
    _, wp_games, _ = part.split(games)
    paces = _load_paces(art, {g.season for g in games})
    pv_model = _load_pv_model(art)
    sigma = a.sigma if a.sigma is not None else winprob.estimate_sigma(wp_games)
    model = _wp_model(art, with_weights=False)
    model.sigma = sigma
    ts = winprob.weight_training_set(model, wp_games, paces, pv_model)
    spec = winprob.fit_weights(a.form, ts.t, ts.lead, ts.p_hat, ts.p_pre, ts.y, seed=a.seed)
    doc = spec.to_dict()
    doc["sigma"] = sigma
    doc["n_plays"] = len(ts.y)
    return [_write_json(art / "weights.json", doc)]


def cmd_evaluate(a):
    games = _load_games(a.data)
    art = Path(a.artifacts)
    part = _load_partition(art)
    _, wp_games, test_games = part.split(games)
    paces = _load_paces(art, {g.season for g in games})
    pv_model = _load_pv_model(art)
    model = _wp_model(art)
    base = None
    if a.baseline_trees > 0:
        base = fit_baseline(wp_games, paces, a.baseline_trees, seed=a.seed)
    report = evaluate_models(test_games, paces, pv_model, model, base)
    written = [_write_csv(art / "brier_report.csv", report.to_csv(), _meta(
        "brier_report", a.seed, seasons=list(report.seasons)))]
    if a.dump_predictions:
        names = [r[0] for r in report.rows]
        lines = [",".join(names + ["y"])]
        cols = [report.predictions[n] for n in names] + [report.predictions["y"]]
        for row in zip(*cols):
            lines.append(",".join(repr(float(v)) for v in row))
        written.append(_write_csv(art / "brier_predictions.csv", "\n".join(lines) + "\n",
                                  _meta("brier_predictions", a.seed)))
    return written


def cmd_trace(a):
    games = _load_games(a.data)
    art = Path(a.artifacts)
    game = next((g for g in games if g.game_id == a.game_id), None)
    if game is None:
        raise CLIError(f"game id {a.game_id!r} not found in {a.data}", EXIT_DATA,
                       "UnknownGameError", game_id=a.game_id)
    paces = _load_paces(art, {game.season})
    rows = trace_game(game, paces, _load_pv_model(art), _wp_model(art))
    out = Path(a.out_dir) if a.out_dir else art
    return [_write_csv(out / f"trace_{a.game_id}.csv", trace_csv(rows),
                       _meta("trace", None, game_id=a.game_id, n_rows=len(rows)))]


def cmd_pipeline(a):
    root = Path(a.out_dir)
    data = root / "data"
    art = root / "artifacts"
    ns = argparse.Namespace(**vars(a))
    ns.data, ns.artifacts = str(data), str(art)
    written = []
    if a.data_in:
        ns.data = a.data_in
    else:
        ns.out_dir = str(data)
        written += cmd_simulate(ns)
    written += cmd_pace(ns)
    written += cmd_train_pv(ns)
    written += cmd_fit_prior(ns)
    written += cmd_index(ns)
    written += cmd_fit_weights(ns)
    written += cmd_evaluate(ns)
    games = _load_games(ns.data)
    test = sorted(g.game_id for g in games
                  if g.season in _load_partition(art).test_seasons)
    for gid in test[: a.n_traces]:
        ns.game_id, ns.out_dir = gid, str(art / "traces")
        written += cmd_trace(ns)
    return written


# -- parser ------------------------------------------------------------------

def _add_data(p):
    p.add_argument("--data", required=True, help="directory, games CSV or JSONL file")


def _add_artifacts(p):
    p.add_argument("--artifacts", required=True, help="artifact directory")


def _add_seed(p):
    p.add_argument("--seed", type=int, required=True)


def _add_sim(p):
    p.add_argument("--teams", type=int, default=24)
    p.add_argument("--seasons", default="2014-2021")
    p.add_argument("--games-per-team", type=int, default=10, help="0 for a round robin")
    p.add_argument("--format", choices=("csv", "jsonl"), default="csv")


def _add_pace(p):
    p.add_argument("--tol", type=float, default=pace.DEFAULT_TOL)
    p.add_argument("--max-iter", type=int, default=pace.DEFAULT_MAX_ITER)


def _add_pv(p):
    p.add_argument("--model", choices=pv.MODEL_KINDS + ("best",), default="best")
    p.add_argument("--n-test-seasons", type=int, default=5)
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--n-trees", type=int, default=None)
    p.add_argument("--eta", type=float, default=0.1)
    p.add_argument("--max-depth", type=int, default=None, help="negative for unlimited")
    p.add_argument("--min-leaf", type=int, default=None)
    p.add_argument("--features-per-split", type=int, default=None)
    p.add_argument("--tune", action="store_true", help="tune the boosted model first")


def _add_window(p):
    d = winprob.WindowSchedule()
    p.add_argument("--h-tau", type=float, default=d.h_tau)
    p.add_argument("--h-omega", type=float, default=d.h_omega)
    p.add_argument("--shrink-start", type=float, default=d.shrink_start)
    p.add_argument("--shrink-end", type=float, default=d.shrink_end)


def _add_weights(p):
    p.add_argument("--form", type=str.upper, choices=winprob.WEIGHT_FORMS, default="D2")
    p.add_argument("--sigma", type=float, default=None, help="override the spread SD")


def _add_eval(p):
    p.add_argument("--baseline-trees", type=int, default=100)
    p.add_argument("--dump-predictions", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cfbwp", description="College football win probability pipeline")
    parser.add_argument("--version", action="version", version=f"cfbwp {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, *adders, help=None):
        p = sub.add_parser(name, help=help)
        p.add_argument("--config", help="JSON file of flag values")
        for f in adders:
            f(p)
        p.set_defaults(func=func)
        return p

    p = add("simulate", cmd_simulate, _add_seed, _add_sim, help="write a synthetic league")
    p.add_argument("--out-dir", required=True)
    add("pace", cmd_pace, _add_data, _add_artifacts, _add_pace, help="solve team paces")
    add("train-pv", cmd_train_pv, _add_data, _add_artifacts, _add_seed, _add_pv,
        help="train and compare point-value models")
    p = add("fit-prior", cmd_fit_prior, _add_artifacts, help="write the beta prior table")
    p.add_argument("--poll", help="poll CSV: t_lo,t_hi,lead_lo,lead_hi,prob")
    add("index", cmd_index, _add_data, _add_artifacts, _add_seed, _add_window,
        help="index the reference games")
    add("fit-weights", cmd_fit_weights, _add_data, _add_artifacts, _add_seed, _add_weights,
        help="fit the pregame blend weights")
    add("evaluate", cmd_evaluate, _add_data, _add_artifacts, _add_seed, _add_eval,
        help="Brier scores on the test seasons")
    p = add("trace", cmd_trace, _add_data, _add_artifacts, help="per-play trace for one game")
    p.add_argument("--game-id", required=True)
    p.add_argument("--out-dir", default=None)
    p = add("pipeline", cmd_pipeline, _add_seed, _add_sim, _add_pace, _add_pv, _add_window,
            _add_weights, _add_eval, help="run every step end to end")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--data-in", default=None, help="use existing data instead of simulating")
    p.add_argument("--n-traces", type=int, default=3)
    p.add_argument("--poll", default=None)
    return parser


def _config_path(argv):
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def _apply_config(parser, argv):
    """Parse ``argv`` with defaults taken from ``--config`` when given."""
    path = _config_path(argv)
    command = argv[0] if argv and not argv[0].startswith("-") else None
    subs = parser._subparsers._group_actions[0].choices
    if path is None or command not in subs:
        return parser.parse_args(argv)
    cfg = _read_json(path)
    if not isinstance(cfg, dict):
        raise UsageError(f"{path}: config must be a JSON object")
    sub = subs[command]
    known = {a.dest for a in sub._actions}
    defaults = {}
    for key, value in cfg.items():
        dest = key.replace("-", "_")
        if dest not in known or dest in ("help", "config"):
            raise UsageError(f"{path}: unknown setting {key!r} for {command}")
        defaults[dest] = value
    sub.set_defaults(**defaults)
    for action in sub._actions:
        if action.dest in defaults:
            action.required = False
    return parser.parse_args(argv)


_DATA_ERRORS = (ingest.SchemaError, ingest.InvariantError, ingest.PartitionError,
                pace.PaceError, pv.MissingPaceError, pv.ModelFormatError,
                winprob.PriorTableError, EvaluationError, KeyError)
_FIT_ERRORS = (pace.PaceConvergenceError, pv.RankDeficiencyError, winprob.PriorFitError,
               winprob.EmptyWindowError)
_USAGE_ERRORS = (trees.TreeParamError, pv.GridError, SimConfigError)


def _error_record(exc) -> tuple[int, dict]:
    if isinstance(exc, CLIError):
        return exc.code, {"error": exc.kind, "message": str(exc), **exc.detail}
    rec = {"error": type(exc).__name__, "message": str(exc)}
    for attr in ("path", "row", "field", "game_id"):
        v = getattr(exc, attr, None)
        if v is not None:
            rec[attr] = str(v) if attr == "path" else v
    if isinstance(exc, (ingest.DataIOError, OSError)):
        return EXIT_IO, rec
    if isinstance(exc, _FIT_ERRORS):
        return EXIT_FIT, rec
    if isinstance(exc, _USAGE_ERRORS):
        return EXIT_USAGE, rec
    if isinstance(exc, _DATA_ERRORS + (winprob.WinProbError, ValueError)):
        return EXIT_DATA, rec
    raise exc


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, sys.argv[1:] if argv is None else argv)
        written = args.func(args)
    except Exception as exc:  # noqa: BLE001 - mapped to an exit code below
        code, rec = _error_record(exc)
        rec["exit_code"] = code
        sys.stderr.write(json.dumps(rec, sort_keys=True) + "\n")
        return code
    for path in written:
        sys.stdout.write(f"{os.fspath(path)}\n")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
