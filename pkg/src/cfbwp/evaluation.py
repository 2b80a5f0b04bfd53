"""Brier-score evaluation, the forest baseline and per-game traces."""

from __future__ import annotations

import io
import csv
from dataclasses import dataclass, field

import numpy as np

from . import pointvalue as pv
from .ingest import HOME
from .trees import TreeEnsemble, TreeParams, fit_random_forest
from .winprob import (PriorTable, WinProbModel, WindowSchedule, estimate_sigma, fit_weights,
                      game_states, index_reference_games, weight_training_set)

BASELINE_FEATURES = (
    "elapsed_seconds", "home_score", "away_score", "down", "distance", "yards_to_endzone",
    "possessions_played", "home_pace", "away_pace", "home_has_ball",
)
# unlimited depth, leaves of five, a third of the features per split
BASELINE_PARAMS = TreeParams(max_depth=None, min_leaf_size=5, features_per_split=3,
                             sample_fraction=1.0)
TRACE_FIELDS = ("play_index", "t", "lead", "tau", "omega", "p_mle", "p_bayes", "p_adjusted")


class EvaluationError(ValueError):
    pass


def brier(p, y) -> float:
    """Mean of ``(p - y)**2``."""
    p = np.asarray(p, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if p.size == 0:
        raise EvaluationError("Brier score of an empty set")
    if p.shape != y.shape:
        raise EvaluationError("predictions and outcomes differ in length")
    if np.any((p < 0) | (p > 1)) or np.any((y != 0) & (y != 1)):
        raise EvaluationError("need p in [0, 1] and y in {0, 1}")
    return float(np.mean((p - y) ** 2))


# -- baseline ----------------------------------------------------------------

def baseline_features(game, paces) -> np.ndarray:
    """Home-oriented state features for the forest baseline."""
    table = paces.get(game.season) if isinstance(paces, dict) else paces
    ph, pa = table[game.home_team], table[game.away_team]
    rows = []
    for p in game.plays:
        down, dist = (1, min(10, p.yards_to_endzone)) if p.down is None else (p.down, p.distance)
        rows.append((p.elapsed_seconds, p.home_score, p.away_score, down, dist,
                     p.yards_to_endzone, p.possession_number - 1, ph, pa,
                     1.0 if p.possession == HOME else 0.0))
    return np.asarray(rows, dtype=np.float64).reshape(-1, len(BASELINE_FEATURES))


@dataclass
class ForestBaseline:
    """Regression forest on the 0/1 outcome; its output is the mean leaf win rate."""

    forest: TreeEnsemble

    def predict_game(self, game, paces) -> np.ndarray:
        return np.clip(self.forest.predict(baseline_features(game, paces)), 0.0, 1.0)


def fit_baseline(games, paces, n_trees: int = 100, params: TreeParams = BASELINE_PARAMS,
                 seed: int = 0) -> ForestBaseline:
    games = sorted(games, key=lambda g: g.game_id)
    X = np.concatenate([baseline_features(g, paces) for g in games])
    y = np.concatenate([np.full(len(g.plays), g.home_win, dtype=np.float64) for g in games])
    return ForestBaseline(fit_random_forest(X, y, n_trees, params, seed))


# -- traces ------------------------------------------------------------------

@dataclass(frozen=True)
class TraceRow:
    play_index: int
    t: int
    lead: int
    tau: float
    omega: float
    p_mle: float | None
    p_bayes: float
    p_adjusted: float


def trace_game(game, paces, pv_model, wp_model: WinProbModel) -> list[TraceRow]:
    """One row per play, in play order."""
    st = game_states(game, paces, pv_model)
    pp = wp_model.p_pre(game)
    rows = []
    for play, est, i in zip(game.plays, wp_model.game_trace(st, pp), range(len(st))):
        rows.append(TraceRow(play.play_index, play.elapsed_seconds, int(st.lead[i]),
                             float(st.tau[i]), float(st.omega[i]), est.p_mle, est.p_bayes,
                             est.p_adjusted))
    return rows


def _fmt(v):
    return "" if v is None else repr(float(v))


def trace_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_FIELDS)
    for r in rows:
        w.writerow([r.play_index, r.t, r.lead, _fmt(r.tau), _fmt(r.omega), _fmt(r.p_mle),
                    _fmt(r.p_bayes), _fmt(r.p_adjusted)])
    return buf.getvalue()


# -- reports -----------------------------------------------------------------

@dataclass
class BrierReport:
    rows: list[tuple[str, float, int]]
    seasons: tuple[int, ...] = ()
    predictions: dict = field(default_factory=dict, repr=False)

    def __getitem__(self, model) -> float:
        for name, score, _ in self.rows:
            if name == model:
                return score
        raise KeyError(model)

    def to_csv(self) -> str:
        lines = ["model,brier,n_plays"]
        lines += [f"{m},{b!r},{n}" for m, b, n in self.rows]
        return "\n".join(lines) + "\n"


def evaluate_models(test_games, paces, pv_model, wp_model: WinProbModel,
                    baseline: ForestBaseline | None = None) -> BrierReport:
    """Brier score of every estimator over every regulation play of ``test_games``.

    The MLE column falls back to the prior mean where a window is empty.
    """
    games = sorted(test_games, key=lambda g: g.game_id)
    if not games:
        raise EvaluationError("no test games")
    cols = {k: [] for k in ("mle", "dynamic_bayes", "adjusted", "random_forest", "y")}
    for g in games:
        st = game_states(g, paces, pv_model)
        ests = wp_model.game_trace(st, wp_model.p_pre(g))
        for i, e in enumerate(ests):
            a, b = wp_model.prior.lookup(float(st.t[i]), int(st.lead[i]))
            cols["mle"].append(e.p_mle if e.p_mle is not None else a / (a + b))
            cols["dynamic_bayes"].append(e.p_bayes)
            cols["adjusted"].append(e.p_adjusted)
        if baseline is not None:
            cols["random_forest"].extend(baseline.predict_game(g, paces).tolist())
        cols["y"].extend([g.home_win] * len(st))
    y = np.asarray(cols["y"], dtype=np.float64)
    names = ["mle", "dynamic_bayes", "adjusted"] + (["random_forest"] if baseline else [])
    preds = {k: np.asarray(cols[k], dtype=np.float64) for k in names}
    preds["y"] = y
    rows = [(k, brier(preds[k], y), len(y)) for k in names]
    return BrierReport(rows, tuple(sorted({g.season for g in games})), preds)


# -- end to end --------------------------------------------------------------

@dataclass
class FittedArtifacts:
    paces: dict
    pv_model: object
    wp_model: WinProbModel
    baseline: ForestBaseline | None


def fit_artifacts(pv_games, wp_games, paces, *, seed: int = 0, pv_kind: str = "boost",
                  weight_form: str = "D2", prior: PriorTable | None = None,
                  schedule: WindowSchedule | None = None, sigma: float | None = None,
                  with_baseline: bool = True, pv_kwargs=None, baseline_trees: int = 100):
    """Train the point-value model, index the reference games, fit the blend.

    ``pv_games`` and ``wp_games`` must be disjoint: the point-value model is
    fit on the first and applied to the second.
    """
    if {g.game_id for g in pv_games} & {g.game_id for g in wp_games}:
        raise EvaluationError("point-value and win-probability games overlap")
    train = pv.build_examples(pv_games, paces)
    pv_model = pv.fit_kind(pv_kind, train, seed=seed, **(pv_kwargs or {}))
    index = index_reference_games(wp_games, paces, pv_model)
    model = WinProbModel(index, prior or PriorTable.default(), None,
                         schedule or WindowSchedule(),
                         sigma if sigma is not None else estimate_sigma(wp_games))
    ts = weight_training_set(model, wp_games, paces, pv_model)
    model.weights = fit_weights(weight_form, ts.t, ts.lead, ts.p_hat, ts.p_pre, ts.y, seed=seed)
    base = fit_baseline(wp_games, paces, baseline_trees, seed=seed) if with_baseline else None
    return FittedArtifacts(paces, pv_model, model, base)
