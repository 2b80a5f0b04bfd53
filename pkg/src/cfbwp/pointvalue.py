"""Two-possession point-value models.

The response for a play is the offense's net points over its current
possession and the opponent's next one: offense points minus defense
points, counted from the start of the current possession to the start of
the possession after next (or the end of regulation, whichever comes
first). Extra points ride with their touchdown.

Four learners compete: plain OLS, OLS with the interaction expansion,
a random forest and a shrunken boosted ensemble.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import __version__
from .ingest import GAME_SECONDS, HOME
from .trees import (DEFAULT_BOOST_PARAMS, DEFAULT_FOREST_PARAMS, TreeEnsemble, TreeParams,
                    fit_boosted as _fit_boosted, fit_random_forest as _fit_forest)

FEATURES = (
    "time_remaining", "offense_score", "defense_score", "down", "distance",
    "yards_to_endzone", "possessions_played", "offense_pace", "defense_pace",
)
INTERACTION_FEATURES = (0, 1, 2, 3, 4, 5)
MAIN_ONLY_FEATURES = (6, 7, 8)
MAX_ABS_RESPONSE = 32

MODEL_FORMAT = "cfbwp.point_value_model"
MODEL_FORMAT_VERSION = 1
MODEL_KINDS = ("linear", "interact", "forest", "boost")


class MissingPaceError(KeyError):
    pass


class RankDeficiencyError(ValueError):
    def __init__(self, terms):
        self.terms = terms
        names = ", ".join(term_name(t) for t in terms)
        super().__init__(f"design matrix is rank deficient; offending terms: {names}")


class ModelFormatError(ValueError):
    pass


# -- examples ----------------------------------------------------------------

@dataclass(frozen=True)
class PointValueExample:
    features: np.ndarray
    response: float


@dataclass
class ExampleSet:
    X: np.ndarray
    y: np.ndarray
    game_ids: list[str] = field(default_factory=list)

    def __len__(self):
        return len(self.y)

    def __getitem__(self, i):
        return PointValueExample(self.X[i], float(self.y[i]))

    def subset(self, mask) -> "ExampleSet":
        idx = np.nonzero(mask)[0] if np.asarray(mask).dtype == bool else np.asarray(mask)
        return ExampleSet(self.X[idx], self.y[idx], [self.game_ids[i] for i in idx])


def _pace_lookup(paces, season, team):
    table = paces.get(season) if isinstance(paces, dict) else paces
    if table is None or team not in table:
        raise MissingPaceError(f"no pace for {team!r} in season {season}")
    return table[team]


def play_features(play, pace_home: float, pace_away: float) -> np.ndarray:
    """Nine-feature vector for one play, from the offense's point of view.

    Plays without a down are encoded as first-and-10 (or goal) so the models
    can still be evaluated on them.
    """
    home_off = play.possession == HOME
    off_score, def_score = ((play.home_score, play.away_score) if home_off
                            else (play.away_score, play.home_score))
    off_pace, def_pace = (pace_home, pace_away) if home_off else (pace_away, pace_home)
    if play.down is None:
        down, distance = 1, min(10, play.yards_to_endzone)
    else:
        down, distance = play.down, play.distance
    return np.array([GAME_SECONDS - play.elapsed_seconds, off_score, def_score, down,
                     distance, play.yards_to_endzone, play.possession_number - 1,
                     off_pace, def_pace], dtype=np.float64)


def game_features(game, paces) -> np.ndarray:
    ph = _pace_lookup(paces, game.season, game.home_team)
    pa = _pace_lookup(paces, game.season, game.away_team)
    if not game.plays:
        return np.empty((0, len(FEATURES)))
    return np.stack([play_features(p, ph, pa) for p in game.plays])


def possession_responses(game) -> dict[int, float]:
    """Offense-perspective net points over each possession and the next one."""
    plays = game.plays
    if not plays:
        return {}
    starts = {}
    for p in plays:
        starts.setdefault(p.possession_number, p)
    numbers = sorted(starts)
    reg_home, reg_away = game.regulation_score()
    bound = [(starts[k].home_score, starts[k].away_score) for k in numbers]
    bound.append((reg_home, reg_away))
    out = {}
    for i, k in enumerate(numbers):
        h0, a0 = bound[i]
        h1, a1 = bound[min(i + 2, len(numbers))]
        home_net = (h1 - h0) - (a1 - a0)
        out[k] = float(home_net if starts[k].possession == HOME else -home_net)
    return out


def build_examples(games, paces) -> ExampleSet:
    """Training rows for every play that has a down.

    ``paces`` is a single ``PaceTable`` or a ``{season: PaceTable}`` mapping.
    """
    rows, ys, gids = [], [], []
    for g in games:
        if not g.plays:
            continue
        X = game_features(g, paces)
        resp = possession_responses(g)
        for p, x in zip(g.plays, X):
            if p.down is None:
                continue
            y = resp[p.possession_number]
            if abs(y) > MAX_ABS_RESPONSE:
                raise ValueError(f"game {g.game_id}: response {y} exceeds {MAX_ABS_RESPONSE}")
            rows.append(x)
            ys.append(y)
            gids.append(g.game_id)
    X = np.asarray(rows, dtype=np.float64).reshape(-1, len(FEATURES))
    return ExampleSet(X, np.asarray(ys, dtype=np.float64), gids)


def _xy(examples):
    if isinstance(examples, ExampleSet):
        return examples.X, examples.y
    X, y = examples
    return np.asarray(X, dtype=np.float64), np.asarray(y, dtype=np.float64)


# -- regression --------------------------------------------------------------

def term_name(term) -> str:
    return "intercept" if not term else "*".join(FEATURES[f] for f in term)


def plain_terms() -> list[tuple[int, ...]]:
    return [()] + [(f,) for f in range(len(FEATURES))]


def interaction_terms() -> list[tuple[int, ...]]:
    """Every subset product of the six eligible features (the empty product is
    the intercept) plus lone main effects for possessions and both paces."""
    subsets = [c for r in range(len(INTERACTION_FEATURES) + 1)
               for c in itertools.combinations(INTERACTION_FEATURES, r)]
    return subsets + [(f,) for f in MAIN_ONLY_FEATURES]


@dataclass
class RegressionModel:
    """OLS on products of standardized features.

    ``coef[i]`` multiplies the product of ``(x - center) / scale`` over the
    features in ``terms[i]``.
    """

    terms: list[tuple[int, ...]]
    coef: np.ndarray
    center: np.ndarray
    scale: np.ndarray
    kind: str = "linear"

    def design(self, X) -> np.ndarray:
        return design_matrix(X, self.terms, self.center, self.scale)

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        return self.design(X) @ self.coef

    def raw_coefficients(self) -> tuple[float, np.ndarray]:
        """Intercept and slopes in original units (main-effect models only)."""
        if any(len(t) > 1 for t in self.terms):
            raise ValueError("raw coefficients are only defined without interactions")
        slopes = np.zeros(len(FEATURES))
        intercept = 0.0
        for t, c in zip(self.terms, self.coef):
            if not t:
                intercept += c
            else:
                f = t[0]
                slopes[f] += c / self.scale[f]
                intercept -= c * self.center[f] / self.scale[f]
        return intercept, slopes

    def to_dict(self) -> dict:
        return {"terms": [list(t) for t in self.terms], "coef": self.coef.tolist(),
                "center": self.center.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, d, kind) -> "RegressionModel":
        return cls([tuple(t) for t in d["terms"]], np.asarray(d["coef"], dtype=np.float64),
                   np.asarray(d["center"], dtype=np.float64),
                   np.asarray(d["scale"], dtype=np.float64), kind)


def design_matrix(X, terms, center, scale) -> np.ndarray:
    Z = (np.asarray(X, dtype=np.float64) - center) / scale
    cols = []
    for t in terms:
        col = np.ones(Z.shape[0])
        for f in t:
            col = col * Z[:, f]
        cols.append(col)
    return np.column_stack(cols)


def fit_linear(examples, with_interactions: bool = False) -> RegressionModel:
    X, y = _xy(examples)
    terms = interaction_terms() if with_interactions else plain_terms()
    n = X.shape[0]
    if n < len(terms) + 1:
        raise RankDeficiencyError(terms[n:] if n < len(terms) else [])
    center = X.mean(axis=0)
    scale = X.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    A = design_matrix(X, terms, center, scale)
    _, R, piv = scipy.linalg.qr(A, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = max(A.shape) * np.finfo(float).eps * diag[0] * 1e3
    rank = int(np.sum(diag > tol))
    if rank < len(terms):
        raise RankDeficiencyError([terms[i] for i in sorted(piv[rank:])])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return RegressionModel(terms, coef, center, scale,
                           "interact" if with_interactions else "linear")


# -- tree ensembles ----------------------------------------------------------

def fit_random_forest(examples, n_trees: int = 500, params: TreeParams = DEFAULT_FOREST_PARAMS,
                      seed: int = 0) -> TreeEnsemble:
    X, y = _xy(examples)
    return _fit_forest(X, y, n_trees, params, seed)


def fit_boosted(examples, eta: float = 0.1, n_trees: int = 200,
                params: TreeParams = DEFAULT_BOOST_PARAMS, seed: int = 0) -> TreeEnsemble:
    X, y = _xy(examples)
    return _fit_boosted(X, y, eta, n_trees, params, seed)


def staged_predict(model: TreeEnsemble, X) -> np.ndarray:
    """Boosted predictions after each tree, shape ``(n_trees, n_rows)``."""
    out = np.zeros(np.asarray(X).shape[0])
    stages = []
    for t in model.trees:
        out = out + model.eta * t.predict(X)
        stages.append(out)
    return np.array(stages)


def mae(pred, y) -> float:
    return float(np.mean(np.abs(np.asarray(pred) - np.asarray(y))))


def rmse(pred, y) -> float:
    d = np.asarray(pred) - np.asarray(y)
    return float(np.sqrt(np.mean(d * d)))


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class BoostGrid:
    """Search space for the staged boosting tuner.

    ``eta`` is the starting shrinkage and must sit in [0.05, 0.2]. Each entry
    of ``refine_factors`` divides eta and multiplies the tree count by the
    same factor in the last stage.
    """

    eta: float = 0.1
    n_trees: tuple[int, ...] = (50, 100, 200, 400)
    max_depth: tuple[int | None, ...] = (4, 2, 3, 6)
    min_leaf_size: tuple[int, ...] = (20, 5, 50)
    refine_factors: tuple[float, ...] = (2.0,)
    min_delta: float = 1e-3

    def validate(self) -> None:
        if not 0.05 <= self.eta <= 0.2:
            raise GridError(f"starting eta must lie in [0.05, 0.2], got {self.eta}")
        if not (self.n_trees and self.max_depth and self.min_leaf_size):
            raise GridError("every grid axis needs at least one value")
        if any(b < 1 for b in self.n_trees):
            raise GridError("tree counts must be positive")
        if any(f <= 1 for f in self.refine_factors):
            raise GridError("refine factors must exceed 1")


@dataclass
class TunedBoost:
    eta: float
    n_trees: int
    params: TreeParams
    valid_mae: float
    history: list[tuple[str, float, int, TreeParams, float]] = field(default_factory=list)


def tune_boosted(train, valid, grid: BoostGrid = BoostGrid(), seed: int = 0) -> TunedBoost:
    """Four-stage tuning scored by validation MAE.

    1. fix eta at ``grid.eta``; 2. pick the tree count with the first tree
    parameters on each axis; 3. pick depth and leaf size; 4. shrink eta and
    grow the tree count together while MAE improves by more than
    ``grid.min_delta``. Every stage keeps the incumbent on ties, so the result
    never scores worse than the grid's first point.
    """
    grid.validate()
    Xt, yt = _xy(train)
    Xv, yv = _xy(valid)
    eta = grid.eta
    history = []
    params = TreeParams(max_depth=grid.max_depth[0], min_leaf_size=grid.min_leaf_size[0])

    model = _fit_boosted(Xt, yt, eta, max(grid.n_trees), params, seed)
    stages = staged_predict(model, Xv)
    best_b, best = None, np.inf
    for b in grid.n_trees:
        score = mae(stages[b - 1], yv)
        history.append(("n_trees", eta, b, params, score))
        if score < best:
            best_b, best = b, score

    best_params = params
    for depth, leaf in itertools.product(grid.max_depth, grid.min_leaf_size):
        cand = TreeParams(max_depth=depth, min_leaf_size=leaf)
        if cand == params:
            continue
        score = mae(_fit_boosted(Xt, yt, eta, best_b, cand, seed).predict(Xv), yv)
        history.append(("tree", eta, best_b, cand, score))
        if score < best:
            best_params, best = cand, score

    for factor in grid.refine_factors:
        e2, b2 = eta / factor, int(round(best_b * factor))
        score = mae(_fit_boosted(Xt, yt, e2, b2, best_params, seed).predict(Xv), yv)
        history.append(("refine", e2, b2, best_params, score))
        if score < best - grid.min_delta:
            eta, best_b, best = e2, b2, score
        else:
            break
    return TunedBoost(eta, best_b, best_params, best, history)


# -- comparison --------------------------------------------------------------

@dataclass
class ModelReport:
    rows: list[tuple[str, float, float]]
    chosen: str
    models: dict = field(default_factory=dict, repr=False)
    predictions: dict = field(default_factory=dict, repr=False)

    def mae_of(self, kind) -> float:
        return next(r[1] for r in self.rows if r[0] == kind)

    def to_csv(self) -> str:
        lines = ["model,mae,rmse"]
        lines += [f"{k},{m!r},{r!r}" for k, m, r in self.rows]
        return "\n".join(lines) + "\n"


def fit_kind(kind, train, *, seed=0, n_forest_trees=500, forest_params=DEFAULT_FOREST_PARAMS,
             eta=0.1, n_boost_trees=200, boost_params=DEFAULT_BOOST_PARAMS):
    if kind == "linear":
        return fit_linear(train, with_interactions=False)
    if kind == "interact":
        return fit_linear(train, with_interactions=True)
    if kind == "forest":
        return fit_random_forest(train, n_forest_trees, forest_params, seed)
    if kind == "boost":
        return fit_boosted(train, eta, n_boost_trees, boost_params, seed)
    raise ValueError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")


def compare_models(train, test, kinds=MODEL_KINDS, tie_tol: float = 1e-9,
                   **fit_kwargs) -> ModelReport:
    """Fit each learner on ``train`` and score it on ``test``.

    The chosen model has the lowest test MAE; scores within ``tie_tol`` of the
    best count as ties and go to the simpler learner (order of ``MODEL_KINDS``).
    """
    _, y_test = _xy(test)
    X_test, _ = _xy(test)
    rows, models, preds = [], {}, {}
    for kind in kinds:
        model = fit_kind(kind, train, **fit_kwargs)
        pred = model.predict(X_test)
        models[kind], preds[kind] = model, pred
        rows.append((kind, mae(pred, y_test), rmse(pred, y_test)))
    best = min(r[1] for r in rows)
    order = {k: i for i, k in enumerate(MODEL_KINDS)}
    chosen = min((r for r in rows if r[1] <= best + tie_tol), key=lambda r: order[r[0]])[0]
    return ModelReport(rows, chosen, models, preds)


# -- serialization -----------------------------------------------------------

def model_kind(model) -> str:
    if isinstance(model, RegressionModel):
        return model.kind
    return "forest" if model.kind == "random_forest" else "boost"


def model_to_dict(model, seed=None) -> dict:
    return {
        "format": MODEL_FORMAT,
        "format_version": MODEL_FORMAT_VERSION,
        "package_version": __version__,
        "seed": seed,
        "model_type": model_kind(model),
        "features": list(FEATURES),
        "model": model.to_dict(),
    }


def model_from_dict(d: dict):
    if d.get("format") != MODEL_FORMAT:
        raise ModelFormatError(f"not a point-value model file (format={d.get('format')!r})")
    if d.get("format_version") != MODEL_FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format version {d.get('format_version')!r}; "
                               f"this build reads version {MODEL_FORMAT_VERSION}")
    if list(d.get("features", [])) != list(FEATURES):
        raise ModelFormatError("feature list does not match this build")
    kind = d["model_type"]
    if kind in ("linear", "interact"):
        return RegressionModel.from_dict(d["model"], kind)
    if kind in ("forest", "boost"):
        return TreeEnsemble.from_dict(d["model"])
    raise ModelFormatError(f"unknown model_type {kind!r}")


def dumps_model(model, seed=None) -> str:
    return json.dumps(model_to_dict(model, seed), sort_keys=True, indent=1) + "\n"


def loads_model(text: str):
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"model file is not valid JSON: {exc.msg}") from None
    return model_from_dict(d)
