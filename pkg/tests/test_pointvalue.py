import numpy as np
import pytest

from cfbwp import pointvalue as pv
from cfbwp.ingest import GameRecord, PlayRecord
from cfbwp.pointvalue import (BoostGrid, GridError, MissingPaceError, ModelFormatError,
                              RankDeficiencyError, build_examples, compare_models, fit_linear,
                              possession_responses)
from cfbwp.trees import TreeParams


def drive(gid, poss, offense, n_plays, score, t0, first_index):
    h, a = score
    return [PlayRecord(gid, 2020, first_index + i, t0 + 20 * i, h, a, offense, 1 + i % 4, 10,
                       70 - 5 * i, poss) for i in range(n_plays)]


def scripted_game(drive_points, offense_first="home"):
    """Alternating drives scoring ``drive_points`` in order, plus a closing row."""
    gid = "s1"
    plays, h, a, idx, t = [], 0, 0, 1, 0
    offense = offense_first
    for k, pts in enumerate(drive_points, start=1):
        ds = drive(gid, k, offense, 3, (h, a), t, idx)
        plays += ds
        idx += len(ds)
        t += 300
        if offense == "home":
            h += pts
        else:
            a += pts
        offense = "away" if offense == "home" else "home"
    plays.append(PlayRecord(gid, 2020, idx, 3600, h, a, plays[-1].possession, None, 0, 75,
                            len(drive_points)))
    return GameRecord(gid, 2020, "H", "A", -3.0, h, a, tuple(plays))


def test_touchdown_then_punt():
    r = possession_responses(scripted_game([7, 0, 3, 0]))
    assert r[1] == 7.0


def test_punt_then_field_goal():
    r = possession_responses(scripted_game([0, 3, 0, 0], offense_first="away"))
    assert r[1] == -3.0
    assert r[2] == 3.0


def test_final_possessions_use_regulation():
    r = possession_responses(scripted_game([7, 0, 3, 6]))
    assert r[3] == 3.0 - 6.0
    assert r[4] == 6.0


def test_overtime_points_excluded():
    g = scripted_game([7, 7])
    ot = GameRecord(g.game_id, g.season, g.home_team, g.away_team, g.pregame_spread, 14, 7,
                    g.plays)
    assert possession_responses(ot) == possession_responses(g)


def test_responses_match_drive_ledger(small_league):
    games, truth = small_league
    for g in games:
        drives = truth.drives[g.game_id]
        resp = possession_responses(g)
        for i, d in enumerate(drives):
            nxt = drives[i + 1].points if i + 1 < len(drives) else 0
            assert resp[d.possession_number] == d.points - nxt


def test_examples_skip_no_down_rows(small_league, small_paces):
    games, _ = small_league
    ex = build_examples(games[:10], small_paces)
    n_down = sum(p.down is not None for g in games[:10] for p in g.plays)
    assert len(ex) == n_down
    assert ex.X.shape == (n_down, len(pv.FEATURES))


def test_missing_pace(small_league, small_paces):
    games, _ = small_league
    with pytest.raises(MissingPaceError):
        build_examples(games[:1], {})


def test_features_offense_perspective():
    p = PlayRecord("g", 2020, 1, 600, 10, 3, "away", 3, 7, 40, 5)
    x = pv.play_features(p, 30.0, 24.0)
    assert list(x) == [3000, 3, 10, 3, 7, 40, 4, 24.0, 30.0]


# -- regression --------------------------------------------------------------

def random_X(n, seed=0):
    rng = np.random.default_rng(seed)
    return np.column_stack([rng.uniform(0, 3600, n), rng.integers(0, 40, n), rng.integers(0, 40, n),
                            rng.integers(1, 5, n), rng.integers(1, 15, n), rng.integers(1, 100, n),
                            rng.integers(0, 30, n), rng.uniform(22, 32, n),
                            rng.uniform(22, 32, n)]).astype(float)


def test_linear_recovers_exact_line():
    X = random_X(200)
    y = 2 * X[:, 4] + 1
    intercept, slopes = fit_linear((X, y)).raw_coefficients()
    assert intercept == pytest.approx(1, abs=1e-8)
    assert slopes[4] == pytest.approx(2, abs=1e-8)
    assert np.allclose(np.delete(slopes, 4), 0, atol=1e-8)


def test_interaction_term_count():
    terms = pv.interaction_terms()
    products = [t for t in terms if set(t) <= set(pv.INTERACTION_FEATURES)]
    assert len(products) == 64
    assert len(set(products)) == 64
    assert [t for t in terms if t not in products] == [(6,), (7,), (8,)]
    m = fit_linear((random_X(300), np.zeros(300)), with_interactions=True)
    assert len(m.coef) == 67


def test_too_few_rows_is_rank_deficient():
    X = random_X(50)
    with pytest.raises(RankDeficiencyError) as err:
        fit_linear((X, X[:, 0]), with_interactions=True)
    assert err.value.terms


def test_collinear_column_reported():
    X = random_X(100)
    X[:, 8] = X[:, 7]
    with pytest.raises(RankDeficiencyError, match="pace"):
        fit_linear((X, X[:, 0]))


def test_interaction_prediction_matches_raw_products():
    X = random_X(150, seed=2)
    rng = np.random.default_rng(1)
    y = X[:, 0] * X[:, 5] / 1e4 + X[:, 3] * X[:, 4] + rng.normal(size=150)
    m = fit_linear((X, y), with_interactions=True)
    Z = (X - m.center) / m.scale
    manual = np.zeros(150)
    for t, c in zip(m.terms, m.coef):
        manual += c * np.prod(Z[:, list(t)], axis=1) if t else c
    assert np.allclose(manual, m.predict(X), rtol=0, atol=1e-9)


# -- comparison and tuning ---------------------------------------------------

def test_compare_tie_goes_to_linear():
    X = random_X(300)
    y = 0.5 * X[:, 5] - 3
    rep = compare_models((X, y), (X, y), n_forest_trees=5, n_boost_trees=5)
    assert rep.chosen == "linear"
    assert rep.mae_of("linear") < 1e-9


def test_report_mae_recomputes(small_league, small_paces):
    games, _ = small_league
    ex = build_examples(games, small_paces)
    train, test = ex.subset(np.arange(len(ex)) % 3 != 0), ex.subset(np.arange(len(ex)) % 3 == 0)
    rep = compare_models(train, test, n_forest_trees=10, n_boost_trees=20)
    for kind, m, r in rep.rows:
        d = rep.predictions[kind] - test.y
        assert m == np.mean(np.abs(d))
        assert r == pytest.approx(np.sqrt(np.mean(d * d)), rel=1e-12)
    assert rep.chosen == min(rep.rows, key=lambda r: r[1])[0]
    assert rep.to_csv().splitlines()[0] == "model,mae,rmse"


def test_grid_validation():
    with pytest.raises(GridError):
        BoostGrid(eta=0.3).validate()
    with pytest.raises(GridError):
        BoostGrid(eta=0.01).validate()


def test_single_point_grid(small_league, small_paces):
    games, _ = small_league
    ex = build_examples(games, small_paces)
    half = np.arange(len(ex)) % 2 == 0
    grid = BoostGrid(eta=0.1, n_trees=(30,), max_depth=(3,), min_leaf_size=(20,),
                     refine_factors=())
    tuned = pv.tune_boosted(ex.subset(half), ex.subset(~half), grid)
    assert (tuned.eta, tuned.n_trees, tuned.params) == (0.1, 30, TreeParams(3, 20))


def test_tuning_not_worse_than_default(small_league, small_paces):
    games, _ = small_league
    ex = build_examples(games, small_paces)
    half = np.arange(len(ex)) % 2 == 0
    train, valid = ex.subset(half), ex.subset(~half)
    grid = BoostGrid(n_trees=(25, 50), max_depth=(4, 2), min_leaf_size=(20, 50))
    tuned = pv.tune_boosted(train, valid, grid)
    default = pv.fit_boosted(train, 0.1, 25, TreeParams(4, 20))
    assert tuned.valid_mae <= pv.mae(default.predict(valid.X), valid.y)


# -- serialization -----------------------------------------------------------

def test_model_round_trip(small_league, small_paces):
    games, _ = small_league
    ex = build_examples(games[:40], small_paces)
    for kind in pv.MODEL_KINDS:
        m = pv.fit_kind(kind, ex, n_forest_trees=5, n_boost_trees=5)
        back = pv.loads_model(pv.dumps_model(m, seed=0))
        assert np.array_equal(back.predict(ex.X), m.predict(ex.X))
        assert pv.model_kind(back) == kind


def test_model_version_checked():
    m = fit_linear((random_X(50), np.ones(50)))
    d = pv.model_to_dict(m)
    with pytest.raises(ModelFormatError, match="version"):
        pv.model_from_dict({**d, "format_version": 99})
    with pytest.raises(ModelFormatError):
        pv.model_from_dict({**d, "format": "other"})
    with pytest.raises(ModelFormatError):
        pv.loads_model("{oops")
