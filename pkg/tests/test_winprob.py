import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from cfbwp import winprob as wp
from cfbwp.pointvalue import build_examples, fit_linear
from cfbwp.winprob import (EmptyWindowError, PriorFitError, PriorTable, PriorTableError,
                           ReferenceIndex, WeightSpec, WindowCounts, WinProbError, blend,
                           fit_prior_from_poll, fit_weights, moments_to_beta, posterior,
                           pregame_prob, window_for)

INF = None
PRIOR_ROWS = [
    (0, 900, 0, 7, 1, 1), (0, 900, 7, 14, 21, 10), (0, 900, 14, 28, 16, 3),
    (0, 900, 28, INF, 59, 1),
    (900, 1800, 0, 7, 1, 1), (900, 1800, 7, 14, 15, 7), (900, 1800, 14, 28, 11, 2),
    (900, 1800, 28, INF, 44, 1),
    (1800, 2700, 0, 7, 1, 1), (1800, 2700, 7, 14, 14, 4), (1800, 2700, 14, 28, 13, 1),
    (1800, 2700, 28, INF, 126, 1),
    (2700, 3300, 0, 3, 1, 1), (2700, 3300, 3, 7, 28, 16), (2700, 3300, 7, 14, 27, 8),
    (2700, 3300, 14, 21, 11, 1), (2700, 3300, 21, INF, 98, 1),
    (3300, 3480, 0, 0, 1, 1), (3300, 3480, 0, 3, 29, 18), (3300, 3480, 3, 7, 17, 6),
    (3300, 3480, 7, 10, 13, 2), (3300, 3480, 10, 14, 16, 1), (3300, 3480, 14, INF, 98, 1),
    (3480, 3600, 0, 0, 1, 1), (3480, 3600, 0, 3, 21, 10), (3480, 3600, 3, 7, 18, 5),
    (3480, 3600, 7, 10, 16, 1), (3480, 3600, 10, INF, 91, 1),
]


@pytest.fixture(scope="module")
def table():
    return PriorTable.default()


@pytest.fixture(scope="module")
def pv_linear(small_league, small_paces):
    games, _ = small_league
    return fit_linear(build_examples(games, small_paces))


# -- prior -------------------------------------------------------------------

def test_default_prior_matches_table(table):
    got = [(r.t_lo, r.t_hi, r.lead_lo, r.lead_hi, r.alpha, r.beta) for r in table.rows]
    assert got == [tuple(float(v) if v is not None else None for v in row) for row in PRIOR_ROWS]


def test_prior_examples(table):
    assert wp.prior_lookup(table, 100, 20) == (16, 3)
    assert wp.prior_lookup(table, 100, -20) == (3, 16)
    assert wp.prior_lookup(table, 2000, 0) == (1, 1)
    assert table.lookup(3600, 30) == (91, 1)
    assert table.lookup(900, 7) == (1, 1)
    assert table.lookup(901, 8) == (15, 7)
    assert table.lookup(3400, 0) == (1, 1)
    assert table.lookup(3400, 1) == (29, 18)


def test_prior_rejects_time(table):
    with pytest.raises(WinProbError):
        table.lookup(-1, 0)
    with pytest.raises(WinProbError):
        table.lookup(3601, 0)


def prior_oracle(t, lead):
    band = next(r[1] for r in PRIOR_ROWS if t <= r[1])
    for lo, hi, _, lead_hi, a, b in PRIOR_ROWS:
        if hi == band and (lead_hi is None or abs(lead) <= lead_hi):
            return (a, b) if lead >= 0 else (b, a)


@settings(max_examples=500, deadline=None)
@given(st.integers(0, 3600), st.integers(-80, 80))
def test_prior_total_and_antisymmetric(t, lead):
    table = PriorTable.default()
    assert table.lookup(t, lead) == prior_oracle(t, lead)
    assert abs(table.mean(t, -lead) - (1 - table.mean(t, lead))) <= 1e-12


def test_prior_validation():
    rows = [wp.PriorRow(*r[:4], r[4], r[5]) for r in [(0, 3600, 0, INF, 1, 1)]]
    PriorTable(rows)
    with pytest.raises(PriorTableError, match="cover"):
        PriorTable([wp.PriorRow(0, 1800, 0, None, 1, 1)])
    with pytest.raises(PriorTableError, match="lead"):
        PriorTable([wp.PriorRow(0, 3600, 0, 7, 1, 1)])
    with pytest.raises(PriorTableError):
        PriorTable([wp.PriorRow(0, 3600, 0, None, 0, 1)])


def test_prior_json_round_trip(table):
    back = PriorTable.from_json(table.to_json())
    assert back.rows == table.rows


# -- method of moments -------------------------------------------------------

def test_uniform_moments_exact():
    assert moments_to_beta(0.5, 1 / 12) == (1.0, 1.0)


def test_moments_match_closed_form():
    p, s2 = 0.3, 0.01
    a, b = moments_to_beta(p, s2)
    q = p * p - p + s2
    assert a == pytest.approx(-p * q / s2, rel=1e-14)
    assert b == pytest.approx((p - 1) * q / s2, rel=1e-14)


def test_poll_recovers_mean():
    rng = np.random.default_rng(2)
    draws = stats.beta(21, 10).rvs(size=14, random_state=rng)
    cell = (0.0, 3600.0, 0.0, None)
    a, b = fit_prior_from_poll({cell: draws}).lookup(100, 3)
    assert abs(a / (a + b) - 21 / 31) < 0.1


def test_poll_problems_reported_per_cell():
    poll = {(0.0, 1800.0, 0.0, None): [0.5], (1800.0, 3600.0, 0.0, None): [0.5, 0.5]}
    with pytest.raises(PriorFitError) as err:
        fit_prior_from_poll(poll)
    assert len(err.value.problems) == 2
    with pytest.raises(PriorFitError, match="too large"):
        fit_prior_from_poll({(0.0, 3600.0, 0.0, None): [0.01, 0.99]})


def test_poll_csv():
    text = "t_lo,t_hi,lead_lo,lead_hi,prob\n0,3600,0,,0.4\n0,3600,0,inf,0.6\n0,3600,0,,0.55\n"
    poll = wp.read_poll_csv(text)
    assert poll == {(0.0, 3600.0, 0.0, None): [0.4, 0.6, 0.55]}
    with pytest.raises(PriorTableError):
        wp.read_poll_csv("a,b\n1,2\n")


# -- windows -----------------------------------------------------------------

def test_window_examples():
    assert window_for(20) == (2, 3)
    assert window_for(15) == (2, 3)
    assert window_for(2) == (0, 0)
    assert window_for(0.5) == (0, 0)
    assert window_for(8.5) == (1.0, 1.5)
    with pytest.raises(WinProbError):
        window_for(-1)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 60), st.floats(0, 60))
def test_window_monotone(a, b):
    lo, hi = sorted((a, b))
    assert window_for(lo)[0] <= window_for(hi)[0]
    assert window_for(lo)[1] <= window_for(hi)[1]


def test_round_half_up():
    assert wp.round_half_up([0.5, 1.5, -0.5, -1.5, 2.49]).tolist() == [1, 2, 0, -1, 2]


def test_empty_index():
    idx = ReferenceIndex.empty()
    assert idx.count(20, 3) == WindowCounts(0, 0, 2, 3)
    assert idx.count_box(-100, 100, -100, 100) == (0, 0)


def test_single_play_index():
    idx = ReferenceIndex(["g"], [1], [20], [3], [0])
    c = idx.count(20, 3)
    assert (c.N, c.n) == (1, 1)
    assert idx.count(21.6, 5.9).N == 1
    assert idx.count(23, 3).N == 0
    assert idx.count(20, 3, exclude_game="g").N == 0
    assert idx.count(1.6, 3).N == 0


def test_distinct_games_counted_once():
    idx = ReferenceIndex(["a", "b"], [1, 0], [10, 10, 11, 30], [3, 4, 3, 0], [0, 0, 0, 1])
    c = idx.count(10, 3)
    assert (c.N, c.n) == (1, 1)


def scan(games_states, wins, tau_lo, tau_hi, omega_lo, omega_hi):
    hit = set()
    for gi, (taus, omegas) in enumerate(games_states):
        for a, b in zip(taus, omegas):
            if tau_lo <= a <= tau_hi and omega_lo <= b <= omega_hi:
                hit.add(gi)
    return len(hit), sum(wins[g] for g in hit)


def test_index_matches_linear_scan(small_league, small_paces, pv_linear):
    games, _ = small_league
    games = sorted(games, key=lambda g: g.game_id)[:50]
    idx = wp.index_reference_games(games, small_paces, pv_linear)
    keys = []
    for g in games:
        s = wp.game_states(g, small_paces, pv_linear)
        keys.append(([math.floor(x + 0.5) for x in s.tau], [math.floor(x + 0.5) for x in s.omega]))
    wins = [g.home_win for g in games]
    rng = np.random.default_rng(0)
    for _ in range(100):
        tau, omega = rng.uniform(0, 30), rng.uniform(-30, 30)
        ht, ho = rng.uniform(0, 3), rng.uniform(0, 5)
        assert idx.count_box(tau - ht, tau + ht, omega - ho, omega + ho) == \
            scan(keys, wins, tau - ht, tau + ht, omega - ho, omega + ho)


def test_index_round_trip(small_league, small_paces, pv_linear):
    games, _ = small_league
    idx = wp.index_reference_games(games[:20], small_paces, pv_linear)
    back = ReferenceIndex.from_dict(idx.to_dict())
    for tau, omega in [(10, 0), (25, 3), (1, -7)]:
        assert back.count(tau, omega) == idx.count(tau, omega)
    with pytest.raises(WinProbError):
        ReferenceIndex.from_dict({**idx.to_dict(), "format_version": 2})


def test_game_states(small_league, small_paces, pv_linear):
    games, _ = small_league
    g = games[0]
    s = wp.game_states(g, small_paces, pv_linear)
    ph, pa = small_paces[g.season][g.home_team], small_paces[g.season][g.away_team]
    assert s.tau[0] == pytest.approx((3600 - g.plays[0].elapsed_seconds) / 3600 * (ph + pa) / 2)
    assert s.tau[-1] == 0 and s.value[-1] == 0
    assert s.omega[-1] == g.plays[-1].home_lead
    sign = np.where([p.possession == "home" for p in g.plays], 1, -1)
    assert np.allclose(s.omega, s.lead + sign * s.value)


# -- estimators --------------------------------------------------------------

def test_mle():
    assert wp.mle(WindowCounts(10, 5)) == 0.5
    assert wp.mle(WindowCounts(7, 7)) == 1.0
    with pytest.raises(EmptyWindowError):
        wp.mle(WindowCounts(0, 0))
    with pytest.raises(WinProbError):
        WindowCounts(3, 4)


def test_posterior_examples():
    assert posterior(WindowCounts(0, 0), 1, 1) == 0.5
    assert posterior(WindowCounts(12, 10), 59, 1) == 69 / 72
    assert posterior(WindowCounts(1000, 500), 1, 1) == pytest.approx(0.5, abs=1e-15)
    assert posterior(WindowCounts(1000, 501), 1, 1) == 502 / 1002
    with pytest.raises(WinProbError):
        posterior(WindowCounts(1, 1), 0, 1)


@settings(max_examples=500, deadline=None)
@given(st.integers(1, 5000), st.data(), st.floats(0.01, 200), st.floats(0.01, 200))
def test_posterior_between_prior_and_mle(N, data, a, b):
    n = data.draw(st.integers(0, N))
    p = posterior(WindowCounts(N, n), a, b)
    lo, hi = sorted((a / (a + b), n / N))
    assert lo - 1e-15 <= p <= hi + 1e-15


def test_pregame_prob():
    assert pregame_prob(0, 14) == 0.5
    assert pregame_prob(-14, 14) == pytest.approx(0.8413447460685429, abs=1e-15)
    assert pregame_prob(7, 14) < 0.5
    with pytest.raises(WinProbError):
        pregame_prob(3, 0)


def test_sigma_oracle(small_league):
    games, _ = small_league
    resid = [(g.final_home_score - g.final_away_score) + g.pregame_spread for g in games]
    mean = sum(resid) / len(resid)
    sd = math.sqrt(sum((r - mean) ** 2 for r in resid) / (len(resid) - 1))
    assert wp.estimate_sigma(games) == pytest.approx(sd, rel=1e-12)


def test_blend_examples():
    assert blend(0.8, 0.4, -0.3) == 0.8
    assert blend(0.8, 0.4, 2) == 0.4
    assert blend(0.8, 0.4, 0.25) == pytest.approx(0.7, abs=1e-15)
    assert blend(0.8, 0.4, 0) == 0.8 and blend(0.8, 0.4, 1) == 0.4


@settings(max_examples=300, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(-1, 2), st.floats(-1, 2))
def test_blend_monotone_in_D(pp, ph, d1, d2):
    lo, hi = sorted((d1, d2))
    a, b = blend(pp, ph, lo), blend(pp, ph, hi)
    if ph >= pp:
        assert a <= b + 1e-15
    else:
        assert a >= b - 1e-15


# -- weights -----------------------------------------------------------------

def test_weight_forms():
    assert WeightSpec("d1", (0.5,))(1000, -7) == 500
    assert WeightSpec("D2", (0.1, 0.001, 0.02))(1000, -7) == pytest.approx(0.1 + 1 + 0.14)
    assert WeightSpec("D3", (0, 0, 0, 0.01))(0, -10) == pytest.approx(1.0)
    with pytest.raises(WinProbError):
        WeightSpec("D4", (1,))
    with pytest.raises(WinProbError):
        WeightSpec("D2", (1,))
    w = WeightSpec("D2", (0.1, 0.2, 0.3), 0.12, True, 4)
    assert WeightSpec.from_dict(w.to_dict()) == w


def test_weights_push_to_in_game_when_exact():
    rng = np.random.default_rng(0)
    n = 400
    t, lead = rng.uniform(0, 3600, n), rng.integers(-21, 22, n)
    y = rng.integers(0, 2, n).astype(float)
    for form in wp.WEIGHT_FORMS:
        spec = fit_weights(form, t, lead, y, np.full(n, 0.5), y, seed=1)
        assert spec.brier == 0.0
        assert np.all(spec(t, lead) >= 1)


def test_weights_beat_both_pure_estimators():
    rng = np.random.default_rng(3)
    n = 2000
    t = rng.uniform(0, 3600, n)
    lead = rng.integers(-21, 22, n)
    truth = rng.uniform(0.1, 0.9, n)
    y = (rng.random(n) < truth).astype(float)
    frac = t / 3600
    p_hat = np.clip(truth + rng.normal(0, 0.3 * (1 - frac) + 0.05), 0.01, 0.99)
    p_pre = np.clip(truth + rng.normal(0, 0.15, n), 0.01, 0.99)
    spec = fit_weights("D2", t, lead, p_hat, p_pre, y, seed=0)
    assert spec.brier <= np.mean((p_pre - y) ** 2)
    assert spec.brier <= np.mean((p_hat - y) ** 2)
    assert spec.brier == pytest.approx(np.mean((blend(p_pre, p_hat, spec(t, lead)) - y) ** 2))
    again = fit_weights("D2", t, lead, p_hat, p_pre, y, seed=0)
    assert again.coefficients == spec.coefficients


# -- composition -------------------------------------------------------------

def test_estimate_late_big_lead(table):
    idx = ReferenceIndex(["g"], [1], [0], [20], [0])
    model = wp.WinProbModel(idx, table)
    est = wp.estimate(model, wp.GameStateKey(3599, 17, 0.01, 20.2), 0.5)
    assert est.counts.N == 1
    assert est.p_bayes > 0.98
    assert est.p_adjusted == est.p_bayes


def test_estimate_early_tie_is_likelihood(table):
    idx = ReferenceIndex([f"g{i}" for i in range(200)], [i % 4 != 0 for i in range(200)],
                         [27] * 200, [1] * 200, list(range(200)))
    est = wp.WinProbModel(idx, table).estimate(wp.GameStateKey(0, 0, 27.2, 1.3), 0.5)
    assert est.p_mle == 0.75
    assert est.p_bayes == pytest.approx(151 / 202)


def test_estimate_empty_window_falls_back(table):
    model = wp.WinProbModel(ReferenceIndex.empty(), table, WeightSpec("D1", (0.0,)))
    est = model.estimate(wp.GameStateKey(100, 20, 20, 20), 0.7)
    assert est.p_mle is None
    assert est.p_bayes == 16 / 19
    assert est.p_adjusted == 0.7


def test_game_state_key_validation():
    with pytest.raises(WinProbError):
        wp.GameStateKey(3700, 0, 1, 0)
    with pytest.raises(WinProbError):
        wp.GameStateKey(0, 0, -1, 0)
