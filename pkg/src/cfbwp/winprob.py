"""In-game home win probability: windowed MLE, dynamic Bayes and the
pregame-adjusted blend.

Every play of a reference game is keyed by ``tau`` (expected possessions
remaining) and ``omega`` (home lead plus the signed point-value prediction),
both rounded to whole numbers. A window around a query state pools the
reference games that pass through it; ``n / N`` is the MLE and the beta
prior from the ``(t, lead)`` table turns it into a posterior mean. The
adjusted estimator blends that posterior with the pregame probability using
a weight ``D`` that grows with elapsed time and the size of the lead.
"""

from __future__ import annotations

import csv
import io
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
import scipy.optimize
import scipy.special

from . import __version__
from .ingest import GAME_SECONDS, HOME
from .pace import expected_possessions_remaining
from .pointvalue import game_features

PRIOR_FORMAT_VERSION = 1
WEIGHTS_FORMAT = "cfbwp.weights"
WEIGHTS_FORMAT_VERSION = 1
INDEX_FORMAT = "cfbwp.reference_index"
INDEX_FORMAT_VERSION = 1
WEIGHT_FORMS = ("D1", "D2", "D3")

# feature scales for the weight search; coefficients are reported unscaled
_T_SCALE = 3600.0
_L_SCALE = 28.0


class WinProbError(ValueError):
    pass


class EmptyWindowError(WinProbError):
    """The window holds no reference games, so ``n / N`` is undefined."""


class PriorTableError(WinProbError):
    pass


class PriorFitError(WinProbError):
    def __init__(self, problems):
        self.problems = problems
        super().__init__("cannot fit prior: " + "; ".join(problems))


def round_half_up(x):
    """Nearest whole number with halves going up, the same for scalars and arrays."""
    return np.floor(np.asarray(x, dtype=np.float64) + 0.5).astype(np.int64)


# -- states ------------------------------------------------------------------

@dataclass(frozen=True)
class GameStateKey:
    t: float
    lead: int
    tau: float
    omega: float

    def __post_init__(self):
        if not 0 <= self.t <= GAME_SECONDS:
            raise WinProbError(f"elapsed seconds {self.t} outside [0, {GAME_SECONDS}]")
        if self.tau < 0:
            raise WinProbError(f"tau must be nonnegative, got {self.tau}")


@dataclass
class GameStates:
    """Per-play state arrays for one game."""

    game_id: str
    t: np.ndarray
    lead: np.ndarray
    tau: np.ndarray
    omega: np.ndarray
    value: np.ndarray

    def __len__(self):
        return len(self.t)

    def key(self, i) -> GameStateKey:
        return GameStateKey(float(self.t[i]), int(self.lead[i]), float(self.tau[i]),
                            float(self.omega[i]))


def _paces_for(paces, game):
    table = paces.get(game.season) if isinstance(paces, dict) else paces
    return table[game.home_team], table[game.away_team]


def game_states(game, paces, pv_model) -> GameStates:
    """tau, omega and friends for every play of ``game``.

    ``omega = lead + s * v`` where ``v`` is the point-value prediction and
    ``s`` is +1 when the home side has the ball. The closing row at the end of
    regulation has nothing left to play for, so its ``v`` is 0.
    """
    plays = game.plays
    ph, pa = _paces_for(paces, game)
    t = np.array([p.elapsed_seconds for p in plays], dtype=np.float64)
    lead = np.array([p.home_lead for p in plays], dtype=np.int64)
    sign = np.array([1.0 if p.possession == HOME else -1.0 for p in plays])
    if plays:
        v = np.asarray(pv_model.predict(game_features(game, paces)), dtype=np.float64)
    else:
        v = np.empty(0)
    v = np.where(t >= GAME_SECONDS, 0.0, v)
    tau = ((GAME_SECONDS - t) / GAME_SECONDS) * ((ph + pa) / 2)
    return GameStates(game.game_id, t, lead, tau, lead + sign * v, v)


# -- windows -----------------------------------------------------------------

@dataclass(frozen=True)
class WindowSchedule:
    """Half-widths ``(h_tau, h_omega)`` as a function of ``tau``.

    Full width above ``shrink_start``, zero below ``shrink_end`` and linear
    in between.
    """

    h_tau: float = 2.0
    h_omega: float = 3.0
    shrink_start: float = 15.0
    shrink_end: float = 2.0

    def __post_init__(self):
        if self.h_tau < 0 or self.h_omega < 0:
            raise WinProbError("window half-widths must be nonnegative")
        if not self.shrink_start > self.shrink_end >= 0:
            raise WinProbError("need shrink_start > shrink_end >= 0")

    def __call__(self, tau: float) -> tuple[float, float]:
        if tau < 0:
            raise WinProbError(f"tau must be nonnegative, got {tau}")
        frac = (tau - self.shrink_end) / (self.shrink_start - self.shrink_end)
        frac = min(1.0, max(0.0, frac))
        return self.h_tau * frac, self.h_omega * frac


DEFAULT_SCHEDULE = WindowSchedule()


def window_for(tau: float, schedule: WindowSchedule = DEFAULT_SCHEDULE) -> tuple[float, float]:
    return schedule(tau)


@dataclass(frozen=True)
class WindowCounts:
    N: int
    n: int
    h_tau: float = 0.0
    h_omega: float = 0.0

    def __post_init__(self):
        if not 0 <= self.n <= self.N:
            raise WinProbError(f"need 0 <= n <= N, got n={self.n}, N={self.N}")


class ReferenceIndex:
    """Rounded ``(tau, omega)`` cells of the reference plays.

    Each cell keeps a bitmask of the games that visit it, so a window count is
    the number of distinct games in the union of its cells and ``n`` the
    number of those the home side won.
    """

    def __init__(self, game_ids, home_win, tau_keys, omega_keys, game_index):
        self.game_ids = list(game_ids)
        self.home_win = np.asarray(home_win, dtype=np.int64)
        self.tau_keys = np.asarray(tau_keys, dtype=np.int64)
        self.omega_keys = np.asarray(omega_keys, dtype=np.int64)
        self.game_index = np.asarray(game_index, dtype=np.int64)
        self._pos = {g: i for i, g in enumerate(self.game_ids)}
        if len(self._pos) != len(self.game_ids):
            raise WinProbError("duplicate game in reference index")
        cells = defaultdict(int)
        for a, b, g in zip(self.tau_keys.tolist(), self.omega_keys.tolist(),
                           self.game_index.tolist()):
            cells[(a, b)] |= 1 << g
        self._cells = dict(cells)
        self._wins = sum(1 << i for i, w in enumerate(self.home_win.tolist()) if w)

    @property
    def n_games(self) -> int:
        return len(self.game_ids)

    @property
    def n_plays(self) -> int:
        return len(self.tau_keys)

    def games_in(self, tau_lo, tau_hi, omega_lo, omega_hi) -> int:
        """Bitmask of games with a play whose rounded keys lie in the closed box."""
        mask = 0
        for a in range(math.ceil(tau_lo), math.floor(tau_hi) + 1):
            for b in range(math.ceil(omega_lo), math.floor(omega_hi) + 1):
                mask |= self._cells.get((a, b), 0)
        return mask

    def count_box(self, tau_lo, tau_hi, omega_lo, omega_hi, exclude_game=None):
        mask = self.games_in(tau_lo, tau_hi, omega_lo, omega_hi)
        if exclude_game is not None and exclude_game in self._pos:
            mask &= ~(1 << self._pos[exclude_game])
        return mask.bit_count(), (mask & self._wins).bit_count()

    def count(self, tau: float, omega: float, schedule: WindowSchedule = DEFAULT_SCHEDULE,
              exclude_game=None) -> WindowCounts:
        """Window counts around the rounded ``(tau, omega)``."""
        h_tau, h_omega = schedule(tau)
        ct, co = int(round_half_up(tau)), int(round_half_up(omega))
        N, n = self.count_box(ct - h_tau, ct + h_tau, co - h_omega, co + h_omega, exclude_game)
        return WindowCounts(N, n, h_tau, h_omega)

    def to_dict(self, seed=None) -> dict:
        return {
            "format": INDEX_FORMAT,
            "format_version": INDEX_FORMAT_VERSION,
            "package_version": __version__,
            "seed": seed,
            "game_ids": self.game_ids,
            "home_win": self.home_win.tolist(),
            "tau": self.tau_keys.tolist(),
            "omega": self.omega_keys.tolist(),
            "game": self.game_index.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ReferenceIndex":
        if d.get("format") != INDEX_FORMAT:
            raise WinProbError(f"not a reference index file (format={d.get('format')!r})")
        if d.get("format_version") != INDEX_FORMAT_VERSION:
            raise WinProbError(f"unsupported index format version {d.get('format_version')!r}")
        return cls(d["game_ids"], d["home_win"], d["tau"], d["omega"], d["game"])

    @classmethod
    def empty(cls) -> "ReferenceIndex":
        return cls([], [], [], [], [])


def index_reference_games(games, paces, pv_model) -> ReferenceIndex:
    """Index every play of ``games`` by its rounded ``(tau, omega)``."""
    games = sorted(games, key=lambda g: g.game_id)
    ids, wins, taus, omegas, gidx = [], [], [], [], []
    for i, g in enumerate(games):
        st = game_states(g, paces, pv_model)
        ids.append(g.game_id)
        wins.append(g.home_win)
        taus.append(round_half_up(st.tau))
        omegas.append(round_half_up(st.omega))
        gidx.append(np.full(len(st), i, dtype=np.int64))
    if not games:
        return ReferenceIndex.empty()
    return ReferenceIndex(ids, wins, np.concatenate(taus), np.concatenate(omegas),
                          np.concatenate(gidx))


# -- estimators --------------------------------------------------------------

def mle(counts: WindowCounts) -> float:
    if counts.N < 1:
        raise EmptyWindowError("no reference games in window")
    return counts.n / counts.N


def posterior(counts: WindowCounts, alpha: float, beta: float) -> float:
    """Posterior mean of the beta-binomial, i.e. ``n`` plus ``alpha`` pseudo-wins."""
    if not (alpha > 0 and beta > 0):
        raise WinProbError(f"beta parameters must be positive, got ({alpha}, {beta})")
    return (counts.n + alpha) / (counts.N + alpha + beta)


def pregame_prob(spread, sigma):
    """Home win probability from a spread (negative favors home)."""
    if not sigma > 0:
        raise WinProbError(f"sigma must be positive, got {sigma}")
    return scipy.special.ndtr(-np.asarray(spread, dtype=np.float64) / sigma)[()]


def estimate_sigma(games) -> float:
    """Sample SD of the final home margin net of the spread.

    With the negative-favors-home convention a spread of -7 predicts a
    margin of +7, so the residual is ``margin + spread``.
    """
    resid = np.array([g.final_margin + g.pregame_spread for g in games], dtype=np.float64)
    if len(resid) < 2:
        raise WinProbError("need at least two games to estimate sigma")
    sd = float(np.std(resid, ddof=1))
    if not sd > 0:
        raise WinProbError("spread residuals have zero spread")
    return sd


def blend(p_pre, p_hat, D):
    """Pregame probability below ``D = 0``, in-game above ``D = 1``, convex in between."""
    p_pre = np.asarray(p_pre, dtype=np.float64)
    p_hat = np.asarray(p_hat, dtype=np.float64)
    D = np.asarray(D, dtype=np.float64)
    mixed = (1.0 - D) * p_pre + D * p_hat
    out = np.where(D <= 0, p_pre, np.where(D >= 1, p_hat, mixed))
    return out[()]


# -- prior table -------------------------------------------------------------

@dataclass(frozen=True)
class PriorRow:
    t_lo: float
    t_hi: float
    lead_lo: float
    lead_hi: float | None  # None: unbounded
    alpha: float
    beta: float

    def to_dict(self) -> dict:
        return {"t_lo": self.t_lo, "t_hi": self.t_hi, "lead_lo": self.lead_lo,
                "lead_hi": self.lead_hi, "alpha": self.alpha, "beta": self.beta}


class PriorTable:
    """Beta prior parameters by elapsed-time band and home lead.

    Time bands are ``[0, hi]`` for the first and ``(lo, hi]`` after that; the
    last band also takes ``t = 3600``. Lead rows within a band work the same
    way on ``|lead|``, with ``lead_hi = None`` meaning no upper bound. A
    visiting lead swaps ``alpha`` and ``beta``.
    """

    def __init__(self, rows):
        rows = sorted(rows, key=lambda r: (r.t_lo, r.lead_lo,
                                           math.inf if r.lead_hi is None else r.lead_hi))
        if not rows:
            raise PriorTableError("empty prior table")
        bands = defaultdict(list)
        for r in rows:
            if not (r.alpha > 0 and r.beta > 0):
                raise PriorTableError(f"nonpositive beta parameters in {r}")
            bands[(r.t_lo, r.t_hi)].append(r)
        keys = sorted(bands)
        if keys[0][0] != 0 or keys[-1][1] != GAME_SECONDS:
            raise PriorTableError("time bands must cover [0, 3600]")
        for (lo0, hi0), (lo1, hi1) in zip(keys, keys[1:]):
            if hi0 != lo1:
                raise PriorTableError(f"time bands ({lo0}, {hi0}] and ({lo1}, {hi1}] do not meet")
        for k in keys:
            leads = bands[k]
            if leads[0].lead_lo != 0 or leads[-1].lead_hi is not None:
                raise PriorTableError(f"lead rows for band {k} must cover [0, inf)")
            for a, b in zip(leads, leads[1:]):
                if a.lead_hi is None or a.lead_hi != b.lead_lo:
                    raise PriorTableError(f"lead rows for band {k} do not meet")
        self.rows = rows
        self._band_hi = np.array([k[1] for k in keys], dtype=np.float64)
        self._bands = [bands[k] for k in keys]

    def row_for(self, t: float, lead: float) -> PriorRow:
        if not 0 <= t <= GAME_SECONDS:
            raise WinProbError(f"elapsed seconds {t} outside [0, {GAME_SECONDS}]")
        b = min(int(np.searchsorted(self._band_hi, t, side="left")), len(self._bands) - 1)
        a = abs(lead)
        for r in self._bands[b]:
            if r.lead_hi is None or a <= r.lead_hi:
                return r
        raise AssertionError("lead rows are total by construction")

    def lookup(self, t: float, lead: float) -> tuple[float, float]:
        r = self.row_for(t, lead)
        return (r.alpha, r.beta) if lead >= 0 else (r.beta, r.alpha)

    def mean(self, t: float, lead: float) -> float:
        a, b = self.lookup(t, lead)
        return a / (a + b)

    def to_json(self) -> str:
        return json.dumps([r.to_dict() for r in self.rows], indent=1) + "\n"

    @classmethod
    def from_rows(cls, data) -> "PriorTable":
        try:
            rows = [PriorRow(float(d["t_lo"]), float(d["t_hi"]), float(d["lead_lo"]),
                             None if d["lead_hi"] is None else float(d["lead_hi"]),
                             float(d["alpha"]), float(d["beta"])) for d in data]
        except (KeyError, TypeError, ValueError) as exc:
            raise PriorTableError(f"malformed prior row: {exc}") from None
        return cls(rows)

    @classmethod
    def from_json(cls, text: str) -> "PriorTable":
        return cls.from_rows(json.loads(text))

    @classmethod
    def default(cls) -> "PriorTable":
        text = resources.files("cfbwp").joinpath("data/default_prior.json").read_text()
        return cls.from_json(text)


def prior_lookup(table: PriorTable, t: float, lead: float) -> tuple[float, float]:
    return table.lookup(t, lead)


def moments_to_beta(p: float, s2: float) -> tuple[float, float]:
    """Beta parameters with mean ``p`` and variance ``s2``.

    ``alpha = -p (p^2 - p + s2) / s2`` and ``beta = (p - 1)(p^2 - p + s2) / s2``,
    evaluated through the shared factor ``p (1 - p) / s2 - 1`` (the prior
    sample size), which loses less to rounding.
    """
    c = p * (1.0 - p) / s2 - 1.0
    return p * c, (1.0 - p) * c


def read_poll_csv(text: str):
    """Parse ``t_lo,t_hi,lead_lo,lead_hi,prob`` rows into ``{cell: [prob, ...]}``.

    An empty ``lead_hi`` means unbounded.
    """
    cells = defaultdict(list)
    reader = csv.DictReader(io.StringIO(text))
    want = ["t_lo", "t_hi", "lead_lo", "lead_hi", "prob"]
    if reader.fieldnames != want:
        raise PriorTableError(f"poll header must be {','.join(want)}, got {reader.fieldnames}")
    for i, row in enumerate(reader, start=2):
        try:
            hi = row["lead_hi"].strip()
            cell = (float(row["t_lo"]), float(row["t_hi"]), float(row["lead_lo"]),
                    None if hi in ("", "inf") else float(hi))
            cells[cell].append(float(row["prob"]))
        except ValueError as exc:
            raise PriorTableError(f"poll row {i}: {exc}") from None
    return dict(cells)


def fit_prior_from_poll(poll) -> PriorTable:
    """Method-of-moments beta fit for every cell of an expert poll.

    ``poll`` maps ``(t_lo, t_hi, lead_lo, lead_hi)`` to the experts'
    probabilities. Cells with fewer than two answers, answers outside
    ``(0, 1)``, zero variance or a variance too large for a beta are all
    reported together.
    """
    rows, problems = [], []
    for cell in sorted(poll, key=lambda c: (c[0], c[2])):
        x = np.asarray(poll[cell], dtype=np.float64)
        if len(x) < 2:
            problems.append(f"{cell}: need at least two answers")
            continue
        if np.any((x <= 0) | (x >= 1)):
            problems.append(f"{cell}: answers must lie in (0, 1)")
            continue
        p, s2 = float(x.mean()), float(x.var(ddof=1))
        if s2 == 0:
            problems.append(f"{cell}: zero variance")
            continue
        if p * (p - 1) * (p * p - p + s2) == 0 or s2 >= p * (1 - p):
            problems.append(f"{cell}: variance {s2:.4g} too large for mean {p:.4g}")
            continue
        a, b = moments_to_beta(p, s2)
        rows.append(PriorRow(cell[0], cell[1], cell[2], cell[3], a, b))
    if problems:
        raise PriorFitError(problems)
    return PriorTable(rows)


# -- weights -----------------------------------------------------------------

def _weight_design(form, t, lead):
    t = np.asarray(t, dtype=np.float64)
    a = np.abs(np.asarray(lead, dtype=np.float64))
    if form == "D1":
        return t[..., None]
    if form == "D2":
        return np.stack([np.ones_like(t), t, a], axis=-1)
    if form == "D3":
        return np.stack([np.ones_like(t), t, a, a * a], axis=-1)
    raise WinProbError(f"unknown weight form {form!r}; expected one of {WEIGHT_FORMS}")


def _form_scales(form):
    return {"D1": np.array([_T_SCALE]),
            "D2": np.array([1.0, _T_SCALE, _L_SCALE]),
            "D3": np.array([1.0, _T_SCALE, _L_SCALE, _L_SCALE ** 2])}[form]


@dataclass
class WeightSpec:
    """``D1 = b t``, ``D2 = c0 + c1 t + c2 |l|``, ``D3 = d0 + d1 t + d2 |l| + d3 l^2``."""

    form: str
    coefficients: tuple[float, ...]
    brier: float = float("nan")
    converged: bool = True
    seed: int | None = None

    def __post_init__(self):
        form = self.form.upper()
        if form not in WEIGHT_FORMS:
            raise WinProbError(f"unknown weight form {self.form!r}; expected one of {WEIGHT_FORMS}")
        self.form = form
        self.coefficients = tuple(float(c) for c in self.coefficients)
        if len(self.coefficients) != len(_form_scales(form)):
            raise WinProbError(f"{form} takes {len(_form_scales(form))} coefficients")

    def __call__(self, t, lead):
        return (_weight_design(self.form, t, lead) @ np.asarray(self.coefficients))[()]

    def to_dict(self) -> dict:
        return {
            "format": WEIGHTS_FORMAT,
            "format_version": WEIGHTS_FORMAT_VERSION,
            "package_version": __version__,
            "seed": self.seed,
            "form": self.form,
            "coefficients": list(self.coefficients),
            "brier": self.brier,
            "converged": self.converged,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WeightSpec":
        if d.get("format", WEIGHTS_FORMAT) != WEIGHTS_FORMAT:
            raise WinProbError(f"not a weights file (format={d.get('format')!r})")
        if d.get("format_version", WEIGHTS_FORMAT_VERSION) != WEIGHTS_FORMAT_VERSION:
            raise WinProbError(f"unsupported weights format version {d.get('format_version')!r}")
        return cls(d["form"], tuple(d["coefficients"]), float(d.get("brier", float("nan"))),
                   bool(d.get("converged", True)), d.get("seed"))


def fit_weights(form, t, lead, p_hat, p_pre, y, seed: int = 0, n_random_starts: int = 8,
                max_iter: int = 4000) -> WeightSpec:
    """Weight coefficients minimizing the Brier score of the blend.

    Nelder-Mead from several starts (all-pregame, all-in-game, a ramp over the
    game and seeded random points), run on features scaled to order one.
    ``converged`` is False when no start improved on its initial value and the
    best run did not report success.
    """
    form = form.upper()
    X = _weight_design(form, t, lead) / _form_scales(form)
    p_hat = np.asarray(p_hat, dtype=np.float64)
    p_pre = np.asarray(p_pre, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(y) == 0:
        raise WinProbError("no plays to fit weights on")
    k = X.shape[1]

    def loss(c):
        return float(np.mean((blend(p_pre, p_hat, X @ c) - y) ** 2))

    if form == "D1":
        starts = [np.array([0.0]), np.array([1.0]), np.array([2.0])]
    else:
        one = np.zeros(k)
        one[0] = 1.0
        ramp = np.zeros(k)
        ramp[1] = 1.0
        starts = [np.zeros(k), one, ramp]
    rng = np.random.default_rng(seed)
    starts += [rng.uniform(-0.5, 1.5, size=k) for _ in range(n_random_starts)]

    best, best_val, best_ok, improved = None, math.inf, False, False
    for x0 in starts:
        f0 = loss(x0)
        res = scipy.optimize.minimize(loss, x0, method="Nelder-Mead",
                                      options={"maxiter": max_iter, "xatol": 1e-8,
                                               "fatol": 1e-12})
        improved = improved or res.fun < f0
        if res.fun < best_val:
            best, best_val, best_ok = res.x, float(res.fun), bool(res.success)
        if f0 < best_val:
            best, best_val, best_ok = x0, f0, True
    coef = best / _form_scales(form)
    return WeightSpec(form, tuple(coef.tolist()), best_val, best_ok or improved, seed)


# -- composition -------------------------------------------------------------

@dataclass(frozen=True)
class WinProbEstimate:
    p_mle: float | None
    p_bayes: float
    p_adjusted: float
    counts: WindowCounts
    weight: float


@dataclass
class WinProbModel:
    """Everything needed to score a game state."""

    index: ReferenceIndex
    prior: PriorTable
    weights: WeightSpec | None = None
    schedule: WindowSchedule = field(default_factory=WindowSchedule)
    sigma: float = 14.0

    def estimate(self, state: GameStateKey, p_pre: float, exclude_game=None) -> WinProbEstimate:
        counts = self.index.count(state.tau, state.omega, self.schedule, exclude_game)
        alpha, beta = self.prior.lookup(state.t, state.lead)
        p_hat = posterior(counts, alpha, beta)
        p_bar = mle(counts) if counts.N else None
        if self.weights is None:
            D, p_star = 1.0, p_hat
        else:
            D = float(self.weights(state.t, state.lead))
            p_star = float(blend(p_pre, p_hat, D))
        return WinProbEstimate(p_bar, p_hat, p_star, counts, D)

    def game_trace(self, states: GameStates, p_pre: float, exclude_game=None):
        return [self.estimate(states.key(i), p_pre, exclude_game) for i in range(len(states))]

    def p_pre(self, game) -> float:
        return float(pregame_prob(game.pregame_spread, self.sigma))


def estimate(model: WinProbModel, state: GameStateKey, p_pre: float) -> WinProbEstimate:
    return model.estimate(state, p_pre)


@dataclass
class WeightTrainingSet:
    t: np.ndarray
    lead: np.ndarray
    p_hat: np.ndarray
    p_pre: np.ndarray
    y: np.ndarray


def weight_training_set(model: WinProbModel, games, paces, pv_model,
                        leave_one_out: bool = True) -> WeightTrainingSet:
    """Per-play ``(t, lead, p_hat, p_pre, Y)`` for fitting the blend weights.

    With ``leave_one_out`` a game's own plays are removed from its windows so
    ``p_hat`` does not already know the answer.
    """
    cols = defaultdict(list)
    for g in sorted(games, key=lambda g: g.game_id):
        st = game_states(g, paces, pv_model)
        pp = model.p_pre(g)
        excl = g.game_id if leave_one_out else None
        for i in range(len(st)):
            key = st.key(i)
            counts = model.index.count(key.tau, key.omega, model.schedule, excl)
            a, b = model.prior.lookup(key.t, key.lead)
            cols["t"].append(key.t)
            cols["lead"].append(key.lead)
            cols["p_hat"].append(posterior(counts, a, b))
            cols["p_pre"].append(pp)
            cols["y"].append(g.home_win)
    return WeightTrainingSet(*(np.asarray(cols[c], dtype=np.float64)
                               for c in ("t", "lead", "p_hat", "p_pre", "y")))
