"""Scaling analysis over a TTS surface.

The surface holds TTS (and, when known, the success probability) on a grid of
problem sizes N and effort values t. From it this module derives

* fixed-t curves (TTS vs N at constant effort),
* ``t_p(N)``, the smallest tested effort reaching a success probability p,
* the lower envelope (min over t of TTS at each N) with grid-edge flags,
* regression fits on the envelope with model selection, and
* fake-speedup diagnostics for solvers that overspend effort at small N.

Regressors follow scikit-learn conventions (``fit(N, y)`` returns ``self``,
``predict(N)``, ``get_params``), with N passed as a 1-D array or an (n, 1)
column. Every model evaluation outside the fitted N range is labelled
EXTRAPOLATED.
"""
import csv
import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import DataError, InsufficientDataError, InvalidArgumentError, RefusalToFitError
from .instances import ProblemClass
from .metrics import DEFAULT_P_TARGET, tts
from .solvers import Solver

MIN_INTERIOR_POINTS = 4
PARSIMONY_PENALTY = 2.0
REFUSAL_MESSAGE = "envelope too small to support trustworthy data analysis"


class BoundaryFlag(str, enum.Enum):
    INTERIOR = "INTERIOR"
    AT_T_MIN = "AT_T_MIN"
    AT_T_MAX = "AT_T_MAX"


class FitStatus(str, enum.Enum):
    INTERPOLATED = "INTERPOLATED"
    EXTRAPOLATED = "EXTRAPOLATED"


class Family(str, enum.Enum):
    SUCCESS_GAUSSIAN = "SUCCESS_GAUSSIAN"
    EXP_LINEAR = "EXP_LINEAR"
    EXP_QUADRATIC = "EXP_QUADRATIC"
    POWER = "POWER"


TTS_FAMILIES = (Family.EXP_LINEAR, Family.EXP_QUADRATIC, Family.POWER, Family.SUCCESS_GAUSSIAN)


# --- surface ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TTSSurface:
    """TTS on an (N, t) grid for one solver and problem class.

    ``tts`` and ``p_hat`` are ``(len(n_values), len(t_values))`` arrays with NaN
    marking untested cells; ``p_hat`` may be all-NaN when only TTS is known.
    Constructors sort both axes, so input order does not matter.
    """

    n_values: np.ndarray
    t_values: np.ndarray
    tts: np.ndarray
    p_hat: np.ndarray
    solver: str = ""
    problem_class: str = ""
    proxy: bool = False

    @classmethod
    def from_tts(cls, n_values, t_values, tts_grid, p_hat=None, **meta):
        n = np.asarray(n_values, dtype=float)
        t = np.asarray(t_values, dtype=float)
        grid = np.asarray(tts_grid, dtype=float).reshape(len(n), len(t))
        p = np.full_like(grid, np.nan) if p_hat is None else np.asarray(p_hat, dtype=float).reshape(grid.shape)
        if len(np.unique(n)) != len(n) or len(np.unique(t)) != len(t):
            raise InvalidArgumentError("duplicate N or t values")
        if np.any(n <= 0) or np.any(t <= 0):
            raise InvalidArgumentError("N and t must be positive")
        ni, ti = np.argsort(n), np.argsort(t)
        return cls(n[ni], t[ti], grid[np.ix_(ni, ti)], p[np.ix_(ni, ti)], **meta)

    @classmethod
    def from_success(cls, n_values, t_values, p_hat, p_target=DEFAULT_P_TARGET, **meta):
        """Build from success probabilities; TTS uses ``t_total = t``."""
        p = np.asarray(p_hat, dtype=float).reshape(len(n_values), len(t_values))
        grid = np.full_like(p, np.nan)
        for i in range(p.shape[0]):
            for j, t in enumerate(t_values):
                if not np.isnan(p[i, j]):
                    grid[i, j] = tts(t, p[i, j], p_target).tts
        return cls.from_tts(n_values, t_values, grid, p, **meta)

    @classmethod
    def from_points(cls, points, time_of=None):
        """Build from metrics CurvePoints sharing one solver and class.

        ``time_of(point)`` gives per-run time; default is the effort ``t``.
        """
        points = list(points)
        if not points:
            raise InsufficientDataError("no curve points")
        keys = {(p.solver, p.problem_class) for p in points}
        if len(keys) != 1:
            raise InvalidArgumentError("points span several solvers or classes")
        ns = sorted({p.n for p in points})
        ts = sorted({p.t_effort for p in points})
        grid = np.full((len(ns), len(ts)), np.nan)
        prob = np.full_like(grid, np.nan)
        for pt in points:
            i, j = ns.index(pt.n), ts.index(pt.t_effort)
            grid[i, j] = pt.tts.tts if time_of is None else tts(time_of(pt), pt.estimate, pt.tts.p_target).tts
            prob[i, j] = pt.estimate.p_hat
        solver, cls_ = keys.pop()
        return cls.from_tts(ns, ts, grid, prob, solver=Solver(solver).value,
                            problem_class=ProblemClass(cls_).value, proxy=any(p.estimate.proxy for p in points))

    @property
    def n_range(self):
        return float(self.n_values[0]), float(self.n_values[-1])

    @property
    def t_range(self):
        return float(self.t_values[0]), float(self.t_values[-1])

    def tested(self, i):
        """Column indices of the tested t values in row ``i``."""
        return np.flatnonzero(~np.isnan(self.tts[i]))


def _num_key(x):
    x = float(x)
    return int(x) if x.is_integer() else x


@dataclass(frozen=True)
class FixedTCurve:
    t: float
    points: dict
    gaps: tuple = ()


def fixed_t_curves(surface):
    """One TTS-vs-N curve per tested t; untested (N, t) cells are listed in ``gaps``."""
    out = []
    for j, t in enumerate(surface.t_values):
        pts, gaps = {}, []
        for i, n in enumerate(surface.n_values):
            v = surface.tts[i, j]
            if np.isnan(v):
                gaps.append(_num_key(n))
            else:
                pts[_num_key(n)] = float(v)
        out.append(FixedTCurve(_num_key(t), pts, tuple(gaps)))
    return out


def _require_two_t(surface):
    for i, n in enumerate(surface.n_values):
        if len(surface.tested(i)) < 2:
            raise InsufficientDataError(f"N={_num_key(n)} has fewer than 2 tested t values")


@dataclass(frozen=True)
class TpCurve:
    p: float
    points: dict
    unachieved: tuple = ()


def t_p_curve(surface, p):
    """Smallest tested effort whose success probability reaches ``p``, per N."""
    if not 0 < p < 1:
        raise InvalidArgumentError(f"p must lie in (0, 1), got {p}")
    _require_two_t(surface)
    pts, missing = {}, []
    for i, n in enumerate(surface.n_values):
        ok = np.flatnonzero(surface.p_hat[i] >= p)
        if ok.size:
            pts[_num_key(n)] = _num_key(surface.t_values[ok[0]])
        else:
            missing.append(_num_key(n))
    return TpCurve(p, pts, tuple(missing))


@dataclass(frozen=True)
class EnvelopePoint:
    tts_min: float
    argmin_t: float
    boundary_flag: BoundaryFlag


@dataclass(frozen=True)
class EnvelopeCurve:
    points: dict
    solver: str = ""
    problem_class: str = ""
    unsolved: tuple = ()

    def interior(self):
        return {n: pt for n, pt in self.points.items() if pt.boundary_flag is BoundaryFlag.INTERIOR}


def lower_envelope(surface):
    """Pointwise minimum of TTS over tested t.

    Points whose minimizing t is the smallest or largest tested effort at that
    N are flagged, since the true optimum may lie off the grid. N values where
    every tested t gave infinite TTS land in ``unsolved``.
    """
    _require_two_t(surface)
    pts, unsolved = {}, []
    for i, n in enumerate(surface.n_values):
        cols = surface.tested(i)
        row = surface.tts[i, cols]
        k = int(np.argmin(row))
        if not np.isfinite(row[k]):
            unsolved.append(_num_key(n))
            continue
        if k == 0:
            flag = BoundaryFlag.AT_T_MIN
        elif k == len(cols) - 1:
            flag = BoundaryFlag.AT_T_MAX
        else:
            flag = BoundaryFlag.INTERIOR
        pts[_num_key(n)] = EnvelopePoint(float(row[k]), _num_key(surface.t_values[cols[k]]), flag)
    return EnvelopeCurve(pts, surface.solver, surface.problem_class, tuple(unsolved))


# --- model families ---------------------------------------------------------


def _log_g(u):
    """``log(-log(1 - exp(-u)))`` evaluated stably for u > 0."""
    u = np.asarray(u, dtype=float)
    out = np.empty_like(u)
    big = u > 30
    out[big] = -u[big]
    small = ~big
    out[small] = np.log(-np.log1p(-np.exp(-u[small])))
    return out


_LINEAR_BASIS = {
    Family.EXP_LINEAR: lambda n: n,
    Family.EXP_QUADRATIC: lambda n: n**2,
    Family.POWER: np.log,
}


def _log_tts_model(family, params, n):
    n = np.asarray(n, dtype=float)
    if family in _LINEAR_BASIS:
        return params["a"] + params["b"] * _LINEAR_BASIS[family](n)
    n0 = params["N0"]
    if not np.isfinite(n0):
        return np.full_like(n, params["a"])
    return params["a"] - _log_g((n / n0) ** 2)


@dataclass
class ScalingFit:
    """Fitted model with its provenance.

    ``quantity`` is ``"tts"`` for envelope fits (residuals on log TTS) or
    ``"p_hat"`` for success-decay fits (residuals on -log p).
    """

    family: Family
    params: dict
    stderr: dict
    residual_ss: float
    n_range: tuple
    score: float
    n_points: int
    quantity: str = "tts"
    excluded: int = 0
    ci95: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def predict(self, n):
        n = np.asarray(n, dtype=float)
        if self.quantity == "p_hat":
            n0 = self.params["N0"]
            return np.ones_like(n) if not np.isfinite(n0) else np.exp(-((n / n0) ** 2))
        return np.exp(_log_tts_model(self.family, self.params, n))

    def status(self, n):
        lo, hi = self.n_range
        return FitStatus.INTERPOLATED if lo <= n <= hi else FitStatus.EXTRAPOLATED


def evaluate_fit(fit, n):
    """Model value at ``n`` together with its INTERPOLATED/EXTRAPOLATED label."""
    n = float(n)
    if not n > 0:
        raise InvalidArgumentError(f"N must be positive, got {n}")
    return float(fit.predict([n])[0]), fit.status(n)


def _as_n(X):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    X = check_array(X, ensure_min_samples=1)
    if X.shape[1] != 1:
        raise InvalidArgumentError(f"expected a single feature (N), got shape {X.shape}")
    n = X[:, 0]
    if np.any(n <= 0):
        raise InvalidArgumentError("N must be positive")
    return n


def _fit_linear(family, n, y):
    X = np.column_stack([np.ones_like(n), _LINEAR_BASIS[family](n)])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    rss = float(resid @ resid)
    dof = len(n) - 2
    s2 = rss / dof if dof > 0 else np.nan
    cov = s2 * np.linalg.inv(X.T @ X)
    se = np.sqrt(np.diag(cov))
    return {"a": float(coef[0]), "b": float(coef[1])}, {"a": float(se[0]), "b": float(se[1])}, rss


def _fit_success_gaussian_tts(n, y):
    # profile out the intercept on a log grid of N0, then polish with least squares
    def intercept(n0):
        return float(np.mean(y + _log_g((n / n0) ** 2)))

    def rss_at(n0):
        r = y - _log_tts_model(Family.SUCCESS_GAUSSIAN, {"a": intercept(n0), "N0": n0}, n)
        return float(r @ r)

    grid = np.geomspace(n.min() / 20, n.max() * 20, 400)
    n0 = grid[int(np.argmin([rss_at(g) for g in grid]))]

    def resid(theta):
        return y - _log_tts_model(Family.SUCCESS_GAUSSIAN, {"a": theta[0], "N0": math.exp(theta[1])}, n)

    sol = optimize.least_squares(resid, x0=[intercept(n0), math.log(n0)], xtol=1e-15, ftol=1e-15, gtol=1e-15)
    a, log_n0 = sol.x
    rss = float(sol.fun @ sol.fun)
    dof = len(n) - 2
    s2 = rss / dof if dof > 0 else np.nan
    try:
        cov = s2 * np.linalg.inv(sol.jac.T @ sol.jac)
        se_a, se_log = np.sqrt(np.abs(np.diag(cov)))
    except np.linalg.LinAlgError:
        se_a = se_log = np.nan
    n0 = math.exp(log_n0)
    return {"a": float(a), "N0": n0}, {"a": float(se_a), "N0": float(n0 * se_log)}, rss


class ScalingRegressor(BaseEstimator):
    """Least-squares fit of one scaling family to log TTS.

    Families: EXP_LINEAR (``log TTS = a + b N``), EXP_QUADRATIC
    (``a + b N^2``), POWER (``a + b log N``) and SUCCESS_GAUSSIAN, the TTS
    implied by a success probability ``exp(-(N/N0)^2)`` at fixed per-run time,
    ``a - log(-log(1 - exp(-(N/N0)^2)))``, fitted by nonlinear least squares.
    """

    def __init__(self, family=Family.EXP_QUADRATIC, penalty_per_param=PARSIMONY_PENALTY):
        self.family = family
        self.penalty_per_param = penalty_per_param

    def fit(self, X, y):
        family = Family(self.family)
        n = _as_n(X)
        y = np.asarray(y, dtype=float).ravel()
        if y.shape != n.shape:
            raise InvalidArgumentError("X and y lengths differ")
        if np.any(~np.isfinite(y)) or np.any(y <= 0):
            raise InvalidArgumentError("TTS values must be positive and finite")
        if len(n) < 3:
            raise InsufficientDataError("need at least 3 points")
        logy = np.log(y)
        if family is Family.SUCCESS_GAUSSIAN:
            params, se, rss = _fit_success_gaussian_tts(n, logy)
        else:
            params, se, rss = _fit_linear(family, n, logy)
        self.fit_ = ScalingFit(
            family=family,
            params=params,
            stderr=se,
            residual_ss=rss,
            n_range=(float(n.min()), float(n.max())),
            score=rss + self.penalty_per_param * len(params),
            n_points=len(n),
        )
        return self

    def predict(self, X):
        check_is_fitted(self, "fit_")
        return self.fit_.predict(_as_n(X))


class ScalingModelSelector(BaseEstimator):
    """Fit every candidate family and keep the lowest ``RSS + penalty * k``."""

    def __init__(self, families=TTS_FAMILIES, penalty_per_param=PARSIMONY_PENALTY):
        self.families = families
        self.penalty_per_param = penalty_per_param

    def fit(self, X, y):
        self.candidates_ = {}
        for fam in self.families:
            reg = ScalingRegressor(fam, self.penalty_per_param).fit(X, y)
            self.candidates_[Family(fam)] = reg.fit_
        self.best_ = min(self.candidates_.values(), key=lambda f: (f.score, list(Family).index(f.family)))
        return self

    def predict(self, X):
        check_is_fitted(self, "best_")
        return self.best_.predict(_as_n(X))


class SuccessDecayRegressor(BaseEstimator):
    """Fit ``p(N) = exp(-(N/N0)^2)`` at fixed effort.

    ``-log p`` is regressed on ``N^2`` through the origin, slope ``c = 1/N0^2``.
    The 95% interval on N0 maps the Student-t interval on ``c``; ``stderr`` is
    the delta-method value. Points with p = 0 are dropped with a warning.
    """

    def __init__(self, confidence=0.95):
        self.confidence = confidence

    def fit(self, X, y):
        n = _as_n(X)
        p = np.asarray(y, dtype=float).ravel()
        if p.shape != n.shape:
            raise InvalidArgumentError("X and y lengths differ")
        if np.any(~np.isfinite(p)) or np.any(p < 0):
            raise InvalidArgumentError("success probabilities must be finite and non-negative")
        if np.any(p > 1):
            # noisy synthetic inputs; -log p is simply negative there
            warnings.warn("p_hat > 1 in success-decay fit input; used as given", stacklevel=2)
        keep = p > 0
        excluded = int((~keep).sum())
        if excluded:
            warnings.warn(f"{excluded} point(s) with p_hat = 0 excluded from the success-decay fit", stacklevel=2)
        n, p = n[keep], p[keep]
        if len(n) < 3:
            raise InsufficientDataError(f"need at least 3 points with p_hat > 0, got {len(n)}")
        x, yy = n**2, -np.log(p)
        sxx = float(x @ x)
        c = float(x @ yy) / sxx
        resid = yy - c * x
        rss = float(resid @ resid)
        dof = len(n) - 1
        se_c = math.sqrt(rss / dof / sxx)
        q = stats.t.ppf(0.5 + self.confidence / 2, dof)
        notes = []
        if c > 0:
            n0 = c**-0.5
            se_n0 = 0.5 * c**-1.5 * se_c
            c_lo, c_hi = c - q * se_c, c + q * se_c
            ci = (c_hi**-0.5, c_lo**-0.5 if c_lo > 0 else math.inf)
        else:
            n0, se_n0, ci = math.inf, math.inf, (math.inf, math.inf)
            notes.append("no decay measurable")
        self.n0_ = n0
        self.fit_ = ScalingFit(
            family=Family.SUCCESS_GAUSSIAN,
            params={"N0": n0},
            stderr={"N0": se_n0},
            residual_ss=rss,
            n_range=(float(n.min()), float(n.max())),
            score=rss + PARSIMONY_PENALTY,
            n_points=len(n),
            quantity="p_hat",
            excluded=excluded,
            ci95={"N0": ci},
            notes=notes,
        )
        return self

    def predict(self, X):
        check_is_fitted(self, "fit_")
        return self.fit_.predict(_as_n(X))


def fit_success_model(points):
    """Fit the Gaussian success-decay model to a mapping N -> p_hat at fixed t."""
    ns = sorted(points)
    return SuccessDecayRegressor().fit(ns, [points[n] for n in ns]).fit_


def success_decay_table(surface):
    """N0 per tested t: a ScalingFit, or the reason the fit was impossible."""
    table = {}
    for j, t in enumerate(surface.t_values):
        pts = {float(n): float(surface.p_hat[i, j]) for i, n in enumerate(surface.n_values)
               if not np.isnan(surface.p_hat[i, j])}
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                table[_num_key(t)] = fit_success_model(pts)
        except (InsufficientDataError, InvalidArgumentError) as exc:
            table[_num_key(t)] = str(exc)
    return table


@dataclass
class ModelSelection:
    best: ScalingFit
    candidates: dict
    excluded: int


def fit_scaling_model(envelope, families=TTS_FAMILIES, min_interior=MIN_INTERIOR_POINTS):
    """Fit each family to the interior envelope points and select the best.

    Boundary-flagged points are excluded (their optimum may lie off the
    effort grid). Fewer than ``min_interior`` remaining points is a refusal.
    """
    interior = envelope.interior()
    excluded = len(envelope.points) - len(interior)
    if len(interior) < min_interior:
        raise RefusalToFitError(
            f"{REFUSAL_MESSAGE}: {len(interior)} interior point(s), need {min_interior} "
            f"({excluded} boundary-flagged excluded)"
        )
    ns = sorted(interior)
    sel = ScalingModelSelector(families).fit(ns, [interior[n].tts_min for n in ns])
    for f in sel.candidates_.values():
        f.excluded = excluded
    return ModelSelection(sel.best_, sel.candidates_, excluded)


# --- fake speedup -----------------------------------------------------------


class PointFlag(str, enum.Enum):
    SATURATED = "SATURATED"
    BOUNDARY = "BOUNDARY"


@dataclass(frozen=True)
class FlatnessCheck:
    t: float
    n_lo: float
    n_hi: float
    ratio: float
    envelope_ratio: float
    intercept: float
    suspiciously_flat: bool


@dataclass
class FakeSpeedupReport:
    flags: dict
    verdict: bool
    flatness: list
    small_n: tuple


FLATNESS_THRESHOLD = 2.0


def detect_fake_speedup(surface, p_target=DEFAULT_P_TARGET):
    """Flag signs that the smallest tested effort is already more than needed.

    Per N: SATURATED when the smallest tested t already reaches ``p_target``,
    BOUNDARY when the envelope minimum sits at that smallest t. The verdict is
    positive when at least half of the smaller half of N values carry a flag.
    Each fixed-t curve is also checked for flatness: a growth ratio under 2
    across its N range while the envelope grows by 2 or more over the same
    range marks it suspiciously flat. ``intercept`` is the TTS-axis intercept
    of a straight-line fit of that curve.
    """
    env = lower_envelope(surface)
    flags = {}
    for i, n in enumerate(surface.n_values):
        key = _num_key(n)
        cols = surface.tested(i)
        f = set()
        if cols.size and surface.p_hat[i, cols[0]] >= p_target:
            f.add(PointFlag.SATURATED)
        pt = env.points.get(key)
        if pt is not None and pt.boundary_flag is BoundaryFlag.AT_T_MIN:
            f.add(PointFlag.BOUNDARY)
        flags[key] = f
    ns = [_num_key(n) for n in surface.n_values]
    small = tuple(ns[: math.ceil(len(ns) / 2)])
    hit = sum(1 for n in small if flags[n])
    verdict = bool(small) and 2 * hit >= len(small)

    flatness = []
    for curve in fixed_t_curves(surface):
        finite = {n: v for n, v in curve.points.items() if np.isfinite(v)}
        if len(finite) < 2:
            continue
        lo, hi = min(finite), max(finite)
        ratio = finite[hi] / finite[lo]
        env_ratio = math.nan
        if lo in env.points and hi in env.points:
            env_ratio = env.points[hi].tts_min / env.points[lo].tts_min
        xs = np.array(sorted(finite), dtype=float)
        slope, icpt = np.polyfit(xs, [finite[n] for n in sorted(finite)], 1)
        suspicious = ratio < FLATNESS_THRESHOLD and env_ratio >= FLATNESS_THRESHOLD
        flatness.append(FlatnessCheck(curve.t, lo, hi, ratio, env_ratio, float(icpt), bool(suspicious)))
    return FakeSpeedupReport(flags, verdict, flatness, small)


# --- envelope CSV -----------------------------------------------------------

ENVELOPE_COLUMNS = ("solver", "problem_class", "n", "tts_min", "argmin_t", "boundary_flag")


def _fmt(x):
    x = float(x)
    if math.isinf(x):
        return "inf"
    if x.is_integer() and abs(x) < 2**53:
        return str(int(x))
    return repr(x)


def write_envelopes(path, envelopes):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ENVELOPE_COLUMNS)
        for env in envelopes:
            for n in sorted(env.points):
                pt = env.points[n]
                w.writerow([env.solver, env.problem_class, _fmt(n), _fmt(pt.tts_min), _fmt(pt.argmin_t),
                            pt.boundary_flag.value])


def read_envelopes(path):
    """Parse envelope.csv into ``{(solver, class): EnvelopeCurve}``."""
    pts = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != ENVELOPE_COLUMNS:
            raise DataError(f"envelope header must be {','.join(ENVELOPE_COLUMNS)}", path, 1)
        for row in reader:
            try:
                key = (row["solver"], row["problem_class"])
                pts.setdefault(key, {})[_num_key(row["n"])] = EnvelopePoint(
                    float(row["tts_min"]), _num_key(row["argmin_t"]), BoundaryFlag(row["boundary_flag"]))
            except ValueError as exc:
                raise DataError(str(exc), path, reader.line_num) from None
    return {k: EnvelopeCurve(v, *k) for k, v in pts.items()}


def format_fit(fit):
    """Parameter summary such as ``a = 1.02 +/- 0.03, b = 0.0020 +/- 1e-05``."""
    parts = [f"{k} = {v:.6g} +/- {fit.stderr.get(k, math.nan):.3g}" for k, v in fit.params.items()]
    return ", ".join(parts)
