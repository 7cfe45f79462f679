"""Success probabilities, time-to-solution, best-batch post-processing and hardness diagnostics."""
import csv
import math
from collections import defaultdict
from dataclasses import dataclass, field, replace

import numpy as np

from ._validation import check_curve, check_open_probability, check_positive
from .exceptions import (
    DataError,
    InvalidArgumentError,
    SizeExceededError,
    UnresolvedReferenceError,
)
from .instances import DEFAULT_BRUTE_FORCE_CAP, GAUSSIAN_REL_TOL, ProblemClass, brute_force_ground
from .solvers import Solver, derive_seed

DEFAULT_P_TARGET = 0.99
DEFAULT_RESAMPLES = 1000

# Published measured CIM-vs-2000Q TTS gaps and the N at which they were read.
# Metadata only: the underlying hardware data is not available.
HARDWARE_GAP_READINGS = {
    ProblemClass.SK: {"measured_gap": 100.0, "n": 60},
    ProblemClass.MAXCUT: {"measured_gap": 8000.0, "n": 45},
}
HARDWARE_SUCCESS_READINGS = {"p_raw": 0.1, "p_post": 0.9}


@dataclass(frozen=True)
class SuccessEstimate:
    p_hat: float
    ci_low: float
    ci_high: float
    n_runs: int
    proxy: bool = False

    def __post_init__(self):
        if not 0.0 <= self.ci_low <= self.p_hat <= self.ci_high <= 1.0:
            raise InvalidArgumentError(f"inconsistent estimate {self}")
        if self.n_runs < 1:
            raise InvalidArgumentError("n_runs must be >= 1")


@dataclass(frozen=True)
class TTSValue:
    tts: float
    repetitions: float
    p_target: float
    t_total: float


def is_success(final_energy, ground_energy, tolerance=GAUSSIAN_REL_TOL):
    """``final_energy`` reaches the reference within a relative ``tolerance``."""
    return final_energy - ground_energy <= tolerance * max(abs(ground_energy), 1.0)


# --- ground truth -----------------------------------------------------------


def instance_key(rec):
    return (ProblemClass(rec.problem_class), rec.n, rec.instance_seed)


def resolve_ground_truth(records, instances=None, cap=DEFAULT_BRUTE_FORCE_CAP, tolerance=None):
    """Fill ``ground_energy``, ``ground_exact`` and ``success`` on every record.

    ``instances`` maps ``(problem_class, n, instance_seed)`` to IsingProblem.
    Instances with ``n <= cap`` get the exhaustive oracle. Larger ones, or ones
    whose problem is not supplied, fall back to the best energy any run reached
    on that instance and are flagged ``ground_exact = False``.

    ``tolerance`` is relative; ``None`` picks 0 for integer-valued instances and
    1e-9 otherwise (records without an instance use 1e-9).
    """
    instances = instances or {}
    best_seen = {}
    for rec in records:
        k = instance_key(rec)
        best_seen[k] = min(best_seen.get(k, math.inf), rec.final_energy)
    truth = {}
    for k in best_seen:
        p = instances.get(k)
        if p is not None and p.n <= cap:
            try:
                truth[k] = (brute_force_ground(p, cap).ground_energy, True)
                continue
            except SizeExceededError:
                pass
        truth[k] = (best_seen[k], False)
    out = []
    for rec in records:
        k = instance_key(rec)
        ground, exact = truth[k]
        tol = tolerance
        if tol is None:
            p = instances.get(k)
            tol = 0.0 if (p is not None and p.integral) else GAUSSIAN_REL_TOL
        out.append(replace(rec, ground_energy=ground, ground_exact=exact, success=is_success(rec.final_energy, ground, tol)))
    return out


# --- success probability and TTS -------------------------------------------


def _bootstrap_ci(successes, n, resamples, rng, confidence=0.95):
    p_hat = successes / n
    draws = rng.binomial(n, p_hat, size=resamples) / n
    alpha = (1.0 - confidence) / 2
    lo, hi = np.quantile(draws, [alpha, 1.0 - alpha])
    return min(float(lo), p_hat), max(float(hi), p_hat)


def estimate_success(records, tolerance=GAUSSIAN_REL_TOL, resamples=DEFAULT_RESAMPLES, seed=0):
    """Fraction of runs that reached the ground energy, with a percentile bootstrap CI.

    Resampling a Bernoulli sample with replacement is the same as drawing
    ``Binomial(n, p_hat)``, which is what is done here.
    """
    records = list(records)
    if not records:
        raise InvalidArgumentError("estimate_success needs at least one record")
    cells = {(r.solver, r.problem_class, r.n, r.t_effort) for r in records}
    if len(cells) > 1:
        raise InvalidArgumentError(f"records span several (solver, n, t) cells: {sorted(map(str, cells))}")
    if any(r.ground_energy is None for r in records):
        raise UnresolvedReferenceError("some records have no ground-state reference")
    hits = sum(is_success(r.final_energy, r.ground_energy, tolerance) for r in records)
    n = len(records)
    lo, hi = _bootstrap_ci(hits, n, resamples, np.random.default_rng(seed))
    proxy = any(r.ground_exact is False for r in records)
    return SuccessEstimate(hits / n, lo, hi, n, proxy)


def tts(t_total, est, p_target=DEFAULT_P_TARGET, integer_repetitions=False):
    """Time to reach the ground state at least once with probability ``p_target``.

    ``est`` is a SuccessEstimate or a bare success probability.
    ``R = ln(1 - p_target) / ln(1 - p_hat)`` clamped to ``R >= 1``;
    ``integer_repetitions`` rounds R up to whole runs.
    """
    t_total = check_positive(t_total, "t_total")
    p_target = check_open_probability(p_target, "p_target")
    p = est.p_hat if isinstance(est, SuccessEstimate) else float(est)
    if not 0.0 <= p <= 1.0:
        raise InvalidArgumentError(f"success probability must lie in [0, 1], got {p}")
    if p == 0.0:
        return TTSValue(math.inf, math.inf, p_target, t_total)
    if p >= p_target:
        reps = 1.0
    else:
        reps = max(1.0, math.log1p(-p_target) / math.log1p(-p))
    if integer_repetitions:
        reps = float(math.ceil(reps))
    return TTSValue(t_total * reps, reps, p_target, t_total)


# --- best-batch post-processing --------------------------------------------


def best_batch(records):
    """Pooled success rate and the rate of the single best batch.

    Ties go to the lowest batch id. Needs at least two batches.
    """
    groups = defaultdict(list)
    for r in records:
        if r.success is None:
            raise UnresolvedReferenceError("best_batch needs resolved success flags")
        groups[r.batch_id].append(bool(r.success))
    if len(groups) < 2:
        raise InvalidArgumentError("best-batch post-processing needs at least two batches")
    total = sum(len(g) for g in groups.values())
    p_raw = sum(sum(g) for g in groups.values()) / total
    rates = {b: sum(g) / len(g) for b, g in groups.items()}
    best = max(sorted(rates), key=lambda b: rates[b])
    return p_raw, rates[best]


def postproc_speedup(p_raw, p_post):
    """TTS_raw / TTS_post at equal per-run time: ``ln(1 - p_post) / ln(1 - p_raw)``."""
    p_raw = check_open_probability(p_raw, "p_raw")
    p_post = check_open_probability(p_post, "p_post")
    if p_post < p_raw:
        raise InvalidArgumentError(f"p_post={p_post} < p_raw={p_raw}: post-processing cannot lower success")
    if p_post == p_raw:
        return 1.0
    return math.log1p(-p_post) / math.log1p(-p_raw)


def normalize_gap(measured_gap, speedup_factor):
    measured_gap = check_positive(measured_gap, "measured_gap")
    speedup_factor = check_positive(speedup_factor, "speedup_factor")
    return measured_gap / speedup_factor


@dataclass(frozen=True)
class PostprocComparison:
    p_raw: float
    p_post: float
    speedup_factor: float
    measured_gap: float
    corrected_gap: float

    @classmethod
    def from_probabilities(cls, p_raw, p_post, measured_gap):
        f = postproc_speedup(p_raw, p_post)
        return cls(p_raw, p_post, f, measured_gap, normalize_gap(measured_gap, f))


# --- hardness ---------------------------------------------------------------


def decade_growth_factor(curve):
    """Growth of time per tenfold increase of N, from a log-log least-squares slope."""
    ns, vals = check_curve(curve)
    if len(ns) < 3:
        raise InvalidArgumentError("need at least 3 points")
    if np.any(ns <= 0) or np.any(~np.isfinite(vals)) or np.any(vals <= 0):
        raise InvalidArgumentError("N and values must be positive and finite")
    if ns[-1] < 2 * ns[0]:
        raise InvalidArgumentError(f"N span {ns[0]:g}..{ns[-1]:g} is less than 2x")
    slope = np.polyfit(np.log10(ns), np.log10(vals), 1)[0]
    return float(10.0**slope)


HARD_GROWTH_PER_DECADE = 10.0
EASY_MAX_EFFORT = 1000.0


@dataclass
class HardnessDiagnostic:
    solver: Solver
    problem_class: ProblemClass
    largest_n: int = None
    min_t_half: float = None
    search_bits: int = None
    step_bits: float = None
    growth_per_decade: float = None
    easy: bool = None
    notes: list = field(default_factory=list)


def _cells(records):
    """Group resolved records by (solver, class, n, t)."""
    groups = defaultdict(list)
    for r in records:
        if r.success is None:
            raise UnresolvedReferenceError("hardness diagnostics need resolved success flags")
        groups[Solver(r.solver), ProblemClass(r.problem_class), r.n, r.t_effort].append(bool(r.success))
    return groups


def hardness_report(records, p_target=DEFAULT_P_TARGET):
    """Measured-hardness indicators per (solver, class).

    Reports the smallest effort reaching p_hat >= 0.5 at the largest N, the
    search-space size in bits (N) against log2 of that effort, the growth of
    the min-over-t TTS curve per decade of N, and an easy indicator that is
    true when growth per decade is under 10 and the effort is at most 1000.
    """
    cells = _cells(records)
    by_slice = defaultdict(dict)
    for (solver, cls, n, t), hits in cells.items():
        by_slice[solver, cls][n, t] = sum(hits) / len(hits)
    if not by_slice:
        return [HardnessDiagnostic(None, None, notes=["insufficient data: no records"])]
    out = []
    for (solver, cls), grid in sorted(by_slice.items()):
        d = HardnessDiagnostic(solver, cls)
        ns = sorted({n for n, _ in grid})
        d.largest_n = ns[-1]
        d.search_bits = ns[-1]
        ts = sorted(t for n, t in grid if n == ns[-1])
        reached = [t for t in ts if grid[ns[-1], t] >= 0.5]
        if reached:
            d.min_t_half = reached[0]
            d.step_bits = math.log2(reached[0])
        else:
            d.notes.append(f"insufficient data: no tested effort reaches p_hat >= 0.5 at N={ns[-1]}")
        envelope = {}
        for n in ns:
            vals = [tts(t, grid[n, t], p_target).tts for t in sorted(t for m, t in grid if m == n)]
            if min(vals) < math.inf:
                envelope[n] = min(vals)
        try:
            d.growth_per_decade = decade_growth_factor(envelope)
        except InvalidArgumentError as exc:
            d.notes.append(f"insufficient data for growth per decade: {exc}")
        if d.growth_per_decade is not None and d.min_t_half is not None:
            d.easy = d.growth_per_decade < HARD_GROWTH_PER_DECADE and d.min_t_half <= EASY_MAX_EFFORT
        out.append(d)
    return out


# --- curves -----------------------------------------------------------------


@dataclass(frozen=True)
class CurvePoint:
    solver: Solver
    problem_class: ProblemClass
    n: int
    t_effort: float
    estimate: SuccessEstimate
    tts: TTSValue


def success_curves(records, p_target=DEFAULT_P_TARGET, resamples=DEFAULT_RESAMPLES, seed=0,
                   tolerance=GAUSSIAN_REL_TOL, integer_repetitions=False):
    """One CurvePoint per (solver, class, n, t), pooled over instances and runs.

    TTS is in effort units (``t_total = t``). The bootstrap seed for each cell
    is derived from ``seed`` and the cell coordinates, so output is reproducible.
    """
    groups = defaultdict(list)
    for r in records:
        groups[Solver(r.solver), ProblemClass(r.problem_class), r.n, r.t_effort].append(r)
    solver_idx = {s: i for i, s in enumerate(Solver)}
    class_idx = {c: i for i, c in enumerate(ProblemClass)}
    out = []
    for key in sorted(groups, key=lambda k: (k[0].value, k[1].value, k[2], k[3])):
        solver, cls, n, t = key
        cell_seed = derive_seed(seed, 2, solver_idx[solver], class_idx[cls], n, int(t))
        est = estimate_success(groups[key], tolerance, resamples, cell_seed)
        out.append(CurvePoint(solver, cls, n, t, est, tts(t, est, p_target, integer_repetitions)))
    return out


CURVE_COLUMNS = ("solver", "problem_class", "n", "t_effort", "n_runs", "p_hat", "ci_low", "ci_high", "tts", "proxy")


def _num(x):
    x = float(x)
    if math.isinf(x):
        return "inf"
    if x.is_integer() and abs(x) < 2**53:
        return str(int(x))
    return repr(x)


def write_curves(path, points):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CURVE_COLUMNS)
        for pt in points:
            e = pt.estimate
            w.writerow([
                pt.solver.value, pt.problem_class.value, pt.n, _num(pt.t_effort), e.n_runs,
                _num(e.p_hat), _num(e.ci_low), _num(e.ci_high), _num(pt.tts.tts), "true" if e.proxy else "false",
            ])


def read_curves(path, p_target=DEFAULT_P_TARGET):
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CURVE_COLUMNS:
            raise DataError(f"curves header must be {','.join(CURVE_COLUMNS)}", path, 1)
        for row in reader:
            try:
                est = SuccessEstimate(float(row["p_hat"]), float(row["ci_low"]), float(row["ci_high"]),
                                      int(row["n_runs"]), row["proxy"] == "true")
                t = float(row["t_effort"])
                value = float(row["tts"])
                reps = value / t
                out.append(CurvePoint(Solver(row["solver"]), ProblemClass(row["problem_class"]), int(row["n"]), t,
                                      est, TTSValue(value, reps, p_target, t)))
            except (ValueError, InvalidArgumentError) as exc:
                raise DataError(str(exc), path, reader.line_num) from None
    return out


__all__ = [
    "SuccessEstimate",
    "TTSValue",
    "PostprocComparison",
    "HardnessDiagnostic",
    "CurvePoint",
    "resolve_ground_truth",
    "estimate_success",
    "tts",
    "best_batch",
    "postproc_speedup",
    "normalize_gap",
    "decade_growth_factor",
    "hardness_report",
    "success_curves",
    "write_curves",
    "read_curves",
]
