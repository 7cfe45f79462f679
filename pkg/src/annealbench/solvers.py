"""Reference annealing solvers and the deterministic sweep runner.

Both solvers share one effort knob ``t``: Metropolis sweeps for simulated
annealing, mean-field update steps for the noisy mean-field (CIM-style)
annealer. Solvers follow the scikit-learn estimator conventions: constructor
arguments are hyperparameters (``get_params``/``set_params`` work), they are
validated when ``solve`` is called, and per-call state lands in trailing
underscore attributes.
"""
import csv
import enum
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numba
import numpy as np
from sklearn.base import BaseEstimator

from ._validation import (
    check_open_probability,
    check_positive,
    check_positive_int,
    check_seed,
    check_strictly_ascending,
)
from .exceptions import DataError, InvalidArgumentError
from .instances import CouplingDist, ProblemClass, energy, gen_maxcut, gen_sk

logger = logging.getLogger(__name__)

MASK64 = (1 << 64) - 1


class Solver(str, enum.Enum):
    SA = "SA"
    NMFA = "NMFA"


@dataclass(frozen=True)
class RunRecord:
    """One solver execution on one instance.

    ``wall_ns`` and ``spins`` are excluded from equality so that two runs of the
    same plan compare equal even though their timings differ.
    """

    run_id: int
    solver: Solver
    problem_class: ProblemClass
    n: int
    instance_seed: int
    run_seed: int
    t_effort: float
    batch_id: int
    final_energy: float
    ground_energy: float = None
    ground_exact: bool = None
    success: bool = None
    wall_ns: int = field(default=0, compare=False)
    spins: np.ndarray = field(default=None, compare=False, repr=False)


class RunLog(list):
    """List of RunRecords that also remembers whether the sweep was cut short."""

    def __init__(self, records=(), truncated=False, reason=""):
        super().__init__(records)
        self.truncated = truncated
        self.reason = reason


# --- seeds ------------------------------------------------------------------


def splitmix64(x):
    """SplitMix64 output function applied to ``x`` (one step of the generator)."""
    z = (x + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(master_seed, *indices):
    """Fold a tuple of non-negative indices into a 64-bit seed.

    ``h0 = splitmix64(master)`` and ``h_{k+1} = splitmix64(h_k XOR index_k)``.
    Different index tuples give statistically independent RNG streams.
    """
    h = splitmix64(check_seed(master_seed))
    for idx in indices:
        h = splitmix64(h ^ (int(idx) & MASK64))
    return h


# --- simulated annealing ----------------------------------------------------


@numba.njit(cache=True, nogil=True)
def _metropolis_block(J, h, s, local, betas, uniforms, e, best_e, best_s, trace, offset):
    n = s.shape[0]
    for k in range(betas.shape[0]):
        beta = betas[k]
        for i in range(n):
            de = -2.0 * s[i] * (local[i] + h[i])
            if de <= 0.0 or uniforms[k, i] < np.exp(-beta * de):
                s[i] = -s[i]
                two_si = 2.0 * s[i]
                for j in range(n):
                    local[j] += two_si * J[j, i]
                e += de
                if e < best_e:
                    best_e = e
                    for j in range(n):
                        best_s[j] = s[j]
        trace[offset + k] = best_e
    return e, best_e


def beta_schedule(beta_start, beta_end, sweeps, shape="geometric"):
    shape = shape.lower()
    if shape == "geometric":
        return np.geomspace(beta_start, beta_end, sweeps)
    if shape == "linear":
        return np.linspace(beta_start, beta_end, sweeps)
    raise InvalidArgumentError(f"unknown schedule shape {shape!r}")


def _elapsed_record(solver, p, t, seed, e_best, spins, wall_ns):
    return RunRecord(
        run_id=0,
        solver=solver,
        problem_class=p.problem_class,
        n=p.n,
        instance_seed=p.instance_seed,
        run_seed=seed,
        t_effort=float(t),
        batch_id=0,
        final_energy=e_best,
        wall_ns=wall_ns,
        spins=spins,
    )


class SimulatedAnnealing(BaseEstimator):
    """Single-spin-flip Metropolis annealing.

    One sweep proposes a flip of every spin in index order; the inverse
    temperature moves from ``beta_start`` to ``beta_end`` across sweeps. The run
    reports the lowest energy seen, not the last one.

    After ``solve``: ``best_spins_``, ``last_spins_`` and ``energy_trace_``
    (best energy after each sweep).
    """

    name = Solver.SA
    # uniform draws are generated in blocks of at most this many numbers
    _block = 1 << 20

    def __init__(self, beta_start=0.1, beta_end=5.0, schedule="geometric"):
        self.beta_start = beta_start
        self.beta_end = beta_end
        self.schedule = schedule

    def _check_params(self):
        b0 = check_positive(self.beta_start, "beta_start")
        b1 = float(self.beta_end)
        if not b0 < b1:
            raise InvalidArgumentError(f"need 0 < beta_start < beta_end, got {b0}, {b1}")
        return b0, b1

    def solve(self, p, t, seed):
        b0, b1 = self._check_params()
        sweeps = check_positive_int(t, "sweeps")
        seed = check_seed(seed)
        t0 = time.perf_counter_ns()
        rng = np.random.default_rng(seed)
        betas = beta_schedule(b0, b1, sweeps, self.schedule)
        J = p.coupling_matrix
        s = rng.choice(np.array([-1.0, 1.0]), size=p.n)
        local = J @ s
        e = 0.5 * float(s @ local) + float(p.h @ s)
        best_e, best_s = e, s.copy()
        trace = np.empty(sweeps)
        chunk = max(1, self._block // p.n)
        for start in range(0, sweeps, chunk):
            b = betas[start : start + chunk]
            u = rng.random((b.shape[0], p.n))
            e, best_e = _metropolis_block(J, p.h, s, local, b, u, e, best_e, best_s, trace, start)
        best_spins = best_s.astype(np.int8)
        wall = time.perf_counter_ns() - t0
        self.best_spins_ = best_spins
        self.last_spins_ = s.astype(np.int8)
        self.energy_trace_ = trace
        # running sums drift for real couplings; report the exact energy
        return _elapsed_record(self.name, p, sweeps, seed, energy(p, best_spins), best_spins, wall)

    def ops_per_run(self, n, t):
        """Spin-coupling operations per run: ``n`` flips of cost ``n`` per sweep."""
        return float(t) * n * n


def simulated_annealing(p, sweeps, seed, beta_start=0.1, beta_end=5.0, shape="geometric"):
    return SimulatedAnnealing(beta_start, beta_end, shape).solve(p, sweeps, seed)


# --- noisy mean-field annealing --------------------------------------------


class NoisyMeanFieldAnnealing(BaseEstimator):
    """Mean-field emulation of a coherent Ising machine.

    Continuous amplitudes ``v`` in [-1, 1] start near zero. Each step computes
    the normalized mean field ``phi = -(J v + h) / rms(J)`` and updates
    ``v <- (1 - alpha) v + alpha tanh(g_k phi) + N(0, noise_sigma)`` followed by
    clipping, with the gain ``g_k`` ramped linearly from ``gain_start`` to
    ``gain_end``. The rounded configuration ``sign(v)`` (``sign(0) = +1``) is
    scored every step and the best energy is reported.
    """

    name = Solver.NMFA

    def __init__(self, alpha=0.15, noise_sigma=0.3, gain_start=0.0, gain_end=2.0, init_scale=0.01):
        self.alpha = alpha
        self.noise_sigma = noise_sigma
        self.gain_start = gain_start
        self.gain_end = gain_end
        self.init_scale = init_scale

    def _check_params(self):
        alpha = check_open_probability(self.alpha, "alpha")
        sigma = float(self.noise_sigma)
        if not sigma >= 0:
            raise InvalidArgumentError(f"noise_sigma must be >= 0, got {sigma}")
        return alpha, sigma

    def solve(self, p, t, seed):
        alpha, sigma = self._check_params()
        return self._run(p, check_positive_int(t, "steps"), check_seed(seed), alpha, sigma)

    def _run(self, p, steps, seed, alpha, sigma):
        t0 = time.perf_counter_ns()
        rng = np.random.default_rng(seed)
        J, h = p.coupling_matrix, p.h
        rms = float(np.sqrt(np.mean(p.weights**2))) if p.n_couplings else 1.0
        gains = np.linspace(self.gain_start, self.gain_end, steps)
        v = rng.uniform(-self.init_scale, self.init_scale, size=p.n)
        noise = rng.standard_normal((steps, p.n)) * sigma
        best_e, best_s = np.inf, None
        trace = np.empty(steps)
        amplitudes_ok = True
        for k in range(steps):
            phi = -(J @ v + h) / rms
            v = (1.0 - alpha) * v + alpha * np.tanh(gains[k] * phi) + noise[k]
            np.clip(v, -1.0, 1.0, out=v)
            amplitudes_ok &= bool(np.all(np.isfinite(v)))
            s = np.where(v >= 0, 1.0, -1.0)
            e = 0.5 * float(s @ (J @ s)) + float(h @ s)
            if e < best_e:
                best_e, best_s = e, s
            trace[k] = best_e
        best_spins = best_s.astype(np.int8)
        wall = time.perf_counter_ns() - t0
        self.amplitudes_ = v
        self.amplitudes_finite_ = amplitudes_ok
        self.best_spins_ = best_spins
        self.energy_trace_ = trace
        return _elapsed_record(self.name, p, steps, seed, energy(p, best_spins), best_spins, wall)

    def ops_per_run(self, n, t):
        """Two dense mat-vecs per step (mean field and energy)."""
        return float(t) * 2 * n * n


def nmfa_cim(p, steps, seed, alpha=0.15, noise_sigma=0.3, gain_start=0.0, gain_end=2.0):
    return NoisyMeanFieldAnnealing(alpha, noise_sigma, gain_start, gain_end).solve(p, steps, seed)


SOLVER_TYPES = {Solver.SA: SimulatedAnnealing, Solver.NMFA: NoisyMeanFieldAnnealing}


def make_solver(name, **params):
    return SOLVER_TYPES[Solver(name)](**params)


# --- sweep plan and runner --------------------------------------------------


@dataclass(frozen=True)
class SweepPlan:
    """Full factorial sweep over solvers x classes x N x instances x t x runs.

    ``solvers`` holds estimator instances (``SimulatedAnnealing`` etc.).
    ``batches`` > 1 assigns runs of one (instance, t) cell to batches
    round-robin, which the best-batch analysis consumes.
    """

    solvers: tuple
    n_grid: tuple
    t_grid: tuple
    instances_per_n: int = 1
    runs_per_instance: int = 1
    batches: int = 1
    master_seed: int = 0
    problem_classes: tuple = (ProblemClass.SK,)
    density: float = 0.5
    coupling_dist: CouplingDist = CouplingDist.GAUSSIAN

    def __post_init__(self):
        if not self.solvers:
            raise InvalidArgumentError("plan needs at least one solver")
        names = [s.name for s in self.solvers]
        if len(set(names)) != len(names):
            raise InvalidArgumentError(f"duplicate solvers in plan: {names}")
        check_strictly_ascending(self.n_grid, "n_grid")
        check_strictly_ascending(self.t_grid, "t_grid")
        for n in self.n_grid:
            if check_positive_int(n, "n") < 2:
                raise InvalidArgumentError("every N must be >= 2")
        for t in self.t_grid:
            if not (t > 0 and float(t).is_integer()):
                raise InvalidArgumentError(f"effort values must be positive integers for SA/NMFA, got {t}")
        check_positive_int(self.instances_per_n, "instances_per_n")
        check_positive_int(self.runs_per_instance, "runs_per_instance")
        check_positive_int(self.batches, "batches")
        if self.batches > 1 and self.runs_per_instance % self.batches:
            raise InvalidArgumentError(
                f"runs_per_instance={self.runs_per_instance} is not divisible by batches={self.batches}"
            )
        check_seed(self.master_seed)
        if not self.problem_classes:
            raise InvalidArgumentError("plan needs at least one problem class")
        if not 0 < self.density <= 1:
            raise InvalidArgumentError(f"density must lie in (0, 1], got {self.density}")

    @property
    def n_cells(self):
        return (
            len(self.solvers)
            * len(self.problem_classes)
            * len(self.n_grid)
            * self.instances_per_n
            * len(self.t_grid)
            * self.runs_per_instance
        )


# stream tags keep instance seeds and run seeds from colliding
_INSTANCE_STREAM = 0
_RUN_STREAM = 1


def plan_instances(plan):
    """Generate every instance in the plan, keyed by (class index, N index, instance index).

    Instances depend only on the master seed and those indices, so every solver
    sees the same problems.
    """
    out = {}
    for c, cls in enumerate(plan.problem_classes):
        cls = ProblemClass(cls)
        for a, n in enumerate(plan.n_grid):
            for k in range(plan.instances_per_n):
                seed = derive_seed(plan.master_seed, _INSTANCE_STREAM, c, a, k)
                if cls is ProblemClass.SK:
                    out[c, a, k] = gen_sk(n, seed, plan.coupling_dist)
                else:
                    out[c, a, k] = gen_maxcut(n, plan.density, seed)
    return out


def resolve_threads(threads=None):
    if threads is None:
        env = os.environ.get("ANNEALBENCH_THREADS")
        threads = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(threads))


def run_sweep(plan, instances=None, threads=None):
    """Execute every cell of ``plan`` and return a canonically ordered RunLog.

    Seeds come from ``derive_seed(master, 1, class, solver, N, instance, t,
    run)`` so the log (ignoring ``wall_ns``) depends only on the plan, whatever
    the thread count. ``batch_id = run index mod batches``. If the sweep is
    interrupted or runs out of memory, the records finished so far are returned
    with ``truncated`` set.
    """
    if instances is None:
        instances = plan_instances(plan)
    tasks = []
    for si, solver in enumerate(plan.solvers):
        for c, _ in enumerate(plan.problem_classes):
            for a, _ in enumerate(plan.n_grid):
                for k in range(plan.instances_per_n):
                    for b, t in enumerate(plan.t_grid):
                        for r in range(plan.runs_per_instance):
                            key = (si, c, a, k, b, r)
                            seed = derive_seed(plan.master_seed, _RUN_STREAM, c, si, a, k, b, r)
                            tasks.append((key, solver, instances[c, a, k], int(t), seed, r % plan.batches))

    def execute(task):
        key, solver, p, t, seed, batch = task
        return key, replace(solver.solve(p, t, seed), batch_id=batch)

    done = {}
    truncated, reason = False, ""
    n_threads = resolve_threads(threads)
    try:
        if n_threads == 1:
            for task in tasks:
                key, rec = execute(task)
                done[key] = rec
        else:
            # estimators keep per-call attributes, so every worker gets clones
            def execute_cloned(task):
                return execute((task[0], _clone(task[1])) + task[2:])

            with ThreadPoolExecutor(max_workers=n_threads) as pool:
                for key, rec in pool.map(execute_cloned, tasks):
                    done[key] = rec
    except (MemoryError, KeyboardInterrupt) as exc:
        truncated, reason = True, type(exc).__name__
        logger.error("sweep truncated after %d of %d runs: %s", len(done), len(tasks), reason)
    records = [replace(done[key], run_id=i) for i, key in enumerate(sorted(done))]
    return RunLog(records, truncated=truncated, reason=reason)


def _clone(est):
    return type(est)(**est.get_params())


# --- run log CSV ------------------------------------------------------------

RUN_LOG_COLUMNS = (
    "run_id",
    "solver",
    "problem_class",
    "n",
    "instance_seed",
    "run_seed",
    "t_effort",
    "batch_id",
    "final_energy",
    "ground_energy",
    "ground_exact",
    "success",
    "wall_ns",
)
TRUNCATION_MARKER = "#truncated"


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, enum.Enum):
        return x.value
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_run_log(path, records, truncated=None, reason=None):
    if truncated is None:
        truncated = getattr(records, "truncated", False)
        reason = getattr(records, "reason", "")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RUN_LOG_COLUMNS)
        for rec in records:
            w.writerow([_fmt(getattr(rec, c)) for c in RUN_LOG_COLUMNS])
        if truncated:
            w.writerow([TRUNCATION_MARKER, reason or "unknown"])


def _parse_bool(tok):
    if tok == "":
        return None
    if tok in ("true", "false"):
        return tok == "true"
    raise ValueError(f"expected true/false, got {tok!r}")


def _parse_opt_float(tok):
    return None if tok == "" else float(tok)


_PARSERS = {
    "run_id": int,
    "solver": Solver,
    "problem_class": ProblemClass,
    "n": int,
    "instance_seed": int,
    "run_seed": int,
    "t_effort": float,
    "batch_id": int,
    "final_energy": float,
    "ground_energy": _parse_opt_float,
    "ground_exact": _parse_bool,
    "success": _parse_bool,
    "wall_ns": int,
}


def read_run_log(path):
    """Parse a run-log CSV; malformed rows raise DataError with the line number."""
    records, truncated, reason = [], False, ""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != RUN_LOG_COLUMNS:
            raise DataError(f"run log header must be {','.join(RUN_LOG_COLUMNS)}", path, 1)
        for row in reader:
            lineno = reader.line_num
            if row and row[0] == TRUNCATION_MARKER:
                truncated, reason = True, row[1] if len(row) > 1 else ""
                continue
            if not row:
                continue
            if len(row) != len(RUN_LOG_COLUMNS):
                raise DataError(f"expected {len(RUN_LOG_COLUMNS)} columns, got {len(row)}", path, lineno)
            try:
                kw = {c: _PARSERS[c](tok) for c, tok in zip(RUN_LOG_COLUMNS, row)}
            except ValueError as exc:
                raise DataError(str(exc), path, lineno) from None
            records.append(RunRecord(**kw))
    return RunLog(records, truncated=truncated, reason=reason)


