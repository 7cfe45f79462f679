"""Experiment configuration: ``key = value`` lines, ``#`` comments, unknown keys rejected."""
from dataclasses import dataclass, fields

from .exceptions import AnnealBenchError, ConfigError
from .instances import DEFAULT_BRUTE_FORCE_CAP, CouplingDist, ProblemClass
from .metrics import DEFAULT_P_TARGET, DEFAULT_RESAMPLES
from .solvers import NoisyMeanFieldAnnealing, SimulatedAnnealing, Solver, SweepPlan


def _list(cast):
    def parse(text):
        items = [x.strip() for x in text.split(",") if x.strip()]
        return tuple(cast(x) for x in items)

    return parse


def _bool(text):
    low = text.lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ValueError(f"expected true/false, got {text!r}")


def _choice(*allowed):
    def parse(text):
        if text not in allowed:
            raise ValueError(f"expected one of {', '.join(allowed)}, got {text!r}")
        return text

    return parse


def _number(text):
    x = float(text)
    return int(x) if x.is_integer() else x


@dataclass
class ExperimentConfig:
    solvers: tuple = (Solver.SA, Solver.NMFA)
    problem_classes: tuple = (ProblemClass.SK,)
    n_grid: tuple = (8, 12, 16)
    t_grid: tuple = (10, 100, 1000)
    instances_per_n: int = 4
    runs_per_instance: int = 20
    batches: int = 4
    master_seed: int = 1
    density: float = 0.5
    coupling_dist: CouplingDist = CouplingDist.GAUSSIAN
    p_target: float = DEFAULT_P_TARGET
    bootstrap_resamples: int = DEFAULT_RESAMPLES
    brute_force_cap: int = DEFAULT_BRUTE_FORCE_CAP
    tolerance_mode: str = "auto"
    relative_tolerance: float = 1e-9
    batch_accounting: str = "ignore-selection-cost"
    integer_repetitions: bool = False
    time_basis: str = "wall"
    postproc_solver: Solver = Solver.NMFA
    output_dir: str = "annealbench-out"
    sa_beta_start: float = 0.1
    sa_beta_end: float = 5.0
    sa_schedule: str = "geometric"
    nmfa_alpha: float = 0.15
    nmfa_noise_sigma: float = 0.3
    nmfa_gain_start: float = 0.0
    nmfa_gain_end: float = 2.0

    _PARSERS = {
        "solvers": _list(Solver),
        "problem_classes": _list(ProblemClass),
        "n_grid": _list(int),
        "t_grid": _list(_number),
        "instances_per_n": int,
        "runs_per_instance": int,
        "batches": int,
        "master_seed": int,
        "density": float,
        "coupling_dist": CouplingDist,
        "p_target": float,
        "bootstrap_resamples": int,
        "brute_force_cap": int,
        "tolerance_mode": _choice("auto", "exact", "relative"),
        "relative_tolerance": float,
        "batch_accounting": _choice("ignore-selection-cost", "strict"),
        "integer_repetitions": _bool,
        "time_basis": _choice("wall", "ops"),
        "postproc_solver": Solver,
        "output_dir": str,
        "sa_beta_start": float,
        "sa_beta_end": float,
        "sa_schedule": _choice("geometric", "linear"),
        "nmfa_alpha": float,
        "nmfa_noise_sigma": float,
        "nmfa_gain_start": float,
        "nmfa_gain_end": float,
    }

    @classmethod
    def parse(cls, text, source="<config>"):
        values, seen = {}, {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
            key, value = (x.strip() for x in line.split("=", 1))
            if key not in cls._PARSERS:
                raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
            if key in seen:
                raise ConfigError(f"{source}:{lineno}: duplicate key {key!r} (first set on line {seen[key]})")
            try:
                values[key] = cls._PARSERS[key](value)
            except ValueError as exc:
                raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from None
            seen[key] = lineno
        cfg = cls(**values)
        cfg.to_plan()
        return cfg

    @classmethod
    def from_file(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.parse(text, str(path))

    def solver_estimators(self):
        est = {
            Solver.SA: SimulatedAnnealing(self.sa_beta_start, self.sa_beta_end, self.sa_schedule),
            Solver.NMFA: NoisyMeanFieldAnnealing(self.nmfa_alpha, self.nmfa_noise_sigma,
                                                 self.nmfa_gain_start, self.nmfa_gain_end),
        }
        return tuple(est[s] for s in self.solvers)

    def to_plan(self):
        try:
            for est in self.solver_estimators():
                est._check_params()
            if not 0 < self.p_target < 1:
                raise ConfigError(f"p_target must lie in (0, 1), got {self.p_target}")
            return SweepPlan(
                solvers=self.solver_estimators(),
                n_grid=self.n_grid,
                t_grid=self.t_grid,
                instances_per_n=self.instances_per_n,
                runs_per_instance=self.runs_per_instance,
                batches=self.batches,
                master_seed=self.master_seed,
                problem_classes=self.problem_classes,
                density=self.density,
                coupling_dist=self.coupling_dist,
            )
        except ConfigError:
            raise
        except AnnealBenchError as exc:
            raise ConfigError(f"invalid plan: {exc}") from None

    @property
    def tolerance(self):
        """Relative energy tolerance, or None to pick per instance."""
        if self.tolerance_mode == "exact":
            return 0.0
        if self.tolerance_mode == "relative":
            return self.relative_tolerance
        return None

    def dumps(self):
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ", ".join(getattr(x, "value", str(x)) for x in v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            else:
                v = getattr(v, "value", v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"
