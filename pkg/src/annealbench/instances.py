"""Ising instance generation, energy evaluation and the exhaustive ground-state oracle.

Energies follow ``H(s) = sum_{i<j} J_ij s_i s_j + sum_i h_i s_i`` with spins in
{-1, +1}. Couplings are stored once per canonical pair ``(i, j)`` with ``i < j``.
"""
import enum
import logging
from dataclasses import dataclass, field
from functools import cached_property

import numba
import numpy as np

from ._validation import check_positive_int, check_seed
from .exceptions import (
    ConsistencyError,
    DataError,
    InvalidArgumentError,
    SizeExceededError,
)

logger = logging.getLogger(__name__)

DEFAULT_BRUTE_FORCE_CAP = 24
GAUSSIAN_REL_TOL = 1e-9


class ProblemClass(str, enum.Enum):
    SK = "SK"
    MAXCUT = "MAXCUT"


class CouplingDist(str, enum.Enum):
    GAUSSIAN = "GAUSSIAN"
    PM1 = "PM1"


@dataclass(frozen=True, eq=False)
class IsingProblem:
    """One Ising instance.

    ``couplings`` maps canonical pairs ``(i, j)``, ``i < j``, to nonzero reals.
    ``sub_seed`` records how many regeneration attempts a Max-Cut draw needed;
    it is bookkeeping only and does not take part in equality.
    """

    n: int
    couplings: dict
    fields: tuple
    problem_class: ProblemClass
    instance_seed: int
    sub_seed: int = field(default=0, compare=False)

    def __post_init__(self):
        check_positive_int(self.n, "n")
        check_seed(self.instance_seed)
        if len(self.fields) != self.n:
            raise InvalidArgumentError(f"expected {self.n} fields, got {len(self.fields)}")
        for (i, j), w in self.couplings.items():
            if not (0 <= i < j < self.n):
                raise InvalidArgumentError(f"coupling ({i}, {j}) is not a canonical pair for n={self.n}")
            if w == 0:
                raise InvalidArgumentError(f"coupling ({i}, {j}) is zero; store only nonzero couplings")
        if self.problem_class is ProblemClass.MAXCUT:
            if any(w != 1 for w in self.couplings.values()) or any(f != 0 for f in self.fields):
                raise InvalidArgumentError("MAXCUT instances need all J = +1 and all h = 0")

    def __eq__(self, other):
        if not isinstance(other, IsingProblem):
            return NotImplemented
        return (
            self.n == other.n
            and self.problem_class == other.problem_class
            and self.instance_seed == other.instance_seed
            and tuple(self.fields) == tuple(other.fields)
            and sorted(self.couplings.items()) == sorted(other.couplings.items())
        )

    __hash__ = None

    @property
    def n_couplings(self):
        return len(self.couplings)

    @property
    def density(self):
        return self.n_couplings / (self.n * (self.n - 1) / 2) if self.n > 1 else 0.0

    @cached_property
    def pairs(self):
        """(m, 2) array of canonical pairs, lexicographically sorted."""
        keys = sorted(self.couplings)
        return np.array(keys, dtype=np.int64).reshape(-1, 2)

    @cached_property
    def weights(self):
        return np.array([self.couplings[tuple(p)] for p in self.pairs.tolist()], dtype=float)

    @cached_property
    def h(self):
        return np.asarray(self.fields, dtype=float)

    @cached_property
    def coupling_matrix(self):
        """Dense symmetric matrix with zero diagonal (each pair stored twice)."""
        J = np.zeros((self.n, self.n))
        if self.n_couplings:
            i, j = self.pairs[:, 0], self.pairs[:, 1]
            J[i, j] = self.weights
            J[j, i] = self.weights
        return J

    @property
    def integral(self):
        """True when every energy is an integer, so equality can be exact."""
        return all(float(w).is_integer() for w in self.couplings.values()) and all(
            float(f).is_integer() for f in self.fields
        )


@dataclass(frozen=True)
class GroundTruth:
    ground_energy: float
    degeneracy: int
    witness: np.ndarray = field(repr=False)
    exact: bool = True


def _pair_list(n):
    iu, ju = np.triu_indices(n, k=1)
    return list(zip(iu.tolist(), ju.tolist()))


def gen_sk(n, seed, coupling_dist=CouplingDist.GAUSSIAN):
    """Fully connected Sherrington-Kirkpatrick instance with zero fields.

    Couplings are i.i.d. standard normal (``GAUSSIAN``) or uniform +-1 (``PM1``),
    drawn in lexicographic pair order from ``numpy.random.default_rng(seed)``.
    """
    n = check_positive_int(n, "n")
    if n < 2:
        raise InvalidArgumentError(f"SK instances need n >= 2, got {n}")
    seed = check_seed(seed)
    coupling_dist = CouplingDist(coupling_dist)
    rng = np.random.default_rng(seed)
    m = n * (n - 1) // 2
    if coupling_dist is CouplingDist.GAUSSIAN:
        w = rng.standard_normal(m)
        # measure-zero event, but a zero would break the density invariant
        w[w == 0.0] = np.finfo(float).tiny
    else:
        w = rng.integers(0, 2, size=m) * 2.0 - 1.0
    couplings = {pair: float(x) for pair, x in zip(_pair_list(n), w)}
    return IsingProblem(n, couplings, (0.0,) * n, ProblemClass.SK, seed)


def gen_maxcut(n, density, seed):
    """Unweighted random graph as an antiferromagnetic Ising instance.

    Each pair is an edge independently with probability ``density``; edges get
    ``J = +1``. A draw with no edges is retried with ``default_rng([seed, k])``
    for k = 1, 2, ... and the attempt number is kept in ``sub_seed``.
    """
    n = check_positive_int(n, "n")
    if n < 2:
        raise InvalidArgumentError(f"Max-Cut instances need n >= 2, got {n}")
    density = float(density)
    if not 0.0 < density <= 1.0:
        raise InvalidArgumentError(f"density must lie in (0, 1], got {density}")
    seed = check_seed(seed)
    pairs = _pair_list(n)
    attempt = 0
    while True:
        rng = np.random.default_rng(seed if attempt == 0 else [seed, attempt])
        keep = rng.random(len(pairs)) < density
        if keep.any():
            break
        attempt += 1
        logger.info("max-cut draw n=%d seed=%d had no edges; retrying with sub-seed %d", n, seed, attempt)
    couplings = {p: 1.0 for p, k in zip(pairs, keep) if k}
    return IsingProblem(n, couplings, (0.0,) * n, ProblemClass.MAXCUT, seed, sub_seed=attempt)


def as_spins(p, s):
    """Validate a spin configuration against ``p`` and return it as an int8 array."""
    s = np.asarray(s)
    if s.ndim != 1 or s.shape[0] != p.n:
        raise InvalidArgumentError(f"spin configuration has shape {s.shape}, expected ({p.n},)")
    if not np.all((s == 1) | (s == -1)):
        raise InvalidArgumentError("spins must be -1 or +1")
    return s.astype(np.int8)


def energy(p, s):
    s = as_spins(p, s).astype(float)
    e = float(p.h @ s)
    if p.n_couplings:
        e += float(np.dot(p.weights, s[p.pairs[:, 0]] * s[p.pairs[:, 1]]))
    return e


def energies_equal(a, b, p=None, rel_tol=None):
    """Energy comparison: exact for integer-valued instances, relative otherwise."""
    if rel_tol is None:
        rel_tol = 0.0 if (p is not None and p.integral) else GAUSSIAN_REL_TOL
    return abs(a - b) <= rel_tol * max(abs(a), abs(b))


@numba.njit(cache=True, nogil=True)
def _gray_code_scan(J, h, tol):
    n = J.shape[0]
    s = -np.ones(n)
    local = J @ s
    e = 0.5 * (s @ local) + h @ s
    best = e
    count = 1
    best_index = 0
    for k in range(1, 1 << n):
        b = 0
        while not (k >> b) & 1:
            b += 1
        e -= 2.0 * s[b] * (local[b] + h[b])
        s[b] = -s[b]
        two_sb = 2.0 * s[b]
        for j in range(n):
            local[j] += two_sb * J[j, b]
        if e < best - tol:
            best = e
            count = 1
            best_index = k
        elif e <= best + tol:
            count += 1
            if e < best:
                best = e
                best_index = k
    return best, count, best_index


def brute_force_ground(p, cap=DEFAULT_BRUTE_FORCE_CAP):
    """Enumerate all 2**n configurations in Gray-code order.

    Returns the minimum energy, the number of configurations attaining it and
    one witness. Instances above ``cap`` spins are refused.
    """
    if p.n > cap:
        raise SizeExceededError(f"n={p.n} exceeds the brute-force cap of {cap}; use a best-found proxy")
    scale = float(np.abs(p.weights).sum() + np.abs(p.h).sum())
    tol = 0.0 if p.integral else GAUSSIAN_REL_TOL * max(scale, 1.0)
    _, count, idx = _gray_code_scan(p.coupling_matrix, p.h, tol)
    gray = idx ^ (idx >> 1)
    witness = np.where((gray >> np.arange(p.n)) & 1, 1, -1).astype(np.int8)
    return GroundTruth(energy(p, witness), int(count), witness, exact=True)


def cut_from_energy(p, e):
    """Cut size of the partition whose Ising energy is ``e``: ``(|E| - e) / 2``."""
    if p.problem_class is not ProblemClass.MAXCUT:
        raise InvalidArgumentError("cut_from_energy needs a MAXCUT instance")
    cut = (p.n_couplings - e) / 2
    if not float(cut).is_integer():
        raise ConsistencyError(f"energy {e} does not correspond to an integral cut on {p.n_couplings} edges")
    return int(cut)


# --- text serialization -----------------------------------------------------


def _fmt_real(x):
    x = float(x)
    if x.is_integer() and abs(x) < 2**53:
        return str(int(x))
    return repr(x)


def dumps(p):
    lines = [f"ising n={p.n} class={p.problem_class.value} seed={p.instance_seed}"]
    for i, j in sorted(p.couplings):
        lines.append(f"{i} {j} {_fmt_real(p.couplings[i, j])}")
    for i, f in enumerate(p.fields):
        if f != 0:
            lines.append(f"h {i} {_fmt_real(f)}")
    return "\n".join(lines) + "\n"


def loads(text, path=None):
    lines = text.splitlines()
    if not lines:
        raise DataError("empty instance file", path)
    head = lines[0].split()
    try:
        if head[0] != "ising":
            raise ValueError
        kv = dict(tok.split("=", 1) for tok in head[1:])
        n = int(kv["n"])
        cls = ProblemClass(kv["class"])
        seed = int(kv["seed"])
    except (ValueError, KeyError, IndexError):
        raise DataError(f"bad header {lines[0]!r}", path, 1) from None
    couplings = {}
    fields = [0.0] * n
    for lineno, line in enumerate(lines[1:], start=2):
        tok = line.split()
        if not tok:
            continue
        try:
            if tok[0] == "h":
                _, i, v = tok
                fields[int(i)] = float(v)
            else:
                i, j, v = tok
                couplings[int(i), int(j)] = float(v)
        except (ValueError, IndexError):
            raise DataError(f"bad line {line!r}", path, lineno) from None
    try:
        return IsingProblem(n, couplings, tuple(fields), cls, seed)
    except InvalidArgumentError as exc:
        raise DataError(str(exc), path) from None


def save(p, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(p))


def load(path):
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read(), path)


def instance_filename(p):
    return f"{p.problem_class.value.lower()}_n{p.n}_s{p.instance_seed}.ising"


__all__ = [
    "ProblemClass",
    "CouplingDist",
    "IsingProblem",
    "GroundTruth",
    "gen_sk",
    "gen_maxcut",
    "energy",
    "energies_equal",
    "brute_force_ground",
    "cut_from_energy",
    "dumps",
    "loads",
    "save",
    "load",
]
