"""Small argument checks used across the package (sklearn ``check_*`` style)."""
import math

import numpy as np

from .exceptions import InvalidArgumentError


def check_positive_int(value, name, minimum=1):
    if isinstance(value, (bool, np.bool_)) or not isinstance(value, (int, np.integer)):
        raise InvalidArgumentError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise InvalidArgumentError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_positive(value, name):
    value = float(value)
    if not (value > 0) or math.isnan(value):
        raise InvalidArgumentError(f"{name} must be > 0, got {value}")
    return value


def check_open_probability(value, name):
    """Require ``value`` in the open interval (0, 1)."""
    value = float(value)
    if not 0.0 < value < 1.0:
        raise InvalidArgumentError(f"{name} must lie in (0, 1), got {value}")
    return value


def check_seed(seed):
    seed = check_positive_int(seed, "seed", minimum=0)
    if seed >= 2**64:
        raise InvalidArgumentError(f"seed must fit in 64 bits, got {seed}")
    return seed


def check_strictly_ascending(values, name):
    values = tuple(values)
    if not values:
        raise InvalidArgumentError(f"{name} must be non-empty")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise InvalidArgumentError(f"{name} must be strictly ascending, got {values}")
    return values


def check_curve(curve, name="curve"):
    """Turn a mapping N -> value into two sorted float arrays."""
    if not curve:
        raise InvalidArgumentError(f"{name} is empty")
    ns = np.array(sorted(curve), dtype=float)
    vals = np.array([curve[k] for k in sorted(curve)], dtype=float)
    return ns, vals
