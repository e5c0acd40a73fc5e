"""Input validation helpers shared by the estimators."""

import numbers

import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import DimensionMismatchError, NotUnitError


def check_positive_int(value, name, minimum=1):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise TypeError(f"{name} must be an integer, got {type(value).__name__}")
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_choice(value, name, choices):
    if value not in choices:
        raise ValueError(f"{name} must be one of {tuple(choices)}, got {value!r}")
    return value


def check_vectors(X, n_features=None):
    """2-d float64, C-contiguous, finite. A 1-d input is one row."""
    X = np.asarray(X, dtype=np.float64) if not hasattr(X, "tocsr") else X
    if getattr(X, "ndim", 2) == 1:
        X = X.reshape(1, -1)
    X = check_array(X, dtype=np.float64, order="C", ensure_min_samples=0)
    if n_features is not None and X.shape[0] and X.shape[1] != n_features:
        raise DimensionMismatchError(
            f"expected {n_features} features, got {X.shape[1]}"
        )
    return X


def check_unit_rows(X, tol):
    norms = np.linalg.norm(X, axis=1)
    bad = np.flatnonzero(np.abs(norms - 1.0) > tol)
    if bad.size:
        i = int(bad[0])
        raise NotUnitError(f"row {i} has norm {norms[i]!r}; unit vectors required")


def seed_to_int(random_state):
    """Map an int / None / Generator to a 63-bit integer seed."""
    if random_state is None:
        return int(np.random.SeedSequence().generate_state(1, np.uint64)[0] >> 1)
    if isinstance(random_state, np.random.Generator):
        return int(random_state.integers(0, 2**63 - 1))
    if isinstance(random_state, numbers.Integral) and not isinstance(random_state, bool):
        return int(random_state)
    raise TypeError("random_state must be None, an int or a numpy Generator")
