"""Input validation helpers for dense matrices and weight vectors."""

import numpy as np

from ._errors import InvalidArgumentError


def as_matrix(A, name="A"):
    """Return ``A`` as a finite 2-D float64 array."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise InvalidArgumentError(f"{name} must be 2-D, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidArgumentError(f"{name} contains non-finite entries")
    return A


def check_square(A, name="A"):
    A = as_matrix(A, name)
    if A.shape[0] != A.shape[1]:
        raise InvalidArgumentError(f"{name} must be square, got shape {A.shape}")
    return A


def check_symmetric(A, tol=1e-10, name="A"):
    A = check_square(A, name)
    scale = max(1.0, float(np.max(np.abs(A)))) if A.size else 1.0
    if A.size and np.max(np.abs(A - A.T)) > tol * scale:
        raise InvalidArgumentError(f"{name} is not symmetric within {tol:g}")
    return A


def check_weights(m, size=None, name="m"):
    """Validate a nonnegative weight vector summing to one."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 1:
        raise InvalidArgumentError(f"{name} must be 1-D")
    if size is not None and m.shape[0] != size:
        raise InvalidArgumentError(f"{name} has {m.shape[0]} weights, expected {size}")
    if np.any(m < 0) or not np.all(np.isfinite(m)):
        raise InvalidArgumentError(f"{name} must be finite and nonnegative")
    if abs(m.sum() - 1.0) > 1e-9:
        raise InvalidArgumentError(f"{name} must sum to 1, sums to {m.sum():.12g}")
    return m


def check_positive(value, name, strict=True):
    if not np.isfinite(value) or (value <= 0 if strict else value < 0):
        bound = "> 0" if strict else ">= 0"
        raise InvalidArgumentError(f"{name} must be {bound}, got {value!r}")
    return value
