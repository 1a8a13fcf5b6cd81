"""Small dense linear algebra.

Everything here works on plain float64 ``numpy`` arrays. The eigensolver is a
cyclic Jacobi method, which is unconditionally accurate for symmetric input
and fast enough for the server/client counts used in simulation (tens).
"""

from dataclasses import dataclass

import numpy as np

from ._errors import InvalidArgumentError
from ._validation import as_matrix, check_square, check_symmetric

__all__ = [
    "EigenDecomposition",
    "sym_eigen",
    "matrix_power",
    "operator_norm",
    "weighted_col_norm_sq",
]


@dataclass(frozen=True)
class EigenDecomposition:
    """Eigenvalues sorted descending; ``eigenvectors[:, i]`` pairs with ``eigenvalues[i]``."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self):
        Q = self.eigenvectors
        return (Q * self.eigenvalues) @ Q.T


def _rotate(a, v, p, q):
    apq = a[p, q]
    with np.errstate(over="ignore"):  # inf theta gives t = 0, a plain annihilation
        theta = (a[q, q] - a[p, p]) / (2.0 * apq)
    if abs(theta) > 1e150:  # theta^2 would overflow; t ~ 1/(2 theta)
        t = 0.5 / theta
    else:
        t = 1.0 / (abs(theta) + np.sqrt(theta * theta + 1.0))
        if theta < 0:
            t = -t
    c = 1.0 / np.sqrt(t * t + 1.0)
    s = t * c

    col_p = a[:, p].copy()
    col_q = a[:, q].copy()
    a[:, p] = c * col_p - s * col_q
    a[:, q] = s * col_p + c * col_q
    row_p = a[p, :].copy()
    row_q = a[q, :].copy()
    a[p, :] = c * row_p - s * row_q
    a[q, :] = s * row_p + c * row_q
    a[p, q] = a[q, p] = 0.0

    vp = v[:, p].copy()
    vq = v[:, q].copy()
    v[:, p] = c * vp - s * vq
    v[:, q] = s * vp + c * vq


def sym_eigen(A, tol=1e-13, max_sweeps=100):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Parameters
    ----------
    A : array_like, shape (n, n)
        Symmetric within 1e-10 (relative to its largest entry).
    tol : float
        Sweeps stop once the off-diagonal Frobenius mass drops below
        ``tol * ||A||_F``.
    max_sweeps : int
        Safety cap; convergence is quadratic so a handful of sweeps suffice.

    Returns
    -------
    EigenDecomposition
    """
    A = check_symmetric(A)
    n = A.shape[0]
    a = 0.5 * (A + A.T)
    v = np.eye(n)
    scale = np.linalg.norm(a)
    if n == 0 or scale == 0.0:
        return EigenDecomposition(np.zeros(n), v)

    for _ in range(max_sweeps):
        off = np.linalg.norm(a[~np.eye(n, dtype=bool)])
        if off < tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if a[p, q] != 0.0:
                    _rotate(a, v, p, q)

    w = np.diag(a).copy()
    order = np.argsort(-w, kind="stable")
    return EigenDecomposition(w[order], v[:, order])


def matrix_power(A, p):
    """``A`` raised to a nonnegative integer power by repeated multiplication."""
    A = check_square(A)
    if int(p) != p or p < 0:
        raise InvalidArgumentError(f"power must be a nonnegative integer, got {p!r}")
    out = np.eye(A.shape[0])
    for _ in range(int(p)):
        out = out @ A
    return out


def operator_norm(A):
    """Spectral norm ``sqrt(lambda_max(A^T A))``."""
    A = as_matrix(A)
    if A.size == 0:
        return 0.0
    gram = A.T @ A
    lam = sym_eigen(0.5 * (gram + gram.T)).eigenvalues[0]
    return float(np.sqrt(max(lam, 0.0)))


def weighted_col_norm_sq(X, m):
    """Column-weighted squared Frobenius norm ``sum_j m_j * ||X[:, j]||^2``.

    With ``X = W (I - M)`` and ``m`` the client data fractions this is the
    consensus deviation of the client models around their weighted mean.
    """
    X = as_matrix(X, "X")
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 1 or m.shape[0] != X.shape[1]:
        raise InvalidArgumentError(
            f"got {m.shape[0] if m.ndim == 1 else m.shape} weights for {X.shape[1]} columns"
        )
    if np.any(m < 0) or abs(m.sum() - 1.0) > 1e-9:
        raise InvalidArgumentError("weights must be nonnegative and sum to 1")
    return float(np.sum(m * np.sum(X * X, axis=0)))
