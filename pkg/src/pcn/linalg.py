"""Dense double-precision kernels used by the analytic oracles.

All functions operate on plain ``numpy.ndarray`` values (matrices are 2-D,
row-major; vectors are 1-D) and are pure: inputs are never mutated, so they
are safe to call from any number of concurrent workers.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .exceptions import DefinitenessError

__all__ = [
    "as_matrix",
    "as_vector",
    "pseudoinverse",
    "solve_spd",
    "matrix_exponential",
    "min_eigenvalue_symmetric",
]

# Relative tolerance used when checking that a matrix is symmetric.
SYMMETRY_TOL = 1e-10


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce ``a`` to a 2-D float64 array, rejecting NaN/Inf entries."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    return m


def as_vector(v, name: str = "vector") -> np.ndarray:
    """Coerce ``v`` to a 1-D float64 array, rejecting NaN/Inf entries."""
    x = np.asarray(v, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite entries")
    return x


def _check_symmetric(m: np.ndarray, name: str) -> None:
    scale = max(1.0, float(np.max(np.abs(m))) if m.size else 1.0)
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be square, got shape {m.shape}")
    if m.size and float(np.max(np.abs(m - m.T))) > SYMMETRY_TOL * scale:
        raise ValueError(f"{name} is not symmetric within {SYMMETRY_TOL}")


def pseudoinverse(m, tol: float = 1e-12) -> np.ndarray:
    """Moore-Penrose pseudoinverse via SVD.

    Singular values below ``tol`` times the largest singular value are
    treated as exactly zero.  The result satisfies the four Penrose
    conditions to numerical precision.
    """
    m = as_matrix(m)
    if tol < 0:
        raise ValueError("tol must be >= 0")
    if m.shape[0] == 0 or m.shape[1] == 0:
        raise ValueError(f"cannot pseudoinvert an empty matrix of shape {m.shape}")
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    cutoff = tol * (s[0] if s.size else 0.0)
    inv_s = np.where(s > cutoff, np.divide(1.0, s, out=np.zeros_like(s), where=s > 0), 0.0)
    return (vt.T * inv_s) @ u.T


def solve_spd(a, b) -> np.ndarray:
    """Solve ``a x = b`` for symmetric positive-definite ``a`` via Cholesky.

    ``b`` may be a vector or a matrix of stacked right-hand-side columns.
    Raises :class:`DefinitenessError` if the factorization fails; no silent
    regularization is applied.
    """
    a = as_matrix(a, "a")
    _check_symmetric(a, "a")
    b = np.asarray(b, dtype=np.float64)
    try:
        c, low = scipy.linalg.cho_factor(a, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise DefinitenessError(f"matrix is not positive-definite: {exc}") from exc
    return scipy.linalg.cho_solve((c, low), b, check_finite=False)


def matrix_exponential(m, t: float = 1.0) -> np.ndarray:
    """Matrix exponential ``exp(m * t)`` (scaling-and-squaring Pade)."""
    m = as_matrix(m)
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"matrix exponential needs a square matrix, got {m.shape}")
    if m.shape[0] == 0:
        return np.zeros((0, 0))
    return scipy.linalg.expm(m * float(t))


def min_eigenvalue_symmetric(m) -> float:
    """Smallest eigenvalue of a symmetric matrix."""
    m = as_matrix(m)
    _check_symmetric(m, "matrix")
    return float(np.linalg.eigvalsh(m)[0])
