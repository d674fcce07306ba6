"""Small dense symmetric linear-algebra kernels.

Thin wrappers around LAPACK (through numpy/scipy) that add the error
semantics the rest of the package relies on: an explicit failure signal
for non-positive-definite input instead of a library-specific exception.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import ContractError, NumericalError


def _check_symmetric(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ContractError(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ContractError("matrix entries must be finite")
    scale = np.max(np.abs(m)) if m.size else 0.0
    if not np.allclose(m, m.T, atol=1e-10 * max(scale, 1.0)):
        raise ContractError("matrix is not symmetric")
    return m


def cholesky(m: np.ndarray) -> np.ndarray:
    """Lower-triangular L with L @ L.T = m; NumericalError if m is not PD."""
    m = _check_symmetric(m)
    try:
        return np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"Cholesky factorization failed: {exc}") from exc


def solve_spd(m: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve m @ x = b for symmetric positive-definite m."""
    low = cholesky(m)
    b = np.asarray(b, dtype=float)
    return scipy.linalg.cho_solve((low, True), b)


def symmetric_eigen_min(m: np.ndarray) -> float:
    """Smallest eigenvalue of a symmetric matrix."""
    m = _check_symmetric(m)
    return float(np.linalg.eigvalsh(m)[0])
