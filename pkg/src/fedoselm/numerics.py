"""Dense float64 matrix helpers and SPD solvers.

Matrices are plain 2-D ``numpy.ndarray`` objects of dtype float64 in C
(row-major) order. Solvers go through a Cholesky factorization (LAPACK
``potrf``/``potrs``/``potri``); an explicit inverse is only formed by
:func:`inverse_spd`, and only because OS-ELM needs ``P = U^-1`` as state.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import lapack

from .errors import DimensionError, NotSymmetricError, SingularMatrixError

#: Diagonal loading callers may opt into when U can be rank deficient.
DEFAULT_RIDGE_FLOOR = 1e-8

#: Relative asymmetry accepted by the SPD routines.
SYMMETRY_RTOL = 1e-9


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce ``a`` to a C-contiguous float64 2-D array.

    A 1-D input is read as a single row.
    """
    m = np.asarray(a, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {m.shape}")
    return np.ascontiguousarray(m)


def ensure_finite(a: np.ndarray, name: str = "result") -> np.ndarray:
    if not np.all(np.isfinite(a)):
        raise FloatingPointError(f"{name} contains NaN or Inf")
    return a


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(
            f"cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}"
        )
    return ensure_finite(a @ b, "matmul")


def symmetrize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def is_symmetric(a: np.ndarray, rtol: float = SYMMETRY_RTOL) -> bool:
    scale = np.max(np.abs(a)) if a.size else 0.0
    return bool(np.max(np.abs(a - a.T), initial=0.0) <= rtol * max(scale, np.finfo(float).tiny))


def _check_square_symmetric(u: np.ndarray) -> None:
    if u.shape[0] != u.shape[1]:
        raise DimensionError(f"expected a square matrix, got {u.shape[0]}x{u.shape[1]}")
    if not is_symmetric(u):
        raise NotSymmetricError(
            f"matrix is not symmetric within relative tolerance {SYMMETRY_RTOL:g}"
        )


def cholesky(u, ridge: float = 0.0) -> np.ndarray:
    """Upper Cholesky factor R with ``R.T @ R == u + ridge * I``.

    Raises :class:`SingularMatrixError` carrying the failing pivot when the
    matrix is not positive definite or a pivot falls below the relative
    floor ``dim * eps * max(diag)``.
    """
    u = as_matrix(u, "u")
    _check_square_symmetric(u)
    dim = u.shape[0]
    if ridge:
        u = u + ridge * np.eye(dim)
    r, info = lapack.dpotrf(u, lower=0, clean=1)
    if info > 0:
        raise SingularMatrixError(
            f"matrix is not positive definite: pivot {info - 1} of {dim} failed; "
            "add a ridge term or supply more samples",
            pivot=info - 1,
        )
    if info < 0:  # pragma: no cover - argument error inside LAPACK
        raise ValueError(f"dpotrf argument {-info} invalid")
    pivots = np.diag(r) ** 2
    floor = dim * np.finfo(np.float64).eps * max(float(np.max(np.diag(u))), 0.0)
    bad = np.flatnonzero(pivots <= floor)
    if bad.size:
        raise SingularMatrixError(
            f"matrix is numerically singular: pivot {bad[0]} = {pivots[bad[0]]:.3e} "
            f"<= floor {floor:.3e}; add a ridge term or supply more samples",
            pivot=int(bad[0]),
        )
    return r


def spd_solve(u, rhs, ridge: float = 0.0) -> np.ndarray:
    """Solve ``(u + ridge*I) X = rhs`` for symmetric positive definite ``u``."""
    u = as_matrix(u, "u")
    rhs = as_matrix(rhs, "rhs")
    if rhs.shape[0] != u.shape[0]:
        raise DimensionError(
            f"rhs has {rhs.shape[0]} rows but u is {u.shape[0]}x{u.shape[1]}"
        )
    r = cholesky(u, ridge)
    x, info = lapack.dpotrs(r, rhs, lower=0)
    if info != 0:  # pragma: no cover
        raise ValueError(f"dpotrs failed with info={info}")
    return ensure_finite(np.ascontiguousarray(x), "spd_solve")


def inverse_spd(u, ridge: float = 0.0) -> np.ndarray:
    """Inverse of an SPD matrix, returned exactly symmetric."""
    u = as_matrix(u, "u")
    r = cholesky(u, ridge)
    inv, info = lapack.dpotri(r, lower=0)
    if info != 0:  # pragma: no cover
        raise SingularMatrixError(f"dpotri failed with info={info}", pivot=info - 1)
    upper = np.triu(inv)
    full = upper + np.triu(upper, 1).T
    return ensure_finite(np.ascontiguousarray(full), "inverse_spd")
