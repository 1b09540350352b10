"""Dense float64 matrix kernel: validation, products, norms, rank-1 SVD.

Matrices are plain numpy arrays of shape (rows, cols) in float64, held
column-major (Fortran order) because every hot loop in the package walks
columns: fibers, code columns, dictionary atoms. Arrays are treated as
immutable once built; every operation returns a fresh array.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "CollapsedColumnError",
    "PowerIterationError",
    "Rank1Svd",
    "as_matrix",
    "matmul",
    "column_norms",
    "normalize_columns",
    "rank1_svd",
    "spectral_norm",
]

# Columns with norm below this are treated as collapsed atoms.
COLUMN_NORM_FLOOR = 1e-300

DEFAULT_SVD_TOL = 1e-12
DEFAULT_SVD_MAX_ITER = 10_000


class CollapsedColumnError(ValueError):
    """A column that must be normalizable has (near-)zero norm."""

    def __init__(self, index: int, norm: float, context: str = ""):
        self.index = index
        self.norm = norm
        where = f" in {context}" if context else ""
        super().__init__(
            f"Column {index}{where} has norm {norm:.3e} < {COLUMN_NORM_FLOOR:.0e}; "
            "cannot normalize a collapsed column"
        )


class PowerIterationError(RuntimeError):
    """Power iteration failed to reach the residual tolerance."""

    def __init__(self, iterations: int, residual: float, tol: float):
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            f"Power iteration did not converge in {iterations} iterations: "
            f"residual {residual:.3e} > tol {tol:.3e}"
        )


def as_matrix(values, rows: int | None = None, cols: int | None = None) -> np.ndarray:
    """Return values as a finite float64 2-D array in column-major order."""
    a = np.asfortranarray(values, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"Expected a 2-D matrix, got ndim={a.ndim}")
    if rows is not None and a.shape[0] != rows:
        raise ValueError(f"Expected {rows} rows, got {a.shape[0]}")
    if cols is not None and a.shape[1] != cols:
        raise ValueError(f"Expected {cols} cols, got {a.shape[1]}")
    if not np.all(np.isfinite(a)):
        raise ValueError("Matrix contains non-finite values")
    return a


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Return the dense product a @ b, checking shapes and finiteness."""
    ra, ca = a.shape
    rb, cb = b.shape
    if ca != rb:
        raise ValueError(f"Incompatible shapes for matmul: ({ra},{ca}) @ ({rb},{cb})")
    out = a @ b
    if not np.all(np.isfinite(out)):
        raise ValueError("matmul produced non-finite values (overflow)")
    return out


def column_norms(a: np.ndarray) -> np.ndarray:
    """Return the l2 norm of every column."""
    return np.sqrt(np.einsum("ij,ij->j", a, a))


def normalize_columns(a: np.ndarray, context: str = "") -> np.ndarray:
    """Return a copy of a with every column scaled to unit l2 norm."""
    norms = column_norms(a)
    bad = np.flatnonzero(norms < COLUMN_NORM_FLOOR)
    if bad.size:
        i = int(bad[0])
        raise CollapsedColumnError(i, float(norms[i]), context)
    return a / norms


@dataclass(frozen=True)
class Rank1Svd:
    """Principal singular triple: sigma1 >= 0, unit u1 (rows), unit v1 (cols)."""

    sigma1: float
    u1: np.ndarray
    v1: np.ndarray


def _fix_sign(u: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Convention: the largest-magnitude entry of u1 is nonnegative,
    # ties broken by lowest index (argmax returns the first maximum).
    idx = int(np.argmax(np.abs(u)))
    if u[idx] < 0.0:
        return -u, -v
    return u, v


def rank1_svd(
    m,
    tol: float = DEFAULT_SVD_TOL,
    max_iter: int = DEFAULT_SVD_MAX_ITER,
) -> Rank1Svd:
    """Return the principal singular triple of m by alternating power iteration.

    Start vector: v0 is the normalized vector of column l2 norms (the row
    norms of m^T). If an iterate m @ v cancels to rounding noise (the
    start can be orthogonal to v1 for sign-mixed rank-1 inputs, exactly
    or to within a few ulps), the start falls back to basis vectors of
    nonzero columns in index order. An all-zero matrix returns sigma1 = 0
    with u1 = e1, v1 = e1 by convention. Converged when
    ||m v - sigma u|| <= tol * max(1, sigma); the companion residual
    ||m^T u - sigma v|| is zero by construction of the final v update.
    """
    M = as_matrix(m)
    if tol <= 0.0:
        raise ValueError(f"tol must be > 0, got {tol}")
    if max_iter < 1:
        raise ValueError(f"max_iter must be >= 1, got {max_iter}")
    p, q = M.shape

    col = column_norms(M)
    total = float(np.linalg.norm(col))
    if total == 0.0:
        u = np.zeros(p)
        v = np.zeros(q)
        u[0] = 1.0
        v[0] = 1.0
        return Rank1Svd(0.0, u, v)

    v = col / total
    fallback = list(np.flatnonzero(col > 0.0))
    # Anything this far below ||M||_F is cancellation, not signal:
    # sigma1 >= total / sqrt(q) sits many orders above it.
    floor = 1e-13 * total

    def restart() -> np.ndarray | None:
        if not fallback:
            return None
        e = np.zeros(q)
        e[fallback.pop(0)] = 1.0
        return e

    sigma = 0.0
    residual = math.inf
    for _ in range(max_iter):
        w = M @ v
        nw = float(np.linalg.norm(w))
        if nw <= floor:
            nxt = restart()
            if nxt is None:
                raise PowerIterationError(max_iter, residual, tol)
            v = nxt
            continue
        u = w / nw
        z = M.T @ u
        nz = float(np.linalg.norm(z))
        if nz <= floor:
            nxt = restart()
            if nxt is None:
                raise PowerIterationError(max_iter, residual, tol)
            v = nxt
            continue
        v = z / nz
        sigma = nz
        residual = float(np.linalg.norm(M @ v - sigma * u))
        if residual <= tol * max(1.0, sigma):
            u, v = _fix_sign(u, v)
            return Rank1Svd(sigma, u, v)
    raise PowerIterationError(max_iter, residual, tol * max(1.0, sigma))


def spectral_norm(
    m,
    tol: float = DEFAULT_SVD_TOL,
    max_iter: int = DEFAULT_SVD_MAX_ITER,
) -> float:
    """Return sigma1(m) via the rank-1 power iteration."""
    return rank1_svd(m, tol=tol, max_iter=max_iter).sigma1
