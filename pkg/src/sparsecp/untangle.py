"""Recover the two sparse factors from the scattered code matrix.

Row i of Shat is reshaped to the J x K matrix M with M[j, k] =
Shat[i, k*J + j]; the principal rank-1 SVD triple (sigma1, u1, v1) then
splits into B_i = sqrt(sigma1) u1, C_i = sqrt(sigma1) v1. Rows are
independent; they are processed in fixed-size blocks so results do not
depend on the worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .linalg import DEFAULT_SVD_MAX_ITER, DEFAULT_SVD_TOL, PowerIterationError, as_matrix, rank1_svd

__all__ = ["UntangledFactors", "untangle_krp"]

ROW_BLOCK = 64


@dataclass(frozen=True, eq=False)
class UntangledFactors:
    """Recovered factors; degenerate_rows lists the all-zero rows of Shat."""

    B: np.ndarray
    C: np.ndarray
    degenerate_rows: tuple[int, ...] = field(default=())


def _untangle_row(row: np.ndarray, J: int, K: int, svd_tol: float, max_iter: int):
    M = row.reshape(K, J).T
    svd = rank1_svd(M, tol=svd_tol, max_iter=max_iter)
    s = math.sqrt(svd.sigma1)
    return s * svd.u1, s * svd.v1


def untangle_krp(
    Shat,
    J: int,
    K: int,
    svd_tol: float = DEFAULT_SVD_TOL,
    max_iter: int = DEFAULT_SVD_MAX_ITER,
    workers: int = 1,
) -> UntangledFactors:
    """Return UntangledFactors(B, C) from the m x JK scattered code matrix.

    All-zero rows yield zero columns in both factors and are flagged in
    degenerate_rows rather than raised, so the online loop can continue
    when an atom goes unused.
    """
    Shat = as_matrix(Shat)
    m, total = Shat.shape
    if total != J * K:
        raise ValueError(f"Shat has {total} columns, expected J*K = {J}*{K} = {J * K}")
    B = np.zeros((J, m), order="F")
    C = np.zeros((K, m), order="F")
    degenerate: list[int] = []

    rows = list(range(0, m, ROW_BLOCK))

    def run(s: int):
        e = min(s + ROW_BLOCK, m)
        out = []
        for i in range(s, e):
            row = Shat[i, :]
            if not row.any():
                out.append((i, None))
                continue
            try:
                out.append((i, _untangle_row(row, J, K, svd_tol, max_iter)))
            except PowerIterationError as exc:
                raise RuntimeError(f"Rank-1 SVD failed on row {i}: {exc}") from exc
        return out

    if workers > 1 and len(rows) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            blocks = list(pool.map(run, rows))
    else:
        blocks = [run(s) for s in rows]
    for block in blocks:
        for i, cols in block:
            if cols is None:
                degenerate.append(i)
            else:
                B[:, i], C[:, i] = cols
    return UntangledFactors(B, C, tuple(degenerate))
