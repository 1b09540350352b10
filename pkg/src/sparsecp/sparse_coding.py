"""Sparse coding stage: hard-thresholded init plus R IHT refinement steps.

Columns are solved independently. Work is partitioned into fixed-size
column blocks regardless of the worker count, so results are bitwise
identical whether the blocks run on one thread or eight.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .linalg import as_matrix

__all__ = [
    "IhtParams",
    "IhtDivergenceError",
    "default_iht_steps",
    "hard_threshold",
    "init_code",
    "iht",
]

# Fixed block width for column-parallel work; never depends on workers.
COLUMN_BLOCK = 1024

# Target decay for the default step-count rule.
R_RULE_DELTA = 1e-12
R_RULE_FLOOR = 50


class IhtDivergenceError(RuntimeError):
    """An IHT iterate went non-finite (step size too large)."""

    def __init__(self, step: int, column: int):
        self.step = step
        self.column = column
        super().__init__(
            f"Non-finite IHT iterate at step {step}, column {column}; "
            "eta_x is likely too large for this dictionary"
        )


def _as_schedule(value, name: str) -> tuple[float, ...]:
    if np.isscalar(value):
        return (float(value),)
    sched = tuple(float(v) for v in value)
    if not sched:
        raise ValueError(f"{name} schedule must be non-empty")
    return sched


def default_iht_steps(eta_x: float) -> int:
    """Return max(50, ceil(log(1/delta) / -log(1 - eta_x))) with delta = 1e-12."""
    if not 0.0 < eta_x < 1.0:
        raise ValueError(
            f"The default step-count rule needs 0 < eta_x < 1, got {eta_x}; "
            "pass R explicitly"
        )
    return max(R_RULE_FLOOR, math.ceil(math.log(1.0 / R_RULE_DELTA) / -math.log1p(-eta_x)))


@dataclass(frozen=True)
class IhtParams:
    """Step size eta_x in (0, 1], threshold tau > 0, R steps, magnitude bound C_lb.

    eta_x and tau may be per-step schedules (tuples); a schedule shorter
    than R repeats its last entry. When eta_x is a schedule, R must be
    given explicitly because the default step-count rule is defined for a
    single step size.
    """

    eta_x: float | tuple[float, ...] = 0.2
    tau: float | tuple[float, ...] = 0.1
    R: int | None = None
    C_lb: float = 1.0

    def __post_init__(self):
        eta = _as_schedule(self.eta_x, "eta_x")
        tau = _as_schedule(self.tau, "tau")
        object.__setattr__(self, "eta_x", eta if len(eta) > 1 else eta[0])
        object.__setattr__(self, "tau", tau if len(tau) > 1 else tau[0])
        for v in eta:
            if not 0.0 < v <= 1.0:
                raise ValueError(f"eta_x entries must lie in (0, 1], got {v}")
        for v in tau:
            if v <= 0.0:
                raise ValueError(f"tau entries must be > 0, got {v}")
        if not 0.0 < self.C_lb <= 1.0:
            raise ValueError(f"C_lb must lie in (0, 1], got {self.C_lb}")
        if self.R is None:
            if len(eta) > 1:
                raise ValueError("R must be set explicitly when eta_x is a schedule")
            object.__setattr__(self, "R", default_iht_steps(eta[0]))
        elif self.R < 0:
            raise ValueError(f"R must be >= 0, got {self.R}")

    def step_eta(self, r: int) -> float:
        e = self.eta_x
        if isinstance(e, tuple):
            return e[min(r, len(e) - 1)]
        return e

    def step_tau(self, r: int) -> float:
        t = self.tau
        if isinstance(t, tuple):
            return t[min(r, len(t) - 1)]
        return t


def hard_threshold(z, tau: float) -> np.ndarray:
    """Return z with entries of magnitude < tau zeroed (|z| == tau is kept)."""
    if tau < 0.0:
        raise ValueError(f"tau must be >= 0, got {tau}")
    z = np.asarray(z, dtype=np.float64)
    return np.where(np.abs(z) >= tau, z, 0.0)


def init_code(A, Y, C_lb: float = 1.0) -> np.ndarray:
    """Return the initial code T_{C/2}(A^T Y)."""
    A = as_matrix(A)
    Y = as_matrix(Y)
    if A.shape[0] != Y.shape[0]:
        raise ValueError(
            f"Row mismatch: A is {A.shape[0]}x{A.shape[1]}, Y is {Y.shape[0]}x{Y.shape[1]}"
        )
    if C_lb <= 0.0:
        raise ValueError(f"C_lb must be > 0, got {C_lb}")
    return np.asfortranarray(hard_threshold(A.T @ Y, C_lb / 2.0))


def _iht_block(A, Yb, Xb, params: IhtParams, col_offset: int) -> np.ndarray:
    X = Xb
    with np.errstate(over="ignore", invalid="ignore"):
        for r in range(params.R):
            eta = params.step_eta(r)
            tau = params.step_tau(r)
            G = A.T @ (A @ X - Yb)
            X = X - eta * G
            np.putmask(X, np.abs(X) < tau, 0.0)
            if not np.all(np.isfinite(X)):
                bad = np.flatnonzero(~np.isfinite(X).all(axis=0))
                raise IhtDivergenceError(r, col_offset + int(bad[0]))
    return X


def iht(A, Y, X0, params: IhtParams, workers: int = 1) -> np.ndarray:
    """Return X^(R) after R hard-thresholded gradient steps per column.

    X^(r+1) = T_tau(X^(r) - eta_x * A^T (A X^(r) - Y)), columns independent.
    R = 0 returns X0 unchanged.
    """
    A = as_matrix(A)
    Y = as_matrix(Y)
    X0 = as_matrix(X0)
    n, m = A.shape
    if Y.shape[0] != n:
        raise ValueError(f"Row mismatch: A is {n}x{m}, Y is {Y.shape[0]}x{Y.shape[1]}")
    if X0.shape != (m, Y.shape[1]):
        raise ValueError(
            f"X0 must be {m}x{Y.shape[1]}, got {X0.shape[0]}x{X0.shape[1]}"
        )
    p = Y.shape[1]
    if params.R == 0 or p == 0:
        return X0.copy(order="F")

    starts = range(0, p, COLUMN_BLOCK)
    out = np.empty((m, p), order="F")

    def run(s: int) -> tuple[int, np.ndarray]:
        e = min(s + COLUMN_BLOCK, p)
        return s, _iht_block(A, Y[:, s:e], X0[:, s:e], params, s)

    if workers > 1 and p > COLUMN_BLOCK:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, starts))
    else:
        results = [run(s) for s in starts]
    for s, block in results:
        out[:, s : s + block.shape[1]] = block
    return out
