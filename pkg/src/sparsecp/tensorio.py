"""File formats: TNSR3 tensors, matrix CSV, config files, run outputs.

All text I/O is UTF-8. Floats are written with repr, which is the
shortest string that round-trips to the same double, so factor files
re-read bit-exactly and repeated runs diff clean. metrics.csv is part of
the determinism contract: every byte is a function of (config, seed), so
the wall_ms column is written as 0 there; measured timings stay on the
in-memory records and in the stdout summary.
"""

from __future__ import annotations

import math
import os
from typing import Sequence

import numpy as np

from .linalg import as_matrix
from .runner import IterationRecord, SolverConfig
from .tensor_core import as_tensor3

__all__ = [
    "ingest_tensor",
    "preprocess_dynamic_range",
    "scale_by_max",
    "center_nonzero_fibers",
    "read_matrix_csv",
    "write_matrix_csv",
    "parse_config_file",
    "write_config_echo",
    "emit_outputs",
    "METRICS_HEADER",
]

METRICS_HEADER = (
    "t,p,p_indep,err_A_max,err_A_relF,err_X_relF,signed_support_ok,"
    "data_fit,err_B_max,err_C_max,min_descent_corr,wall_ms"
)


def _strip_comment(line: str) -> str:
    return line.split("#", 1)[0].strip()


def ingest_tensor(path) -> np.ndarray:
    """Parse a TNSR3 file into a dense (n, J, K) array.

    Format: first significant line `TNSR3 <n> <J> <K>`, then
    `<i> <j> <k> <value>` lines with 1-based indices. `#` starts a
    comment, unlisted entries are zero, repeating a coordinate is an
    error. All parse errors carry the 1-based line number.
    """
    with open(path, encoding="utf-8") as fh:
        lines = fh.readlines()

    shape = None
    Z = None
    seen = None
    for lineno, rawline in enumerate(lines, start=1):
        text = _strip_comment(rawline)
        if not text:
            continue
        tokens = text.split()
        if shape is None:
            if tokens[0] != "TNSR3" or len(tokens) != 4:
                raise ValueError(
                    f"{path}:{lineno}: expected header 'TNSR3 <n> <J> <K>', got {text!r}"
                )
            try:
                shape = tuple(int(tok) for tok in tokens[1:])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-integer dimension in header {text!r}")
            if any(d < 1 for d in shape):
                raise ValueError(f"{path}:{lineno}: dimensions must be >= 1, got {shape}")
            Z = np.zeros(shape)
            seen = np.zeros(shape, dtype=bool)
            continue
        if len(tokens) != 4:
            raise ValueError(
                f"{path}:{lineno}: expected '<i> <j> <k> <value>', got {text!r}"
            )
        try:
            i, j, k = (int(tok) for tok in tokens[:3])
            value = float(tokens[3])
        except ValueError:
            raise ValueError(f"{path}:{lineno}: malformed entry {text!r}")
        if not math.isfinite(value):
            raise ValueError(f"{path}:{lineno}: non-finite value {tokens[3]}")
        if not (1 <= i <= shape[0] and 1 <= j <= shape[1] and 1 <= k <= shape[2]):
            raise ValueError(
                f"{path}:{lineno}: index ({i}, {j}, {k}) outside 1-based shape {shape}"
            )
        if seen[i - 1, j - 1, k - 1]:
            raise ValueError(f"{path}:{lineno}: duplicate coordinate ({i}, {j}, {k})")
        seen[i - 1, j - 1, k - 1] = True
        Z[i - 1, j - 1, k - 1] = value
    if Z is None:
        raise ValueError(f"{path}: empty file, expected a TNSR3 header")
    return as_tensor3(Z)


def preprocess_dynamic_range(Z) -> np.ndarray:
    """Compress counts data: non-zeros map to log2(value) + 1, zeros stay.

    Requires every non-zero entry >= 1 so the transform keeps them
    positive (entry 1 -> 1, entry 8 -> 4).
    """
    Z = as_tensor3(Z)
    mask = Z != 0.0
    bad = mask & (Z < 1.0)
    if bad.any():
        idx = tuple(int(v) for v in np.argwhere(bad)[0])
        raise ValueError(
            f"Non-zero entry {Z[idx]} at {idx} is < 1; dynamic-range compression "
            "needs counts-style data"
        )
    safe = np.where(mask, Z, 1.0)
    return np.where(mask, np.log2(safe) + 1.0, 0.0)


def scale_by_max(Z) -> np.ndarray:
    """Divide the tensor by its largest entry magnitude."""
    Z = as_tensor3(Z)
    peak = float(np.abs(Z).max())
    if peak == 0.0:
        raise ValueError("Cannot max-scale an all-zero tensor")
    return Z / peak


def center_nonzero_fibers(Z) -> np.ndarray:
    """Subtract the mean from each mode-1 fiber that has any non-zero.

    All-zero fibers stay zero, so the extract step still drops them.
    """
    Z = as_tensor3(Z).copy()
    live = (Z != 0.0).any(axis=0)
    means = Z.mean(axis=0)
    Z -= np.where(live, means, 0.0)[None, :, :]
    return Z


# Matrix CSV ---------------------------------------------------------------


def write_matrix_csv(path, M) -> None:
    """First line `rows,cols`, then one comma-separated line per row."""
    M = as_matrix(M)
    rows, cols = M.shape
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{rows},{cols}\n")
        for r in range(rows):
            fh.write(",".join(repr(float(v)) for v in M[r, :]))
            fh.write("\n")


def read_matrix_csv(path) -> np.ndarray:
    with open(path, encoding="utf-8") as fh:
        lines = fh.readlines()
    if not lines:
        raise ValueError(f"{path}: empty file, expected a 'rows,cols' header")
    head = lines[0].strip().split(",")
    try:
        rows, cols = (int(tok) for tok in head)
    except ValueError:
        raise ValueError(f"{path}:1: expected 'rows,cols' header, got {lines[0].strip()!r}")
    if rows < 0 or cols < 0:
        raise ValueError(f"{path}:1: negative dimensions in header")
    body = [ln.strip() for ln in lines[1:] if ln.strip()]
    if len(body) != rows:
        raise ValueError(f"{path}: header says {rows} rows, found {len(body)}")
    M = np.zeros((rows, cols), order="F")
    for r, text in enumerate(body):
        parts = text.split(",")
        if len(parts) != cols:
            raise ValueError(
                f"{path}:{r + 2}: expected {cols} values, found {len(parts)}"
            )
        try:
            M[r, :] = [float(tok) for tok in parts]
        except ValueError:
            raise ValueError(f"{path}:{r + 2}: malformed value in {text!r}")
    return M


# Config files -------------------------------------------------------------


def parse_config_file(path) -> dict[str, str]:
    """Read flat key=value lines into an ordered dict of raw strings.

    `#` comments and blank lines are skipped; duplicate keys and lines
    without `=` are errors with line numbers. Parsing the values is
    SolverConfig's job.
    """
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, rawline in enumerate(fh, start=1):
            text = _strip_comment(rawline)
            if not text:
                continue
            if "=" not in text:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {text!r}")
            key, value = text.split("=", 1)
            key = key.strip()
            value = value.strip()
            if not key:
                raise ValueError(f"{path}:{lineno}: empty key")
            if key in out:
                raise ValueError(f"{path}:{lineno}: duplicate key {key}")
            out[key] = value
    return out


def write_config_echo(cfg: SolverConfig, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for key, value in cfg.to_mapping().items():
            fh.write(f"{key}={value}\n")


# Run outputs --------------------------------------------------------------


def _metrics_row(r: IterationRecord) -> str:
    num = lambda v: repr(float(v))
    flag = "true" if r.signed_support_ok else "false"
    return (
        f"{r.t},{r.p},{r.p_indep},{num(r.err_A_max)},{num(r.err_A_relF)},"
        f"{num(r.err_X_relF)},{flag},{num(r.data_fit)},{num(r.err_B_max)},"
        f"{num(r.err_C_max)},{num(r.min_descent_corr)},0"
    )


def write_metrics_csv(path, records: Sequence[IterationRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(METRICS_HEADER + "\n")
        for r in records:
            fh.write(_metrics_row(r) + "\n")


def emit_outputs(records, factors, cfg: SolverConfig, out_dir) -> None:
    """Write metrics.csv, A/B/C factor CSVs, and a config echo to out_dir,
    then print a one-line run summary.

    factors is the (A, B, C) triple from the run. Convergence for the
    summary is judged the way the run loop judged it: last logged
    err_A_max against eps_T.
    """
    records = list(records)
    A, B, C = factors
    os.makedirs(out_dir, exist_ok=True)
    write_metrics_csv(os.path.join(out_dir, "metrics.csv"), records)
    write_matrix_csv(os.path.join(out_dir, "A.csv"), A)
    write_matrix_csv(os.path.join(out_dir, "B.csv"), B)
    write_matrix_csv(os.path.join(out_dir, "C.csv"), C)
    write_config_echo(cfg, os.path.join(out_dir, "config.txt"))
    if records:
        last = records[-1]
        state = "converged" if last.err_A_max <= cfg.eps_T else "stopped"
        total_ms = sum(r.wall_ms for r in records)
        print(
            f"{state} t={last.t} p={last.p} err_A_max={last.err_A_max:.3e} "
            f"data_fit={last.data_fit:.3e} wall_ms={total_ms:.1f} -> {out_dir}"
        )
    else:
        print(f"no iterations logged -> {out_dir}")
