"""Command-line front end.

Subcommands:
  synth-run   online run against the synthetic generator
  decompose   online/batch run against TNSR3 tensor files
  untangle    split a saved coding matrix into its two paired factors
  eval        compare two factor CSVs after sign/permutation alignment

Every SolverConfig field is exposed as a --flag of the same name; --config
loads a key=value file first and flags override it. Exit codes: 0 when the
run converged, 2 when it stopped at T_max (or ran out of input tensors)
without converging, 1 on any error.
"""

from __future__ import annotations

import argparse
import os
import sys

from .metrics import align_columns, column_errors, match_columns, rel_frobenius
from .runner import FileSource, RunResult, SolverConfig, run_online
from .tensorio import (
    center_nonzero_fibers,
    emit_outputs,
    ingest_tensor,
    parse_config_file,
    preprocess_dynamic_range,
    read_matrix_csv,
    scale_by_max,
    write_matrix_csv,
)
from .untangle import untangle_krp

__all__ = ["main"]


def _add_config_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", metavar="PATH", help="key=value config file")
    for name in SolverConfig._parsers():
        sub.add_argument(f"--{name}", metavar="V", dest=f"cfg_{name}")


def _collect_config(args, defaults: dict[str, str] | None = None) -> SolverConfig:
    merged: dict[str, str] = dict(defaults or {})
    if args.config:
        merged.update(parse_config_file(args.config))
    for name in SolverConfig._parsers():
        value = getattr(args, f"cfg_{name}", None)
        if value is not None:
            merged[name] = value
    return SolverConfig.from_mapping(merged)


def _exit_code(result: RunResult) -> int:
    return 0 if result.converged else 2


def _cmd_synth_run(args) -> int:
    cfg = _collect_config(args)
    result = run_online(cfg)
    emit_outputs(result.records, (result.A, result.B, result.C), cfg, args.out)
    return _exit_code(result)


def _cmd_decompose(args) -> int:
    tensors = [ingest_tensor(path) for path in args.tensor]
    if args.log2_range:
        tensors = [preprocess_dynamic_range(Z) for Z in tensors]
    if args.scale_max:
        tensors = [scale_by_max(Z) for Z in tensors]
    if args.center_fibers:
        tensors = [center_nonzero_fibers(Z) for Z in tensors]
    n, J, K = tensors[0].shape
    # file sources have no generative sparsity; alpha/beta are inert here
    defaults = {
        "n": str(n), "J": str(J), "K": str(K), "alpha": "0.5", "beta": "0.5",
    }
    cfg = _collect_config(args, defaults)
    source = FileSource(cfg, tensors)
    result = run_online(cfg, source)
    emit_outputs(result.records, (result.A, result.B, result.C), cfg, args.out)
    return _exit_code(result)


def _cmd_untangle(args) -> int:
    S = read_matrix_csv(args.matrix)
    J = int(args.J)
    K = int(args.K)
    unf = untangle_krp(
        S, J, K, svd_tol=float(args.svd_tol), workers=int(args.workers)
    )
    os.makedirs(args.out, exist_ok=True)
    write_matrix_csv(os.path.join(args.out, "B.csv"), unf.B)
    write_matrix_csv(os.path.join(args.out, "C.csv"), unf.C)
    degen = len(unf.degenerate_rows)
    print(f"untangled {S.shape[0]} rows ({degen} degenerate) -> {args.out}")
    return 0


def _cmd_eval(args) -> int:
    est = read_matrix_csv(args.estimate)
    ref = read_matrix_csv(args.reference)
    if est.shape != ref.shape:
        raise ValueError(
            f"Shape mismatch: estimate {est.shape} vs reference {ref.shape}"
        )
    align = match_columns(est, ref)
    errs = column_errors(est, ref, align)
    relF = rel_frobenius(align_columns(est, align), ref)
    print(f"err_col_max={errs.max_err:.6e} err_col_mean={errs.mean_err:.6e} err_relF={relF:.6e}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sparsecp",
        description="Online sparse CP decomposition with paired-factor untangling",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("synth-run", help="run against the synthetic generator")
    _add_config_flags(p)
    p.add_argument("--out", default="sparsecp_out", help="output directory")
    p.set_defaults(func=_cmd_synth_run)

    p = subs.add_parser("decompose", help="run against TNSR3 tensor files")
    p.add_argument("tensor", nargs="+", help="TNSR3 files, one per iteration")
    _add_config_flags(p)
    p.add_argument("--out", default="sparsecp_out", help="output directory")
    p.add_argument(
        "--log2-range",
        action="store_true",
        help="compress counts: non-zeros become log2(value)+1",
    )
    p.add_argument(
        "--scale-max", action="store_true", help="divide by the largest magnitude"
    )
    p.add_argument(
        "--center-fibers",
        action="store_true",
        help="subtract the mean from each non-zero mode-1 fiber",
    )
    p.set_defaults(func=_cmd_decompose)

    p = subs.add_parser("untangle", help="split a coding matrix into B and C")
    p.add_argument("matrix", help="matrix CSV with J*K columns")
    p.add_argument("--J", required=True, help="first paired dimension")
    p.add_argument("--K", required=True, help="second paired dimension")
    p.add_argument("--svd_tol", default="1e-12")
    p.add_argument("--workers", default="1")
    p.add_argument("--out", default="sparsecp_out", help="output directory")
    p.set_defaults(func=_cmd_untangle)

    p = subs.add_parser("eval", help="aligned error report between two factor CSVs")
    p.add_argument("estimate")
    p.add_argument("reference")
    p.set_defaults(func=_cmd_eval)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
