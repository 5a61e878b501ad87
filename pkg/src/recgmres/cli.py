"""Command-line surface: single solves, sequence solves with recycling,
matrix-block-product benchmarks, and banded matrix generation.

Exit codes: 0 success/convergence, 2 non-convergence, 1 usage or I/O errors.
"""

from __future__ import annotations

import argparse
import csv
import sys

import numpy as np
import scipy.sparse as sp

from . import bench
from .precond import ilu0
from .recycling import load_recycle_space, save_recycle_space
from .solver import SolverConfig, solve_block_gcrodr, solve_sequence
from .sparse_core import (
    CsrMatrix,
    gen_banded,
    read_matrix_market,
    read_matrix_market_array,
    write_matrix_market,
)


def _parse_banded(spec: str):
    try:
        n, band = (int(s) for s in spec.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected --banded n,band") from None
    return n, band


def _parse_int_list(spec: str):
    try:
        return [int(s) for s in spec.split(",") if s]
    except ValueError:
        raise argparse.ArgumentTypeError("expected a comma-separated integer list") from None


def _load_operand_matrix(args, seed: int) -> CsrMatrix:
    if getattr(args, "matrix", None):
        return read_matrix_market(args.matrix)
    if getattr(args, "banded", None):
        n, band = args.banded
        return gen_banded(n, band, seed)
    raise ValueError("one of --matrix or --banded is required")


def _load_rhs(args, A: CsrMatrix) -> np.ndarray:
    if args.rhs:
        B = read_matrix_market_array(args.rhs)
        if B.shape[0] != A.n_rows:
            raise ValueError(f"rhs has {B.shape[0]} rows, matrix has {A.n_rows}")
        return B
    p = args.rhs_random or 1
    rng = np.random.default_rng(args.seed)
    return np.asfortranarray(rng.uniform(0.0, 1.0, size=(A.n_rows, p)))


def _config_from(args) -> SolverConfig:
    return SolverConfig(
        m=args.m,
        k=args.k,
        block_width=args.block_width,
        tol=args.tol,
        max_cycles=args.max_cycles,
        ortho=args.ortho,
        precond_side=args.precond_side,
        seed=args.seed,
    )


def _add_solver_flags(p):
    p.add_argument("--m", type=int, default=30, help="block Arnoldi steps per cycle")
    p.add_argument("--k", type=int, default=10, help="recycle space dimension (0 disables)")
    p.add_argument("--block-width", type=int, default=1, help="block enlargement for one rhs")
    p.add_argument("--tol", type=float, default=1e-8, help="relative residual tolerance")
    p.add_argument("--max-cycles", type=int, default=50)
    p.add_argument("--ortho", choices=("mgs", "cgs2"), default="cgs2")
    p.add_argument("--precond", choices=("ilu0", "none"), default="none")
    p.add_argument("--precond-side", choices=("right", "left", "none"), default="right")
    p.add_argument("--seed", type=int, default=0)


def _write_report_csv(path, reports):
    with open(path, "wt", newline="\n") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["system", "cycle", "step", "column", "est_residual"])
        for si, rep in enumerate(reports):
            for ci, hist in enumerate(rep.residual_history):
                for step, row in enumerate(hist):
                    for col, v in enumerate(np.atleast_1d(row)):
                        w.writerow([si, ci, step, col, f"{v:.6e}"])


def _print_report(rep, label=""):
    status = "converged" if rep.converged else "NOT converged"
    print(
        f"{label}{status}: cycles={rep.cycles} matvecs={rep.matvec_count} "
        f"final_residual={rep.final_residual_norm:.3e} recycle={rep.recycle_origin}"
    )
    for ev in rep.breakdown_events:
        print(f"  note: {ev}")


def cmd_solve(args) -> int:
    A = read_matrix_market(args.matrix)
    B = _load_rhs(args, A)
    cfg = _config_from(args)
    pc = ilu0(A) if args.precond == "ilu0" else None
    rs_in = load_recycle_space(args.recycle_in) if args.recycle_in else None
    X, rep, rs_out = solve_block_gcrodr(A, B, None, cfg, rs_in=rs_in, precond=pc)
    _print_report(rep)
    if args.recycle_out and rs_out is not None:
        save_recycle_space(rs_out, args.recycle_out)
    if args.report:
        _write_report_csv(args.report, [rep])
    return 0 if rep.converged else 2


def cmd_solve_seq(args) -> int:
    rng = np.random.default_rng(args.seed + 7)
    if args.matrices:
        mats = [read_matrix_market(p) for p in args.matrices.split(",")]
    else:
        base = read_matrix_market(args.matrix)
        try:
            count_s, scale_s = args.perturb.split(",")
            count, scale = int(count_s), float(scale_s)
        except (AttributeError, ValueError):
            raise ValueError("expected --perturb count,scale") from None
        d = rng.uniform(0.0, 1.0, size=base.n_rows)
        mats = [
            CsrMatrix.from_scipy(base.to_scipy() + sp.diags(scale * i * d))
            for i in range(count)
        ]
    p = args.rhs_random or 1
    systems = [
        (A, np.asfortranarray(rng.uniform(0.0, 1.0, size=(A.n_rows, p)))) for A in mats
    ]
    cfg = _config_from(args)
    factory = (lambda A: ilu0(A)) if args.precond == "ilu0" else None
    reports = solve_sequence(systems, cfg, precond_factory=factory)
    for i, rep in enumerate(reports):
        if rep.error:
            print(f"system {i}: failed: {rep.error}")
        else:
            _print_report(rep, label=f"system {i}: ")
    if args.report:
        _write_report_csv(args.report, [r for r in reports if not r.error])
    total = sum(r.matvec_count for r in reports)
    print(f"total matvecs: {total}")
    ok = all(r.error is None and r.converged for r in reports)
    return 0 if ok else 2


def cmd_bench_matvec(args) -> int:
    A = _load_operand_matrix(args, args.seed)
    mid = args.matrix or f"banded{args.banded[0]}x{args.banded[1]}"
    results = bench.bench_matvec(
        A, args.block_sizes, reps=args.reps, warmup=not args.no_warmup,
        matrix_id=mid, seed=args.seed,
    )
    if args.csv:
        bench.emit_csv(results, args.csv)
    if args.svg:
        bench.emit_plot(results, args.svg)
    for g, pts in bench.block_single_ratios(results).items():
        for L, ratio in pts:
            print(f"{g[0]} L={L}: block/single ratio {ratio:.3f}")
    return 0


def cmd_bench_projected(args) -> int:
    A = _load_operand_matrix(args, args.seed)
    mid = args.matrix or f"banded{args.banded[0]}x{args.banded[1]}"
    results = bench.bench_projected(
        A, args.dim_c, args.block_sizes, ortho=args.ortho, reps=args.reps,
        warmup=not args.no_warmup, matrix_id=mid, seed=args.seed,
    )
    if args.csv:
        bench.emit_csv(results, args.csv)
    if args.svg:
        bench.emit_plot(results, args.svg)
    for g, pts in bench.block_single_ratios(results).items():
        for L, ratio in pts:
            print(f"{g[0]} proj={g[1]} dim_c={g[2]} L={L}: ratio {ratio:.3f}")
    return 0


def cmd_gen_banded(args) -> int:
    n, band = args.banded
    A = gen_banded(n, band, args.seed)
    write_matrix_market(A, args.out)
    print(f"wrote {args.out}: n={A.n_rows} nnz={A.nnz} (diagonal shifted by +n)")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="recgmres")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one linear system")
    p.add_argument("--matrix", required=True)
    p.add_argument("--rhs", help="Matrix Market array file of right-hand sides")
    p.add_argument("--rhs-random", type=int, metavar="P", help="P seeded random right-hand sides")
    _add_solver_flags(p)
    p.add_argument("--recycle-in")
    p.add_argument("--recycle-out")
    p.add_argument("--report", help="per-step residual CSV")
    p.set_defaults(fn=cmd_solve)

    p = sub.add_parser("solve-seq", help="solve a sequence of related systems")
    p.add_argument("--matrices", help="comma-separated Matrix Market files")
    p.add_argument("--matrix", help="base matrix for --perturb")
    p.add_argument("--perturb", help="count,scale: A_i = A + scale*i*D_rand")
    p.add_argument("--rhs-random", type=int, metavar="P", default=1)
    _add_solver_flags(p)
    p.add_argument("--report")
    p.set_defaults(fn=cmd_solve_seq)

    for name, fn in (("bench-matvec", cmd_bench_matvec), ("bench-projected", cmd_bench_projected)):
        p = sub.add_parser(name, help=f"{name.replace('-', ' ')} timing sweep")
        p.add_argument("--matrix")
        p.add_argument("--banded", type=_parse_banded, metavar="N,BAND")
        p.add_argument("--block-sizes", type=_parse_int_list, default=None)
        p.add_argument("--reps", type=int, default=100)
        p.add_argument("--no-warmup", action="store_true")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--csv")
        p.add_argument("--svg")
        if name == "bench-projected":
            p.add_argument("--dim-c", type=_parse_int_list, default=[10], metavar="K[,K...]")
            p.add_argument("--ortho", choices=("mgs", "cgs2"), default="cgs2")
        p.set_defaults(fn=fn)

    p = sub.add_parser("gen-banded", help="generate a banded test matrix")
    p.add_argument("--banded", type=_parse_banded, required=True, metavar="N,BAND")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_gen_banded)
    return ap


def cli_main(argv=None) -> int:
    ap = _build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code == 0 else 1
    try:
        return args.fn(args)
    except (OSError, ValueError, ArithmeticError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_main(sys.argv[1:]))


if __name__ == "__main__":
    main()
