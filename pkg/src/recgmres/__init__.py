"""Sparse linear solvers: block GMRES with subspace recycling, plus a
benchmark harness for sparse matrix-times-block kernels."""

from .sparse_core import CsrMatrix, spmm, spmv, read_matrix_market, gen_banded
from .precond import Ilu0Factors, ilu0, apply_precond
from .recycling import RecycleSpace
from .solver import (
    SolverConfig,
    SolveReport,
    solve_block_gmres,
    solve_block_gcrodr,
    solve_sequence,
)

__all__ = [
    "CsrMatrix",
    "spmm",
    "spmv",
    "read_matrix_market",
    "gen_banded",
    "Ilu0Factors",
    "ilu0",
    "apply_precond",
    "RecycleSpace",
    "SolverConfig",
    "SolveReport",
    "solve_block_gmres",
    "solve_block_gcrodr",
    "solve_sequence",
]
