"""ILU(0) construction (IKJ variant, zero fill-in) and block application via
two sparse triangular solves."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .sparse_core import CsrMatrix, ShapeError, as_block


class ZeroPivotError(ArithmeticError):
    pass


@dataclass(frozen=True)
class Ilu0Factors:
    """Unit lower / upper triangular factors sharing the sparsity pattern of
    the input matrix (no fill-in).  The unit diagonal of ``lower`` is
    implicit: it is not stored."""

    lower: CsrMatrix
    upper: CsrMatrix

    @property
    def n(self) -> int:
        return self.lower.n_rows


def ilu0(A: CsrMatrix) -> Ilu0Factors:
    """Incomplete LU with zero fill-in.

    For matrices whose exact LU incurs no fill, the factors equal the exact
    LU.  No pivoting is performed; a zero pivot raises, naming the row.
    """
    n = A.n_rows
    if A.n_cols != n:
        raise ShapeError("ilu0 needs a square matrix")
    rp, ci, vals = A.row_ptr, A.col_idx, A.values.copy()
    diag_pos = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        row = ci[rp[i] : rp[i + 1]]
        j = np.searchsorted(row, i)
        if j < len(row) and row[j] == i:
            diag_pos[i] = rp[i] + j
    if np.any(diag_pos < 0):
        missing = int(np.nonzero(diag_pos < 0)[0][0])
        raise ZeroPivotError(f"row {missing}: no stored diagonal entry")

    # IKJ sweep restricted to the pattern of A
    col_map: dict[int, int] = {}
    for i in range(n):
        lo, hi = rp[i], rp[i + 1]
        col_map.clear()
        for t in range(lo, hi):
            col_map[ci[t]] = t
        for t in range(lo, hi):
            k = ci[t]
            if k >= i:
                break
            piv = vals[diag_pos[k]]
            if piv == 0.0:
                raise ZeroPivotError(f"row {k}: zero pivot in ILU(0)")
            lik = vals[t] / piv
            vals[t] = lik
            for s in range(diag_pos[k] + 1, rp[k + 1]):
                j = ci[s]
                pos = col_map.get(j)
                if pos is not None:
                    vals[pos] -= lik * vals[s]
        if vals[diag_pos[i]] == 0.0:
            raise ZeroPivotError(f"row {i}: zero pivot in ILU(0)")

    m = sp.csr_matrix((vals, ci.copy(), rp.copy()), shape=(n, n))
    lower = CsrMatrix.from_scipy(sp.tril(m, k=-1, format="csr"))
    upper = CsrMatrix.from_scipy(sp.triu(m, k=0, format="csr"))
    return Ilu0Factors(lower=lower, upper=upper)


def apply_precond(F: Ilu0Factors, X) -> np.ndarray:
    """Return U^{-1} (L^{-1} X) via two sparse triangular block solves."""
    X = as_block(X)
    if X.shape[0] != F.n:
        raise ShapeError(f"block has {X.shape[0]} rows, factors are {F.n}-dimensional")
    Z = spla.spsolve_triangular(F.lower.to_scipy(), X, lower=True, unit_diagonal=True)
    Y = spla.spsolve_triangular(F.upper.to_scipy(), Z, lower=False)
    return np.asfortranarray(np.atleast_2d(Y.reshape(X.shape)))
