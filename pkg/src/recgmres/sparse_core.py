"""Sparse matrix storage, sparse-times-dense-block kernels, Matrix Market
ingestion and synthetic banded matrix generation.

Dense blocks of vectors are plain 2-D numpy arrays in Fortran (column-major)
order, so that each column is contiguous.  ``as_block`` normalizes inputs to
that layout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False

if _HAVE_NUMBA:

    @njit(cache=True)
    def _spmm_kernel(row_ptr, col_idx, values, X, Y):
        # rows outer, columns inner per nonzero: each matrix entry is loaded
        # once and reused across all L right-hand vectors, which is what makes
        # a block product cheaper than L single products.  The per-column
        # summation order (ascending column index within each row) is the
        # same for every block width, so output columns are bitwise identical
        # to single-vector products.
        n = row_ptr.shape[0] - 1
        L = X.shape[1]
        for i in range(n):
            for t in range(row_ptr[i], row_ptr[i + 1]):
                a = values[t]
                j = col_idx[t]
                for c in range(L):
                    Y[i, c] += a * X[j, c]


class ShapeError(ValueError):
    """Incompatible operand shapes."""


class MatrixMarketError(ValueError):
    """Malformed Matrix Market input; message names the offending line."""


def as_block(x) -> np.ndarray:
    """Return ``x`` as a 2-D float64 array with contiguous columns."""
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    if a.ndim != 2:
        raise ShapeError(f"expected a vector or 2-D block, got ndim={a.ndim}")
    return np.asfortranarray(a)


@dataclass(frozen=True)
class CsrMatrix:
    """Sparse matrix in compressed-sparse-row form.

    Rows are sorted by column index and contain no duplicates.  Instances are
    immutable after construction and safe to share across threads.
    """

    n_rows: int
    n_cols: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray
    _scipy: sp.csr_matrix = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        rp, ci, v = self.row_ptr, self.col_idx, self.values
        if rp.shape != (self.n_rows + 1,):
            raise ValueError("row_ptr must have length n_rows+1")
        if rp[0] != 0 or rp[-1] != len(ci) or np.any(np.diff(rp) < 0):
            raise ValueError("row_ptr must be nondecreasing with row_ptr[0]=0")
        if len(ci) != len(v):
            raise ValueError("col_idx and values length mismatch")
        if len(ci) and (ci.min() < 0 or ci.max() >= self.n_cols):
            raise ValueError("column index out of range")
        for i in range(self.n_rows):
            row = ci[rp[i] : rp[i + 1]]
            if np.any(np.diff(row) <= 0):
                raise ValueError(f"row {i}: column indices not strictly increasing")

    @classmethod
    def from_coo(cls, n_rows, n_cols, rows, cols, vals) -> "CsrMatrix":
        m = sp.coo_matrix(
            (np.asarray(vals, dtype=np.float64), (rows, cols)),
            shape=(n_rows, n_cols),
        ).tocsr()
        m.sort_indices()
        return cls.from_scipy(m)

    @classmethod
    def from_scipy(cls, m) -> "CsrMatrix":
        m = sp.csr_matrix(m)
        m.sort_indices()
        return cls(
            n_rows=m.shape[0],
            n_cols=m.shape[1],
            row_ptr=m.indptr.copy(),
            col_idx=m.indices.copy(),
            values=np.asarray(m.data, dtype=np.float64).copy(),
        )

    @property
    def nnz(self) -> int:
        return len(self.values)

    def to_scipy(self) -> sp.csr_matrix:
        if self._scipy is None:
            m = sp.csr_matrix(
                (self.values, self.col_idx, self.row_ptr),
                shape=(self.n_rows, self.n_cols),
            )
            object.__setattr__(self, "_scipy", m)
        return self._scipy

    def frobenius_norm(self) -> float:
        return float(np.linalg.norm(self.values))

    def diagonal(self) -> np.ndarray:
        return self.to_scipy().diagonal()


def spmm(A: CsrMatrix, X) -> np.ndarray:
    """Sparse matrix times dense block, Y[:, j] = A @ X[:, j].

    Summation order is fixed (row-major over A, ascending column index), so
    each output column is bitwise identical to the single-vector product on
    the same column.
    """
    X = as_block(X)
    if A.n_cols != X.shape[0]:
        raise ShapeError(f"cannot multiply {A.n_rows}x{A.n_cols} by block with {X.shape[0]} rows")
    Y = np.zeros((A.n_rows, X.shape[1]), order="F")
    if _HAVE_NUMBA:
        _spmm_kernel(A.row_ptr, A.col_idx, A.values, X, Y)
    else:  # column-by-column fallback keeps per-column summation identical
        m = A.to_scipy()
        for c in range(X.shape[1]):
            Y[:, c] = m @ X[:, c]
    return Y


def spmv(A: CsrMatrix, x) -> np.ndarray:
    """Single-column specialization of spmm."""
    x = as_block(x)
    if x.shape[1] != 1:
        raise ShapeError("spmv expects a single column")
    return spmm(A, x)


def read_matrix_market(path) -> CsrMatrix:
    """Read a Matrix Market coordinate file (real, general or symmetric).

    Symmetric entries are expanded; 1-based indices are converted to 0-based.
    """
    with open(path, "rt") as fh:
        lines = fh.readlines()
    if not lines:
        raise MatrixMarketError("line 1: empty file")
    header = lines[0].strip().split()
    if (
        len(header) != 5
        or header[0] != "%%MatrixMarket"
        or header[1].lower() != "matrix"
        or header[2].lower() != "coordinate"
    ):
        raise MatrixMarketError("line 1: expected '%%MatrixMarket matrix coordinate ...' header")
    field_kind = header[3].lower()
    symmetry = header[4].lower()
    if field_kind not in ("real", "integer"):
        raise MatrixMarketError(f"line 1: unsupported field '{header[3]}' (need real)")
    if symmetry not in ("general", "symmetric"):
        raise MatrixMarketError(f"line 1: unsupported symmetry '{header[4]}'")

    lineno = 1
    dims = None
    for lineno, raw in enumerate(lines[1:], start=2):
        s = raw.strip()
        if not s or s.startswith("%"):
            continue
        parts = s.split()
        if len(parts) != 3:
            raise MatrixMarketError(f"line {lineno}: expected 'rows cols nnz'")
        try:
            dims = tuple(int(p) for p in parts)
        except ValueError:
            raise MatrixMarketError(f"line {lineno}: non-integer size entry") from None
        break
    if dims is None:
        raise MatrixMarketError(f"line {lineno}: missing size line")
    n_rows, n_cols, nnz = dims

    rows, cols, vals = [], [], []
    count = 0
    start = lineno + 1
    for lineno, raw in enumerate(lines[start - 1 :], start=start):
        s = raw.strip()
        if not s or s.startswith("%"):
            continue
        parts = s.split()
        if len(parts) != 3:
            raise MatrixMarketError(f"line {lineno}: expected 'row col value'")
        try:
            i, j = int(parts[0]), int(parts[1])
            v = float(parts[2])
        except ValueError:
            raise MatrixMarketError(f"line {lineno}: malformed entry") from None
        if not (1 <= i <= n_rows) or not (1 <= j <= n_cols):
            raise MatrixMarketError(f"line {lineno}: index ({i},{j}) out of declared range")
        rows.append(i - 1)
        cols.append(j - 1)
        vals.append(v)
        if symmetry == "symmetric" and i != j:
            rows.append(j - 1)
            cols.append(i - 1)
            vals.append(v)
        count += 1
    if count != nnz:
        raise MatrixMarketError(f"line {lineno}: declared {nnz} entries, found {count}")

    m = sp.coo_matrix((vals, (rows, cols)), shape=(n_rows, n_cols))
    # duplicates within a row are forbidden by the CSR contract
    dense_nnz = sp.coo_matrix((np.ones(len(vals)), (rows, cols)), shape=(n_rows, n_cols))
    if dense_nnz.tocsr().nnz != len(vals):
        raise MatrixMarketError("duplicate entries in coordinate data")
    return CsrMatrix.from_scipy(m.tocsr())


def read_matrix_market_array(path) -> np.ndarray:
    """Read a Matrix Market dense array file into a column-major block."""
    with open(path, "rt") as fh:
        lines = fh.readlines()
    if not lines:
        raise MatrixMarketError("line 1: empty file")
    header = lines[0].strip().split()
    if len(header) != 5 or header[0] != "%%MatrixMarket" or header[2].lower() != "array":
        raise MatrixMarketError("line 1: expected '%%MatrixMarket matrix array ...' header")
    if header[3].lower() not in ("real", "integer"):
        raise MatrixMarketError(f"line 1: unsupported field '{header[3]}'")
    body = [
        s for s in (raw.strip() for raw in lines[1:]) if s and not s.startswith("%")
    ]
    n, L = (int(p) for p in body[0].split()[:2])
    vals = [float(s.split()[0]) for s in body[1 : 1 + n * L]]
    if len(vals) != n * L:
        raise MatrixMarketError(f"expected {n * L} array entries, found {len(vals)}")
    return np.asfortranarray(np.array(vals).reshape((n, L), order="F"))


def write_matrix_market(A: CsrMatrix, path) -> None:
    """Write a CsrMatrix in coordinate/general format (round-trip exact)."""
    with open(path, "wt") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        fh.write(f"{A.n_rows} {A.n_cols} {A.nnz}\n")
        for i in range(A.n_rows):
            for t in range(A.row_ptr[i], A.row_ptr[i + 1]):
                fh.write(f"{i + 1} {A.col_idx[t] + 1} {float(A.values[t])!r}\n")


def gen_banded(n: int, band: int, seed: int) -> CsrMatrix:
    """Banded matrix with 2*band+1 dense diagonals of uniform(0,1) entries.

    The main diagonal is shifted by +n so the matrix is strictly diagonally
    dominant (ILU(0) and solves stay well-posed; noted in bench metadata).
    """
    if band < 0 or 2 * band + 1 > n:
        raise ValueError(f"half-bandwidth {band} too large for dimension {n}")
    rng = np.random.default_rng(seed)
    offsets = list(range(-band, band + 1))
    diags = []
    for off in offsets:
        d = rng.uniform(0.0, 1.0, size=n - abs(off))
        if off == 0:
            d = d + n
        diags.append(d)
    m = sp.diags(diags, offsets, shape=(n, n), format="csr")
    m.sort_indices()
    return CsrMatrix.from_scipy(m)
