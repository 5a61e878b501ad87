"""Shared helpers: seeded random sparse matrices and dense oracles."""

import numpy as np
import scipy.sparse as sp

from recgmres.sparse_core import CsrMatrix


def random_csr(n, density=0.1, seed=0, shift=0.0):
    """Seeded random n x n CSR matrix, optionally diagonally shifted."""
    rng = np.random.default_rng(seed)
    m = sp.random(n, n, density=density, random_state=rng, format="csr")
    if shift:
        m = m + shift * sp.eye(n, format="csr")
    m.sort_indices()
    return CsrMatrix.from_scipy(m)


def csr_to_dense(A: CsrMatrix) -> np.ndarray:
    return A.to_scipy().toarray()


def dense_spmm_oracle(Ad: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Triple-loop dense matrix-block product, independent of any library
    kernel."""
    n, m = Ad.shape
    X = np.atleast_2d(X)
    L = X.shape[1]
    Y = np.zeros((n, L))
    for i in range(n):
        for j in range(m):
            a = Ad[i, j]
            if a != 0.0:
                for c in range(L):
                    Y[i, c] += a * X[j, c]
    return Y


def random_block_hessenberg(m, L, seed):
    """Random ((m+1)L, mL) block upper-Hessenberg matrix: zero below the
    first subdiagonal block."""
    rng = np.random.default_rng(seed)
    H = rng.standard_normal(((m + 1) * L, m * L))
    for j in range(m):
        H[(j + 2) * L :, j * L : (j + 1) * L] = 0.0
    return H


def principal_angle_max(U, V):
    """Largest principal angle (radians) between the column spans of U, V."""
    qu = np.linalg.qr(U)[0]
    qv = np.linalg.qr(V)[0]
    s = np.linalg.svd(qu.T @ qv, compute_uv=False)
    return float(np.arccos(np.clip(s.min(), -1.0, 1.0)))
