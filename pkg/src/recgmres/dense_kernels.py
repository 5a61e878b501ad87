"""Small dense factorizations backing the iteration: thin QR with a fixed
sign convention, progressive block-Householder triangularization of the block
Hessenberg least-squares problem, and dense eigensolvers for the small
harmonic Ritz problems.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg


class SingularMatrixError(np.linalg.LinAlgError):
    pass


@dataclass
class QrFactors:
    """Thin QR of an n x L block: q has orthonormal columns, r_factor is
    upper triangular with nonnegative diagonal.  ``flagged`` marks columns
    whose diagonal fell below the rank tolerance."""

    q: np.ndarray
    r_factor: np.ndarray
    rank: int
    flagged: np.ndarray  # bool per column


def reduced_qr(X, rank_tol: float = 1e-12) -> QrFactors:
    """Householder thin QR with nonnegative diagonal.

    Columns with |r_jj| <= rank_tol * ||X||_F are flagged; rank counts the
    unflagged columns.  Rank deficiency is reported, never raised.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    n, L = X.shape
    if n < L:
        raise ValueError(f"reduced_qr needs n >= L, got {n} < {L}")
    q, r = np.linalg.qr(X, mode="reduced")
    d = np.diagonal(r).copy()
    s = np.where(d < 0.0, -1.0, 1.0)
    q = np.asfortranarray(q * s)
    r = r * s[:, None]
    norm_x = np.linalg.norm(X)
    flagged = np.abs(np.diagonal(r)) <= rank_tol * max(norm_x, np.finfo(float).tiny)
    return QrFactors(q=q, r_factor=r, rank=int(L - flagged.sum()), flagged=flagged)


def solve_triangular(Rf, rhs) -> np.ndarray:
    """Back substitution Rf Y = rhs for upper-triangular Rf.

    A diagonal entry below 1e-14 * ||Rf|| signals Krylov breakdown upstream
    and raises, naming the column.
    """
    Rf = np.asarray(Rf, dtype=np.float64)
    d = np.abs(np.diagonal(Rf))
    bad = np.nonzero(d <= 1e-14 * max(np.linalg.norm(Rf), np.finfo(float).tiny))[0]
    if bad.size:
        raise SingularMatrixError(f"singular diagonal in column {bad[0]}")
    return scipy.linalg.solve_triangular(Rf, rhs, lower=False)


# ---------------------------------------------------------------------------
# Progressive block-Householder triangularization (compact per-block-column
# reflector storage; previously generated reflections are applied to a new
# block of columns as one dense matrix-matrix product per stored set).
# ---------------------------------------------------------------------------


@dataclass
class _ReflectorSet:
    """Compact WY representation of the reflections for one block column:
    H_1 ... H_p = I - V T V^T over the rows [row0, row0 + V.shape[0])."""

    row0: int
    v: np.ndarray
    t: np.ndarray
    s: np.ndarray  # per-window-row sign flips enforcing a nonnegative diagonal

    def apply_transpose(self, B: np.ndarray) -> None:
        # R-building applied H_p ... H_1 = (I - V T V^T)^T followed by the
        # diagonal sign matrix; replay the same action in place
        rows = slice(self.row0, self.row0 + self.v.shape[0])
        blk = B[rows]
        blk -= self.v @ (self.t.T @ (self.v.T @ blk))
        blk *= self.s[:, None]


@dataclass
class BlockReflectorSet:
    """Accumulated reflector sets for a progressively triangularized block
    Hessenberg matrix."""

    sets: list = field(default_factory=list)

    def apply_all(self, B: np.ndarray) -> None:
        for s in self.sets:
            s.apply_transpose(B)


def _householder(x):
    """Reflector (v, tau) with (I - tau v v^T) x = beta e1."""
    x = np.asarray(x, dtype=np.float64)
    normx = np.linalg.norm(x)
    if normx == 0.0:
        return np.zeros_like(x), 0.0, 0.0
    s = 1.0 if x[0] >= 0.0 else -1.0
    v = x.copy()
    v[0] += s * normx
    tau = 2.0 / np.dot(v, v)
    return v, tau, -s * normx


class ProgressiveBlockLs:
    """Least-squares state for min ||Hbar Y - G0||_F over a growing block
    Hessenberg matrix, triangularized one block column at a time.

    Per-column residual norms of the least-squares problem are available after
    every appended block without solving for Y.
    """

    def __init__(self, L: int, g0: np.ndarray):
        # g0 holds the top L rows of the right-hand side (E1 Zbar or E1 Zbar e1)
        self.L = L
        self.m = 0
        self.reflectors = BlockReflectorSet()
        self.r_cols: list[np.ndarray] = []  # triangularized columns, len m*L
        g0 = np.atleast_2d(np.asarray(g0, dtype=np.float64))
        if g0.shape[0] != L:
            raise ValueError("g0 must have L rows")
        self.n_rhs = g0.shape[1]
        self.g = g0.copy()

    def append_block(self, new_cols: np.ndarray) -> np.ndarray:
        """Append the newest L columns of Hbar (shape ((m+2)L, L)); returns
        the per-rhs-column least-squares residual norms."""
        L, m = self.L, self.m
        B = np.array(new_cols, dtype=np.float64, copy=True)
        if B.shape != ((m + 2) * L, L):
            raise ValueError(
                f"expected new block of shape {((m + 2) * L, L)}, got {B.shape}"
            )
        self.reflectors.apply_all(B)

        # build one reflector set annihilating subdiagonal entries, columns
        # left to right; the set acts on the trailing 2L rows [mL, (m+2)L)
        row0 = m * L
        win = B[row0:, :]  # 2L x L
        nwin = win.shape[0]
        V = np.zeros((nwin, L))
        T = np.zeros((L, L))
        for c in range(L):
            x = win[c:, c].copy()
            v, tau, beta = _householder(x)
            vc = np.zeros(nwin)
            vc[c:] = v
            # apply to remaining columns of the window
            if tau != 0.0:
                wv = tau * (vc @ win)
                win -= np.outer(vc, wv)
            win[c, c] = beta
            win[c + 1 :, c] = 0.0
            if c == 0:
                T[0, 0] = tau
            else:
                T[:c, c] = -tau * (T[:c, :c] @ (V[:, :c].T @ vc))
                T[c, c] = tau
            V[:, c] = vc
        signs = np.ones(nwin)
        for c in range(L):
            if win[c, c] < 0.0:
                signs[c] = -1.0
                win[c, :] *= -1.0
        sset = _ReflectorSet(row0=row0, v=V, t=T, s=signs)
        self.reflectors.sets.append(sset)

        # grow transformed rhs by L zero rows, then apply the new set
        self.g = np.vstack([self.g, np.zeros((L, self.n_rhs))])
        sset.apply_transpose(self.g)

        for c in range(L):
            self.r_cols.append(B[: (m + 1) * L, c].copy())
        self.m = m + 1
        return self.residual_norms()

    def residual_norms(self) -> np.ndarray:
        """Norms of the least-squares residual per right-hand-side column."""
        tail = self.g[self.m * self.L :, :]
        return np.linalg.norm(tail, axis=0)

    def r_factor(self) -> np.ndarray:
        k = self.m * self.L
        R = np.zeros((k, k))
        for j, col in enumerate(self.r_cols):
            R[: j + 1, j] = col[: j + 1]
        return R

    def solve(self) -> np.ndarray:
        """Minimizer Y of the accumulated least-squares problem."""
        k = self.m * self.L
        return solve_triangular(self.r_factor(), self.g[:k, :])


# ---------------------------------------------------------------------------
# Small dense eigensolvers
# ---------------------------------------------------------------------------


@dataclass
class EigPairs:
    """Eigenpairs with conjugate pairs stored as adjacent (real, imag)
    columns of a real basis.

    pairing[i] is 0 for a real eigenvalue, 1 for the first member of a
    conjugate pair (its column holds the real part), 2 for the second (its
    column holds the imaginary part).
    """

    values: np.ndarray  # complex
    vectors: np.ndarray  # real, one column per eigenvalue
    pairing: np.ndarray  # int8 codes

    def complex_vector(self, i: int) -> np.ndarray:
        if self.pairing[i] == 0:
            return self.vectors[:, i].astype(complex)
        if self.pairing[i] == 1:
            return self.vectors[:, i] + 1j * self.vectors[:, i + 1]
        return self.vectors[:, i - 1] - 1j * self.vectors[:, i]


def _pack_eigpairs(w, v) -> EigPairs:
    n = len(w)
    vectors = np.zeros((v.shape[0], n))
    pairing = np.zeros(n, dtype=np.int8)
    i = 0
    while i < n:
        if abs(w[i].imag) <= 0.0:
            vectors[:, i] = v[:, i].real
            i += 1
            continue
        # LAPACK returns conjugate pairs adjacent
        if i + 1 >= n or not np.isclose(w[i + 1].real, w[i].real) or not np.isclose(
            w[i + 1].imag, -w[i].imag
        ):
            raise np.linalg.LinAlgError("unpaired complex eigenvalue")
        vectors[:, i] = v[:, i].real
        vectors[:, i + 1] = v[:, i].imag
        pairing[i] = 1
        pairing[i + 1] = 2
        i += 2
    return EigPairs(values=np.asarray(w, dtype=complex), vectors=vectors, pairing=pairing)


def eig_standard(M) -> EigPairs:
    """All eigenpairs of a real square matrix (Hessenberg reduction plus
    shifted QR, via LAPACK)."""
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("eig_standard needs a square matrix")
    try:
        w, v = np.linalg.eig(M)
    except np.linalg.LinAlgError as e:
        raise np.linalg.LinAlgError(f"eigenvalue iteration failed: {e}") from e
    return _pack_eigpairs(w, v)


def eig_generalized(Ag, Bg) -> EigPairs:
    """Eigenpairs of Ag t = theta Bg t, reduced via Bg^{-1} Ag.

    Raises when Bg is singular to working precision (condition estimate
    above 1e14), signaling a degenerate augmented basis.
    """
    Ag = np.asarray(Ag, dtype=np.float64)
    Bg = np.asarray(Bg, dtype=np.float64)
    if Ag.shape != Bg.shape or Ag.shape[0] != Ag.shape[1]:
        raise ValueError("eig_generalized needs square matrices of equal size")
    if Bg.size and np.linalg.cond(Bg) > 1e14:
        raise SingularMatrixError("degenerate basis: Bg condition above 1e14")
    M = np.linalg.solve(Bg, Ag)
    return eig_standard(M)
