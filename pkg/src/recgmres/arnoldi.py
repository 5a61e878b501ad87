"""Block Arnoldi process for an (optionally projected) operator.

The operator is passed as a closure so the same code serves A, M^{-1}A,
AM^{-1} and compositions.  When a recycle space (U, C) is attached, every new
block is orthogonalized against C first and the coefficients are captured in
F (they are needed for the solution update and the harmonic Ritz problem),
so the iteration effectively runs on (I - CC^T)A.
"""

from __future__ import annotations

import numpy as np

from .dense_kernels import reduced_qr
from .sparse_core import as_block


class ZeroStartBlock(ValueError):
    """The starting block is numerically zero (already converged)."""


class ArnoldiFactorization:
    """State of the block Arnoldi iteration.

    Attributes
    ----------
    w : orthonormal basis blocks V_1 ... V_{m+1}, one n x (m+1)L array
    h_bar : block upper-Hessenberg, (m+1)L x mL
    f : C-projection coefficients, k x mL (empty when no recycle space)
    z_bar : L x L R-factor of the starting block
    m : completed block steps
    """

    def __init__(self, n: int, L: int, m_max: int, k: int, rank_tol: float, seed: int):
        self.n = n
        self.L = L
        self.m_max = m_max
        self.rank_tol = rank_tol
        self.m = 0
        self._W = np.zeros((n, (m_max + 1) * L), order="F")
        self._H = np.zeros(((m_max + 1) * L, m_max * L))
        self._F = np.zeros((k, m_max * L))
        self.z_bar = np.zeros((L, L))
        self.breakdown_events: list[str] = []
        self._rng = np.random.default_rng(seed)

    @property
    def w(self) -> np.ndarray:
        return self._W[:, : (self.m + 1) * self.L]

    @property
    def h_bar(self) -> np.ndarray:
        return self._H[: (self.m + 1) * self.L, : self.m * self.L]

    @property
    def f(self) -> np.ndarray:
        return self._F[:, : self.m * self.L]

    def h_square(self) -> np.ndarray:
        """Leading mL x mL part of h_bar."""
        return self._H[: self.m * self.L, : self.m * self.L]

    def h_last_block(self) -> np.ndarray:
        """H_{m+1,m}, the closing upper-triangular L x L block."""
        mL = self.m * self.L
        return self._H[mL : mL + self.L, mL - self.L : mL]

    def v_block(self, i: int) -> np.ndarray:
        """Basis block V_{i+1} (0-based)."""
        return self._W[:, i * self.L : (i + 1) * self.L]

    def new_hbar_columns(self) -> np.ndarray:
        """The newest L columns of h_bar (rows 0..(m+1)L), for the
        progressive least-squares update."""
        mL = self.m * self.L
        return self._H[: mL + self.L, mL - self.L : mL]

    def _orthonormal_replacement(self, block: np.ndarray, j: int, c_basis) -> bool:
        """Replace column j of ``block`` by a random direction orthonormal to
        everything generated so far.  Returns False when the space is
        exhausted."""
        active = self._W[:, : (self.m + 1) * self.L]
        for _ in range(3):
            v = self._rng.standard_normal(self.n)
            for _pass in range(2):
                if c_basis is not None:
                    v -= c_basis @ (c_basis.T @ v)
                v -= active @ (active.T @ v)
                v -= block @ (block.T @ v)
            nrm = np.linalg.norm(v)
            if nrm > 1e-8:
                block[:, j] = v / nrm
                return True
        block[:, j] = 0.0
        return False


def start(opA, R0, rank_tol: float = 1e-12, *, m_max: int, recycle=None, seed: int = 0) -> ArnoldiFactorization:
    """Initialize the factorization from the starting block R0.

    V_1 and z_bar come from the thin QR of R0; rank-deficient columns are
    replaced by seeded random orthonormalized directions and logged.
    """
    R0 = as_block(R0)
    n, L = R0.shape
    norm0 = np.linalg.norm(R0)
    if norm0 == 0.0 or not np.isfinite(norm0):
        raise ZeroStartBlock("starting block is numerically zero")
    k = recycle.k if recycle is not None else 0
    fact = ArnoldiFactorization(n, L, m_max, k, rank_tol, seed)
    qr = reduced_qr(R0, rank_tol)
    fact.z_bar = qr.r_factor
    V1 = np.array(qr.q, order="F")
    c_basis = recycle.c if recycle is not None else None
    others_of = lambda j: np.delete(np.arange(L), j)
    for j in np.nonzero(qr.flagged)[0]:
        replaced = False
        for _ in range(3):
            v = fact._rng.standard_normal(n)
            for _pass in range(2):
                if c_basis is not None:
                    v -= c_basis @ (c_basis.T @ v)
                v -= V1[:, others_of(j)] @ (V1[:, others_of(j)].T @ v)
            nrm = np.linalg.norm(v)
            if nrm > 1e-8:
                V1[:, j] = v / nrm
                replaced = True
                break
        if not replaced:
            V1[:, j] = 0.0
        fact.breakdown_events.append(
            f"start: replaced rank-deficient column {j}"
            + ("" if replaced else " (space exhausted, column zeroed)")
        )
    fact._W[:, :L] = V1
    return fact


def step(fact: ArnoldiFactorization, opA, recycle=None, ortho: str = "cgs2") -> ArnoldiFactorization:
    """Advance the factorization by one block step.

    ``ortho`` selects block modified Gram-Schmidt ("mgs") or classical
    Gram-Schmidt with reorthogonalization ("cgs2", the default: the
    C-projection becomes two dense block products instead of k vector
    passes).
    """
    if fact.m >= fact.m_max:
        raise ValueError(f"factorization at capacity m_max={fact.m_max}")
    if ortho not in ("mgs", "cgs2"):
        raise ValueError(f"unknown orthogonalization '{ortho}'")
    m, L = fact.m, fact.L
    cols = slice(m * L, (m + 1) * L)
    Vm = fact.v_block(m)
    Ahat = np.array(opA(Vm), order="F")
    if Ahat.shape != (fact.n, L):
        raise ValueError("operator closure returned a block of wrong shape")
    C = recycle.c if recycle is not None else None

    if ortho == "mgs":
        if C is not None:
            for i in range(C.shape[1]):
                ci = C[:, i]
                coef = ci @ Ahat
                Ahat -= np.outer(ci, coef)
                fact._F[i, cols] += coef
        for i in range(m + 1):
            Vi = fact.v_block(i)
            Hblk = Vi.T @ Ahat
            Ahat -= Vi @ Hblk
            fact._H[i * L : (i + 1) * L, cols] += Hblk
    else:
        active = fact._W[:, : (m + 1) * L]
        for _pass in range(2):
            if C is not None:
                S = C.T @ Ahat
                Ahat -= C @ S
                fact._F[:, cols] += S
            coef = active.T @ Ahat
            Ahat -= active @ coef
            fact._H[: (m + 1) * L, cols] += coef

    qr = reduced_qr(Ahat, fact.rank_tol)
    fact._H[(m + 1) * L : (m + 2) * L, cols] = qr.r_factor
    Vnew = np.array(qr.q, order="F")
    for j in np.nonzero(qr.flagged)[0]:
        ok = fact._orthonormal_replacement(Vnew, j, C)
        fact.breakdown_events.append(
            f"step {m + 1}: replaced rank-deficient basis column {j}"
            + ("" if ok else " (space exhausted, column zeroed)")
        )
    fact._W[:, (m + 1) * L : (m + 2) * L] = Vnew
    fact.m = m + 1
    return fact
