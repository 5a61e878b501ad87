"""Recycle-space representation, harmonic Ritz extraction (pure-Krylov and
augmented), end-of-cycle recycle-space update, and re-preparation between
linear systems.  A small binary save/load format lets a recycle space persist
across CLI invocations."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .dense_kernels import EigPairs, eig_generalized, eig_standard, reduced_qr
from .sparse_core import as_block


class RecyclingError(RuntimeError):
    pass


@dataclass(frozen=True)
class RecycleSpace:
    """Pair (U, C) with A U = C and C having orthonormal columns, for the
    operator it was prepared against."""

    u: np.ndarray
    c: np.ndarray
    origin: str = "fresh"

    @property
    def k(self) -> int:
        return self.u.shape[1]


@dataclass
class HarmonicRitzSelection:
    """Retained harmonic Ritz pairs and the coefficient matrix expressing the
    retained subspace in the current basis ([U~ W_m], or W_m in the
    pure-Krylov case)."""

    pairs: EigPairs
    keep: np.ndarray
    coeffs: np.ndarray
    d_scale: np.ndarray | None = None  # set by the augmented problem


def _select_smallest(pairs: EigPairs, k_target: int | None) -> np.ndarray:
    """Indices of the pairs of smallest modulus; conjugate pairs are kept or
    dropped together, expanding to k_target+1 when a pair straddles the
    cutoff."""
    n = len(pairs.values)
    if k_target is None or k_target >= n:
        return np.arange(n)
    order = np.argsort(np.abs(pairs.values), kind="stable")
    keep: list[int] = []
    for i in order:
        if len(keep) >= k_target:
            break
        if pairs.pairing[i] == 2:
            continue  # handled with its partner
        if pairs.pairing[i] == 1:
            keep.extend([i, i + 1])
        else:
            keep.append(i)
    return np.array(sorted(keep), dtype=np.int64)


def _build_selection(pairs: EigPairs, k_target: int | None, d_scale=None) -> HarmonicRitzSelection:
    keep = _select_smallest(pairs, k_target)
    coeffs = pairs.vectors[:, keep].copy()
    return HarmonicRitzSelection(pairs=pairs, keep=keep, coeffs=coeffs, d_scale=d_scale)


def harmonic_ritz_krylov(fact, k_target: int | None = None) -> HarmonicRitzSelection:
    """Harmonic Ritz pairs of the plain block Krylov space spanned by W_m.

    Solves the mL x mL eigenproblem obtained by modifying the last L columns
    of the square Hessenberg part; retained vectors are coefficient columns
    over W_m.  Raises on a singular Hessenberg (breakdown or lucky
    convergence)."""
    m, L = fact.m, fact.L
    if m < 1:
        raise RecyclingError("factorization has no completed steps")
    H = np.array(fact.h_square(), dtype=np.float64)
    Hlast = np.array(fact.h_last_block(), dtype=np.float64)
    rhs = np.zeros((m * L, L))
    rhs[-L:, :] = Hlast.T @ Hlast
    try:
        mod = np.linalg.solve(H.T, rhs)
    except np.linalg.LinAlgError as e:
        raise RecyclingError(f"singular Hessenberg in harmonic Ritz problem: {e}") from e
    M = H.copy()
    M[:, -L:] += mod
    return _build_selection(eig_standard(M), k_target)


def harmonic_ritz_augmented(fact, rs: RecycleSpace, d_scale, k_target: int | None = None) -> HarmonicRitzSelection:
    """Harmonic Ritz pairs of the augmented space span[U W_m].

    ``d_scale`` holds the per-column scaling making U~ = U diag(d_scale)
    unit-column.  The generalized eigenproblem is assembled from the stored
    F and Hessenberg blocks plus the two thin products C^T U~ and
    W_{m+1}^T U~ (the per-cycle recycling overhead)."""
    m, L, k = fact.m, fact.L, rs.k
    if k == 0:
        return harmonic_ritz_krylov(fact, k_target)
    d_scale = np.asarray(d_scale, dtype=np.float64).reshape(-1)
    if d_scale.shape != (k,):
        raise ValueError("d_scale must have one entry per recycle column")
    Ut = rs.u * d_scale
    G = np.zeros((k + (m + 1) * L, k + m * L))
    G[:k, :k] = np.diag(d_scale)
    G[:k, k:] = fact.f
    G[k:, k:] = fact.h_bar

    W = fact.w  # n x (m+1)L
    cross = np.zeros((k + (m + 1) * L, k + m * L))
    cross[:k, :k] = rs.c.T @ Ut
    cross[k:, :k] = W.T @ Ut
    cross[k : k + m * L, k:] = np.eye(m * L)
    pairs = eig_generalized(G.T @ G, G.T @ cross)
    return _build_selection(pairs, k_target, d_scale=d_scale)


def update_recycle_space(fact, rs: RecycleSpace | None, selection: HarmonicRitzSelection, k_target: int) -> RecycleSpace:
    """New recycle space from the retained harmonic Ritz directions.

    U_new = [U~ W_m] T (or W_m T when no previous space); C_new is computed
    cheaply from the QR of the small matrix G_M T, so no extra products with
    A are needed.  Singular directions are dropped, shrinking k, with the
    event recorded in the returned origin tag."""
    m, L = fact.m, fact.L
    T = np.array(selection.coeffs, dtype=np.float64)
    if rs is None:
        basis = fact.w[:, : m * L]
        small_map = fact.h_bar
        w_tilde = fact.w
        if T.shape[0] != m * L:
            raise ValueError("selection coefficients do not match the Krylov basis")
    else:
        k = rs.k
        if selection.d_scale is None:
            raise ValueError("augmented selection requires its d_scale")
        Ut = rs.u * selection.d_scale
        basis = np.hstack([Ut, fact.w[:, : m * L]])
        small_map = np.zeros((k + (m + 1) * L, k + m * L))
        small_map[:k, :k] = np.diag(selection.d_scale)
        small_map[:k, k:] = fact.f
        small_map[k:, k:] = fact.h_bar
        w_tilde = np.hstack([rs.c, fact.w])
        if T.shape[0] != k + m * L:
            raise ValueError("selection coefficients do not match the augmented basis")

    shrunk = False
    while T.shape[1] > 0:
        qr = reduced_qr(small_map @ T, rank_tol=1e-12)
        if not qr.flagged.any():
            break
        T = T[:, ~qr.flagged]
        shrunk = True
    if T.shape[1] == 0:
        raise RecyclingError("all retained directions collapsed under the operator")

    c_new = np.asfortranarray(w_tilde @ qr.q)
    u_raw = basis @ T
    u_new = np.asfortranarray(
        scipy.linalg.solve_triangular(qr.r_factor.T, u_raw.T, lower=True).T
    )
    origin = "end-of-cycle" + (" (shrunk)" if shrunk else "")
    return RecycleSpace(u=u_new, c=c_new, origin=origin)


def prepare_cross_system(rs: RecycleSpace, opA_new) -> RecycleSpace:
    """Re-prepare (U, C) against a new operator: C from the thin QR of
    A_new U, U rescaled by the inverse R-factor.  Rank collapse drops the
    offending columns."""
    U = np.array(rs.u, order="F")
    while U.shape[1] > 0:
        qr = reduced_qr(as_block(opA_new(U)), rank_tol=1e-12)
        if not qr.flagged.any():
            break
        U = U[:, ~qr.flagged]
    if U.shape[1] == 0:
        raise RecyclingError("recycle space collapsed under the new operator")
    u_new = np.asfortranarray(
        scipy.linalg.solve_triangular(qr.r_factor.T, U.T, lower=True).T
    )
    return RecycleSpace(u=u_new, c=np.asfortranarray(qr.q), origin="cross-system")


# ---------------------------------------------------------------------------
# Binary persistence (16-byte magic/version header, then n, k and the raw
# column-major U and C payloads)
# ---------------------------------------------------------------------------

_MAGIC = b"RGMRECYC"
_VERSION = 1


def save_recycle_space(rs: RecycleSpace, path) -> None:
    n, k = rs.u.shape
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, 0))
        fh.write(struct.pack("<qq", n, k))
        fh.write(np.asfortranarray(rs.u).tobytes(order="F"))
        fh.write(np.asfortranarray(rs.c).tobytes(order="F"))


def load_recycle_space(path) -> RecycleSpace:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _MAGIC:
            raise ValueError(f"{path}: not a recycle-space file")
        version, _ = struct.unpack("<II", fh.read(8))
        if version != _VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        n, k = struct.unpack("<qq", fh.read(16))
        nbytes = n * k * 8
        u = np.frombuffer(fh.read(nbytes)).reshape((n, k), order="F").copy(order="F")
        c = np.frombuffer(fh.read(nbytes)).reshape((n, k), order="F").copy(order="F")
    return RecycleSpace(u=u, c=c, origin="cross-system")
