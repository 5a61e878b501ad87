"""Top-level iterations: restarted block GMRES, block GMRES with subspace
recycling, block enlargement for single right-hand sides, and driving a
sequence of related linear systems.

Residual norms reported per block step come from the progressively
triangularized least-squares problem; by the projected/full residual
equivalence these track the true residual of the original system.  With
``residual_replace`` on (the default), the residual block is recomputed from
the solution at every cycle boundary to guard against drift in the update
recurrence; the extra products are counted.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import arnoldi
from .dense_kernels import ProgressiveBlockLs
from .precond import Ilu0Factors, apply_precond
from .recycling import (
    RecycleSpace,
    RecyclingError,
    harmonic_ritz_augmented,
    harmonic_ritz_krylov,
    prepare_cross_system,
    update_recycle_space,
)
from .sparse_core import CsrMatrix, ShapeError, as_block, spmm


@dataclass
class SolverConfig:
    m: int = 30  # max block Arnoldi steps per cycle
    k: int = 10  # recycle space dimension target (0 disables recycling)
    block_width: int = 1  # enlargement target L when there is one right-hand side
    tol: float = 1e-8  # relative residual tolerance
    max_cycles: int = 50
    ortho: str = "cgs2"  # "mgs" | "cgs2"
    stop_rule: str = "frobenius"  # "frobenius" | "per-column-relative"
    precond_side: str = "right"  # "right" | "left" | "none"
    seed: int = 0
    residual_replace: bool = True
    early_exit: bool = True  # check tolerance per block step, not only per cycle
    update_recycle: bool = True  # freeze the recycle space when False
    rank_tol: float = 1e-12

    def __post_init__(self):
        if self.m < 1 or self.k < 0 or self.block_width < 1 or self.tol <= 0:
            raise ValueError("need m >= 1, k >= 0, block_width >= 1, tol > 0")
        if self.ortho not in ("mgs", "cgs2"):
            raise ValueError(f"unknown ortho '{self.ortho}'")
        if self.stop_rule not in ("frobenius", "per-column-relative"):
            raise ValueError(f"unknown stop_rule '{self.stop_rule}'")
        if self.precond_side not in ("right", "left", "none"):
            raise ValueError(f"unknown precond_side '{self.precond_side}'")


@dataclass
class SolveReport:
    residual_history: list = field(default_factory=list)  # per cycle: (steps, p) estimated norms
    cycle_true_residuals: list = field(default_factory=list)  # per cycle end: (p,) norms
    matvec_count: int = 0  # single-vector-equivalent products with the operator
    cycles: int = 0
    breakdown_events: list = field(default_factory=list)
    recycle_origin: str = "none"
    converged: bool = False
    final_residual_norm: float = float("nan")
    rhs_norms: np.ndarray | None = None
    solution: np.ndarray | None = None
    error: str | None = None


class _Operator:
    """Preconditioned operator closure with matvec accounting.

    A width-L application counts as L single-vector-equivalent products.
    """

    def __init__(self, A, precond: Ilu0Factors | None, side: str):
        self.count = 0
        self.precond = precond if side != "none" else None
        self.side = side if self.precond is not None else "none"
        if callable(A):
            self._base = A
        elif isinstance(A, CsrMatrix):
            self._base = lambda Z: spmm(A, Z)
        else:
            raise TypeError("A must be a CsrMatrix or an operator closure")

    def apply(self, Z) -> np.ndarray:
        """The Krylov operator: A, A M^{-1}, or M^{-1} A."""
        Z = as_block(Z)
        self.count += Z.shape[1]
        if self.side == "right":
            return self._base(apply_precond(self.precond, Z))
        if self.side == "left":
            return apply_precond(self.precond, self._base(Z))
        return self._base(Z)

    def correction(self, Cz) -> np.ndarray:
        """Map a correction from operator space to solution space."""
        if self.side == "right":
            return apply_precond(self.precond, Cz)
        return Cz

    def rhs(self, B) -> np.ndarray:
        """Right-hand side in operator-residual space."""
        if self.side == "left":
            return apply_precond(self.precond, as_block(B))
        return as_block(B)

    def residual(self, B_op, X) -> np.ndarray:
        """Recompute the tracked residual from the current solution."""
        X = as_block(X)
        self.count += X.shape[1]
        AX = self._base(X)
        if self.side == "left":
            AX = apply_precond(self.precond, AX)
        return B_op - AX


def enlarge_block(r0, L: int, seed: int) -> np.ndarray:
    """Append L-1 seeded uniform(0,1) random columns to a single-column
    residual; downstream updates use only the first column's image."""
    r0 = as_block(r0)
    if r0.shape[1] != 1:
        raise ShapeError("enlarge_block expects a single column")
    if L < 2:
        return r0
    rng = np.random.default_rng(seed)
    extras = rng.uniform(0.0, 1.0, size=(r0.shape[0], L - 1))
    return np.asfortranarray(np.hstack([r0, extras]))


def _stop_met(est: np.ndarray, cfg: SolverConfig, rhs_norms: np.ndarray) -> bool:
    if cfg.stop_rule == "frobenius":
        return float(np.linalg.norm(est)) <= cfg.tol * float(np.linalg.norm(rhs_norms))
    return bool(np.all(est <= cfg.tol * rhs_norms))


def _run_cycle(op: _Operator, R_block, cfg: SolverConfig, recycle, seed: int, rhs_norms, single_rhs: bool):
    """One block Arnoldi cycle with progressive least-squares tracking.

    With ``single_rhs`` (enlarged block for one right-hand side) the
    least-squares target is the first column of the starting R-factor only.
    Returns (fact, pls, estimated-residual history array)."""
    if recycle is not None:
        # scrub roundoff components along C before seeding the basis: they
        # are tiny in absolute terms but grow relative to a shrinking
        # residual and would erode the C-orthogonality of the new basis
        R_block = as_block(R_block)
        for _ in range(2):
            R_block = R_block - recycle.c @ (recycle.c.T @ R_block)
    fact = arnoldi.start(
        op.apply, R_block, cfg.rank_tol, m_max=cfg.m, recycle=recycle, seed=seed
    )
    g0 = fact.z_bar[:, :1] if single_rhs else fact.z_bar
    pls = ProgressiveBlockLs(fact.L, g0)
    hist = []
    for _ in range(cfg.m):
        arnoldi.step(fact, op.apply, recycle=recycle, ortho=cfg.ortho)
        est = pls.append_block(fact.new_hbar_columns())
        hist.append(est)
        if cfg.early_exit and _stop_met(est, cfg, rhs_norms):
            break
    return fact, pls, np.array(hist)


def _apply_update(op, X, R, fact, Y, recycle):
    """X and R updates from the cycle's least-squares minimizer."""
    m, L = fact.m, fact.L
    Wm = fact.w[:, : m * L]
    corr = Wm @ Y
    if recycle is not None:
        corr = corr - recycle.u @ (fact.f @ Y)
    X = X + op.correction(corr)
    R = R - fact.w @ (fact.h_bar @ Y)
    return np.asfortranarray(X), np.asfortranarray(R)


def _finish(report: SolveReport, R, cfg, rhs_norms, X) -> SolveReport:
    report.final_residual_norm = float(np.linalg.norm(R))
    per_col = np.linalg.norm(R, axis=0)
    report.converged = _stop_met(per_col, cfg, rhs_norms)
    report.rhs_norms = rhs_norms
    report.solution = X
    return report


def solve_block_gmres(A, B, X0=None, cfg: SolverConfig | None = None, *, precond=None):
    """Restarted block GMRES.

    ``A`` may be a CsrMatrix or an operator closure.  Returns the solution,
    a SolveReport, and the last Arnoldi factorization (used to bootstrap a
    recycle space).  Non-convergence within max_cycles is reported, not
    raised.
    """
    cfg = cfg or SolverConfig()
    op = _Operator(A, precond, cfg.precond_side)
    B = as_block(B)
    p = B.shape[1]
    X = as_block(X0) if X0 is not None else np.zeros_like(B)
    B_op = op.rhs(B)
    R = op.residual(B_op, X)
    enlarged = p == 1 and cfg.block_width > 1
    L = cfg.block_width if enlarged else p
    rhs_norms = np.linalg.norm(B_op, axis=0)

    report = SolveReport()
    fact = None
    for cycle in range(cfg.max_cycles):
        if _stop_met(np.linalg.norm(R, axis=0), cfg, rhs_norms):
            break
        if enlarged:
            R_block = enlarge_block(R, L, cfg.seed + 1000 * cycle)
        else:
            R_block = R
        try:
            fact, pls, hist = _run_cycle(
                op, R_block, cfg, None, cfg.seed + cycle, rhs_norms, enlarged
            )
        except arnoldi.ZeroStartBlock:
            break
        Y = pls.solve()
        X, R = _apply_update(op, X, R, fact, Y, None)
        if cfg.residual_replace:
            R = op.residual(B_op, X)
        report.residual_history.append(hist)
        report.cycle_true_residuals.append(np.linalg.norm(R, axis=0))
        report.breakdown_events.extend(fact.breakdown_events)
        report.cycles += 1
    report.matvec_count = op.count
    _finish(report, R, cfg, rhs_norms, X)
    return X, report, fact


def solve_block_gcrodr(A, B, X0=None, cfg: SolverConfig | None = None, rs_in: RecycleSpace | None = None, *, precond=None):
    """Block GMRES with subspace recycling.

    When ``rs_in`` carries a space from a previous system it is re-prepared
    against the current operator and used to project the initial residual;
    otherwise a bootstrap cycle of plain block GMRES seeds the space from
    harmonic Ritz vectors.  Returns (X, SolveReport, rs_out).  Recycling
    failures degrade to a fixed (or absent) recycle space and are logged,
    never raised.
    """
    cfg = cfg or SolverConfig()
    op = _Operator(A, precond, cfg.precond_side)
    B = as_block(B)
    p = B.shape[1]
    X = as_block(X0) if X0 is not None else np.zeros_like(B)
    B_op = op.rhs(B)
    R = op.residual(B_op, X)
    enlarged = p == 1 and cfg.block_width > 1
    L = cfg.block_width if enlarged else p
    rhs_norms = np.linalg.norm(B_op, axis=0)

    report = SolveReport()
    rs: RecycleSpace | None = None

    if rs_in is not None and rs_in.k > 0 and cfg.k > 0:
        try:
            rs = prepare_cross_system(rs_in, op.apply)
            X = np.asfortranarray(X + op.correction(rs.u @ (rs.c.T @ R)))
            R = np.asfortranarray(R - rs.c @ (rs.c.T @ R))
            report.recycle_origin = "cross-system"
        except (RecyclingError, np.linalg.LinAlgError) as e:
            report.breakdown_events.append(f"cross-system preparation failed: {e}")
            rs = None

    for cycle in range(cfg.max_cycles):
        if _stop_met(np.linalg.norm(R, axis=0), cfg, rhs_norms):
            break
        if enlarged:
            R_block = enlarge_block(R, L, cfg.seed + 1000 * cycle)
            if rs is not None:
                # keep the starting block in the C-orthogonal complement
                extras = R_block[:, 1:]
                extras -= rs.c @ (rs.c.T @ extras)
        else:
            R_block = R
        try:
            fact, pls, hist = _run_cycle(
                op, R_block, cfg, rs, cfg.seed + cycle, rhs_norms, enlarged
            )
        except arnoldi.ZeroStartBlock:
            break
        Y = pls.solve()
        X, R = _apply_update(op, X, R, fact, Y, rs)
        if cfg.residual_replace:
            R = op.residual(B_op, X)
            if rs is not None:
                # the tracked residual lives in the C-orthogonal complement;
                # re-project so recurrence and recomputation agree
                R = np.asfortranarray(R - rs.c @ (rs.c.T @ R))
        report.residual_history.append(hist)
        report.cycle_true_residuals.append(np.linalg.norm(R, axis=0))
        report.breakdown_events.extend(fact.breakdown_events)
        report.cycles += 1

        if cfg.k > 0 and cfg.update_recycle and fact.m >= 1:
            rs = _update_space(fact, rs, cfg, report)
    report.matvec_count = op.count
    _finish(report, R, cfg, rhs_norms, X)
    if rs is not None and report.recycle_origin == "none":
        report.recycle_origin = rs.origin
    return X, report, rs


def _update_space(fact, rs, cfg: SolverConfig, report: SolveReport):
    """End-of-cycle recycle-space update; failures keep the previous space."""
    try:
        if rs is None:
            k_eff = min(cfg.k, fact.m * fact.L)
            sel = harmonic_ritz_krylov(fact, k_target=k_eff)
            new_rs = update_recycle_space(fact, None, sel, k_eff)
        else:
            k_eff = min(cfg.k, rs.k + fact.m * fact.L)
            d = 1.0 / np.linalg.norm(rs.u, axis=0)
            sel = harmonic_ritz_augmented(fact, rs, d, k_target=k_eff)
            new_rs = update_recycle_space(fact, rs, sel, k_eff)
        if report.recycle_origin in ("none",):
            report.recycle_origin = new_rs.origin
        return new_rs
    except (RecyclingError, np.linalg.LinAlgError) as e:
        report.breakdown_events.append(f"recycle update failed, keeping previous space: {e}")
        return rs


def solve_sequence(systems, cfg: SolverConfig | None = None, *, precond_factory=None, rs_in: RecycleSpace | None = None):
    """Solve a sequence of related systems, threading the recycle space from
    each solve into the next.

    ``systems`` is a list of (A, B) pairs; ``precond_factory`` maps each A to
    a preconditioner (or None).  Per-system failures are recorded in that
    system's report and the sequence continues.  Returns one SolveReport per
    system, with the solution attached.
    """
    cfg = cfg or SolverConfig()
    if not systems:
        raise ValueError("systems must be nonempty")
    reports = []
    rs = rs_in
    for A, B in systems:
        pc = precond_factory(A) if precond_factory is not None else None
        try:
            X, report, rs_out = solve_block_gcrodr(A, B, None, cfg, rs_in=rs, precond=pc)
            rs = rs_out if rs_out is not None else rs
        except Exception as e:  # keep driving the remaining systems
            report = SolveReport(error=f"{type(e).__name__}: {e}")
        reports.append(report)
    return reports
