"""Benchmark harness: block vs one-at-a-time application of A and of the
projected operator (I - CC^T)A, timing statistics, an analytic bytes-moved
model, CSV emission, and simple SVG plots.

Hardware counters are out of scope; the analytic model estimates bytes
touched per application from the declared storage layout (8-byte values,
4-byte indices) and is exact arithmetic, unit-testable without hardware.
Benchmarks are single-threaded.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass

import numpy as np

from .dense_kernels import reduced_qr
from .sparse_core import CsrMatrix, spmm

DEFAULT_BLOCK_SIZES = (1, 2, 4, 6, 8, 10, 12, 14, 16, 18, 20)

_VAL_BYTES = 8
_IDX_BYTES = 4


@dataclass
class BenchResult:
    matrix_id: str
    n: int
    nnz: int
    L: int
    mode: str  # "all-at-once" | "one-at-a-time"
    projector: str  # "none" | "mgs" | "cgs2"
    dim_c: int
    reps: int
    mean_seconds: float
    min_seconds: float
    stddev_seconds: float
    bytes_model: int


def matvec_bytes(n_rows: int, nnz: int, L: int) -> int:
    """Bytes touched by one CSR-times-block application: matrix values and
    indices are read once, the block is read and the result written."""
    return nnz * (_VAL_BYTES + _IDX_BYTES) + (n_rows + 1) * _IDX_BYTES + 2 * L * n_rows * _VAL_BYTES


def projector_bytes(n: int, dim_c: int, L: int, ortho: str) -> int:
    """Extra bytes for composing (I - CC^T): per pass, C is streamed twice
    (coefficient product and update) and the block is read and rewritten.
    CGS2 runs two passes as dense block products; MGS is one sweep."""
    passes = 2 if ortho == "cgs2" else 1
    return passes * (2 * dim_c * n * _VAL_BYTES + 2 * L * n * _VAL_BYTES)


def _time_reps(fn, reps: int, warmup: bool):
    if warmup:
        fn()
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    t = np.array(times)
    return float(t.mean()), float(t.min()), float(t.std())


def _random_block(n: int, L: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return np.asfortranarray(rng.uniform(0.0, 1.0, size=(n, L)))


def bench_matvec(A: CsrMatrix, L_values=None, reps: int = 100, warmup: bool = True, *, matrix_id: str = "matrix", seed: int = 0):
    """Time spmm(A, n x L) against L single-column products, per block size.

    For L=1 the one-at-a-time row reuses the all-at-once measurement, so the
    reported ratio is 1 by construction.
    """
    L_values = list(L_values) if L_values else list(DEFAULT_BLOCK_SIZES)
    results = []
    for L in L_values:
        X = _random_block(A.n_cols, L, seed)
        cols = [np.asfortranarray(X[:, j : j + 1]) for j in range(L)]

        def block_once():
            spmm(A, X)

        def one_at_a_time():
            for c in cols:
                spmm(A, c)

        mean_b, min_b, std_b = _time_reps(block_once, reps, warmup)
        if L == 1:
            mean_s, min_s, std_s = mean_b, min_b, std_b
        else:
            mean_s, min_s, std_s = _time_reps(one_at_a_time, reps, warmup)
        results.append(
            BenchResult(matrix_id, A.n_rows, A.nnz, L, "all-at-once", "none", 0, reps,
                        mean_b, min_b, std_b, matvec_bytes(A.n_rows, A.nnz, L))
        )
        results.append(
            BenchResult(matrix_id, A.n_rows, A.nnz, L, "one-at-a-time", "none", 0, reps,
                        mean_s, min_s, std_s, L * matvec_bytes(A.n_rows, A.nnz, 1))
        )
    return results


def make_projector_basis(n: int, dim_c: int, seed: int) -> np.ndarray:
    """Orthonormalized seeded random n x dim_c basis."""
    rng = np.random.default_rng(seed)
    return reduced_qr(rng.standard_normal((n, dim_c))).q


def _project(Y: np.ndarray, C: np.ndarray, ortho: str) -> np.ndarray:
    if C.shape[1] == 0:
        return Y
    if ortho == "mgs":
        for i in range(C.shape[1]):
            ci = C[:, i]
            Y -= np.outer(ci, ci @ Y)
    else:  # cgs2: two passes of dense block products
        for _ in range(2):
            Y -= C @ (C.T @ Y)
    return Y


def bench_projected(A: CsrMatrix, C_dims, L_values=None, ortho: str = "cgs2", reps: int = 100, *, warmup: bool = True, matrix_id: str = "matrix", seed: int = 0):
    """Time (I - CC^T)A applied all-at-once vs one column at a time, for each
    projector dimension in C_dims."""
    if ortho not in ("mgs", "cgs2"):
        raise ValueError(f"unknown ortho '{ortho}'")
    L_values = list(L_values) if L_values else list(DEFAULT_BLOCK_SIZES)
    results = []
    for dim_c in C_dims:
        C = make_projector_basis(A.n_rows, dim_c, seed + dim_c)
        tag = "none" if dim_c == 0 else ortho
        for L in L_values:
            X = _random_block(A.n_cols, L, seed)
            cols = [np.asfortranarray(X[:, j : j + 1]) for j in range(L)]

            def block_once():
                _project(spmm(A, X), C, ortho)

            def one_at_a_time():
                for c in cols:
                    _project(spmm(A, c), C, ortho)

            mean_b, min_b, std_b = _time_reps(block_once, reps, warmup)
            if L == 1:
                mean_s, min_s, std_s = mean_b, min_b, std_b
            else:
                mean_s, min_s, std_s = _time_reps(one_at_a_time, reps, warmup)
            base = matvec_bytes(A.n_rows, A.nnz, L)
            proj = projector_bytes(A.n_rows, dim_c, L, ortho)
            single = matvec_bytes(A.n_rows, A.nnz, 1) + projector_bytes(A.n_rows, dim_c, 1, ortho)
            results.append(
                BenchResult(matrix_id, A.n_rows, A.nnz, L, "all-at-once", tag, dim_c,
                            reps, mean_b, min_b, std_b, base + proj)
            )
            results.append(
                BenchResult(matrix_id, A.n_rows, A.nnz, L, "one-at-a-time", tag, dim_c,
                            reps, mean_s, min_s, std_s, L * single)
            )
    return results


CSV_HEADER = [
    "matrix_id", "n", "nnz", "L", "mode", "projector", "dim_c", "ortho",
    "reps", "mean_s", "min_s", "stddev_s", "bytes_model",
]


def emit_csv(results, path) -> None:
    """Deterministic CSV: header row, '.' decimal, %.6e floats, LF endings."""
    with open(path, "wt", newline="\n") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in results:
            ortho = r.projector if r.projector in ("mgs", "cgs2") else ""
            w.writerow([
                r.matrix_id, r.n, r.nnz, r.L, r.mode, r.projector, r.dim_c, ortho,
                r.reps, f"{r.mean_seconds:.6e}", f"{r.min_seconds:.6e}",
                f"{r.stddev_seconds:.6e}", r.bytes_model,
            ])


def block_single_ratios(results):
    """Ratio mean(all-at-once, L) / per-single-product time, per group.

    Returns {(matrix_id, projector, dim_c): [(L, ratio), ...]} sorted by L.
    """
    by_key = {}
    for r in results:
        by_key.setdefault((r.matrix_id, r.projector, r.dim_c, r.L, r.mode), r)
    out = {}
    groups = sorted({(r.matrix_id, r.projector, r.dim_c) for r in results})
    for g in groups:
        pts = []
        Ls = sorted({r.L for r in results if (r.matrix_id, r.projector, r.dim_c) == g})
        for L in Ls:
            blk = by_key.get((*g, L, "all-at-once"))
            one = by_key.get((*g, L, "one-at-a-time"))
            if blk is None or one is None:
                continue
            pts.append((L, blk.mean_seconds / (one.mean_seconds / L)))
        out[g] = pts
    return out


def emit_plot(results, path) -> None:
    """Simple SVG of block/single time ratio versus block size, one polyline
    per (matrix, projector, dim_c) group."""
    ratios = block_single_ratios(results)
    width, height, pad = 640, 420, 50
    all_pts = [p for pts in ratios.values() for p in pts]
    if all_pts:
        lmax = max(p[0] for p in all_pts)
        rmax = max(max(p[1] for p in all_pts), 1.0)
    else:
        lmax, rmax = 1, 1.0

    def sx(L):
        return pad + (width - 2 * pad) * (L / max(lmax, 1))

    def sy(v):
        return height - pad - (height - 2 * pad) * (v / rmax)

    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{width // 2}" y="{height - 10}" font-size="12">block size L</text>',
        f'<text x="10" y="{pad - 10}" font-size="12">time(block L) / time(single)</text>',
    ]
    palette = ["black", "dimgray", "steelblue", "firebrick", "seagreen", "darkorange"]
    for idx, (g, pts) in enumerate(sorted(ratios.items())):
        if not pts:
            continue
        color = palette[idx % len(palette)]
        coords = " ".join(f"{sx(L):.1f},{sy(v):.1f}" for L, v in pts)
        lines.append(f'<polyline points="{coords}" fill="none" stroke="{color}"/>')
        label = f"{g[0]} proj={g[1]} dim_c={g[2]}"
        lines.append(
            f'<text x="{width - pad - 220}" y="{pad + 14 * (idx + 1)}" font-size="11" fill="{color}">{label}</text>'
        )
    lines.append("</svg>")
    with open(path, "wt", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_results_csv(path):
    """Round-trip parse of an emitted CSV back into BenchResult values."""
    out = []
    with open(path, "rt", newline="") as fh:
        rd = csv.DictReader(fh)
        for row in rd:
            out.append(
                BenchResult(
                    matrix_id=row["matrix_id"], n=int(row["n"]), nnz=int(row["nnz"]),
                    L=int(row["L"]), mode=row["mode"], projector=row["projector"],
                    dim_c=int(row["dim_c"]), reps=int(row["reps"]),
                    mean_seconds=float(row["mean_s"]), min_seconds=float(row["min_s"]),
                    stddev_seconds=float(row["stddev_s"]), bytes_model=int(row["bytes_model"]),
                )
            )
    return out
