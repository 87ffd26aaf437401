"""Gradient-domain fusion: keep the local result's gradients inside the
lung mask, pin everything else to the global result.

The discrete problem is the 5-point Poisson equation on the mask interior
with Dirichlet data from the global image. Mask pixels on the image border
are treated as boundary, so every unknown has exactly 4 in-grid neighbors
and the system is symmetric positive definite. Solved with
Jacobi-preconditioned conjugate gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ConvergenceError

DEFAULT_TOL = 1e-8
_SHIFTS = ((-1, 0), (1, 0), (0, -1), (0, 1))


@dataclass(frozen=True)
class LaplacianSystem:
    """5-point Laplacian over the mask interior, with Dirichlet boundary
    already folded into the right-hand side."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    rows: np.ndarray  # interior pixel coordinates
    cols: np.ndarray
    shape: tuple[int, int]

    @property
    def unknowns(self) -> int:
        return self.rhs.size


@dataclass(frozen=True)
class CGResult:
    x: np.ndarray
    iterations: int
    relative_residual: float


def interior_pixels(mask: np.ndarray) -> np.ndarray:
    """Mask pixels excluding the image border (boundary stays Dirichlet)."""
    interior = np.zeros(mask.shape, dtype=bool)
    interior[1:-1, 1:-1] = mask[1:-1, 1:-1]
    return interior


def build_system(s_g: np.ndarray, s_l: np.ndarray,
                 mask: np.ndarray) -> LaplacianSystem:
    if s_g.shape != s_l.shape or s_g.shape != mask.shape:
        raise ValueError(
            f"dimension mismatch: global {s_g.shape}, local {s_l.shape}, "
            f"mask {mask.shape}"
        )
    interior = interior_pixels(mask.astype(bool))
    iy, ix = np.nonzero(interior)
    n = iy.size
    ids = np.full(mask.shape, -1, dtype=np.int64)
    ids[iy, ix] = np.arange(n)

    # 5-point Laplacian of the local image drives the interior gradients.
    rhs = 4.0 * s_l[iy, ix]
    entry_rows = [np.arange(n)]
    entry_cols = [np.arange(n)]
    entry_vals = [np.full(n, 4.0)]
    for dy, dx in _SHIFTS:
        qy, qx = iy + dy, ix + dx
        rhs -= s_l[qy, qx]
        qid = ids[qy, qx]
        inside = qid >= 0
        entry_rows.append(np.arange(n)[inside])
        entry_cols.append(qid[inside])
        entry_vals.append(np.full(int(inside.sum()), -1.0))
        outside = ~inside
        np.add.at(rhs, np.arange(n)[outside], s_g[qy[outside], qx[outside]])

    matrix = sp.coo_matrix(
        (np.concatenate(entry_vals),
         (np.concatenate(entry_rows), np.concatenate(entry_cols))),
        shape=(n, n),
    ).tocsr()
    return LaplacianSystem(matrix=matrix, rhs=rhs, rows=iy, cols=ix,
                           shape=s_g.shape)


def cg_solve(matrix, rhs: np.ndarray, tol: float = DEFAULT_TOL,
             max_iter: int | None = None, x0: np.ndarray | None = None) -> CGResult:
    """Jacobi-preconditioned CG to relative residual <= tol.

    Raises ConvergenceError (with the residual history) when max_iter is
    exhausted.
    """
    if tol <= 0.0:
        raise ValueError(f"tolerance must be positive, got {tol}")
    n = rhs.size
    if max_iter is None:
        max_iter = max(10 * n, 50)
    rhs_norm = float(np.linalg.norm(rhs))
    if rhs_norm == 0.0:
        return CGResult(np.zeros(n), 0, 0.0)
    inv_diag = 1.0 / matrix.diagonal()
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64)
    r = rhs - matrix @ x
    residuals = [float(np.linalg.norm(r))]
    if residuals[-1] <= tol * rhs_norm:
        return CGResult(x, 0, residuals[-1] / rhs_norm)
    z = inv_diag * r
    p = z.copy()
    rz = float(r @ z)
    for k in range(1, max_iter + 1):
        ap = matrix @ p
        alpha = rz / float(p @ ap)
        x += alpha * p
        r -= alpha * ap
        res = float(np.linalg.norm(r))
        residuals.append(res)
        if res <= tol * rhs_norm:
            return CGResult(x, k, res / rhs_norm)
        z = inv_diag * r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise ConvergenceError(
        f"CG did not reach tol {tol} in {max_iter} iterations "
        f"(final relative residual {residuals[-1] / rhs_norm:.3e})",
        residuals=residuals,
    )


def poisson_fuse(s_g: np.ndarray, s_l: np.ndarray, mask: np.ndarray,
                 tol: float = DEFAULT_TOL, max_iter: int | None = None,
                 clip: bool = True) -> np.ndarray:
    """Fused image: global values outside the mask interior (bit-exact),
    local-gradient Poisson solution inside, clamped to [0, 1] on output.

    The solve warm-starts from the local image, so agreeing inputs return
    immediately.
    """
    system = build_system(s_g, s_l, mask)
    out = s_g.copy()
    if system.unknowns == 0:
        return out
    result = cg_solve(system.matrix, system.rhs, tol=tol, max_iter=max_iter,
                      x0=s_l[system.rows, system.cols])
    values = np.clip(result.x, 0.0, 1.0) if clip else result.x
    out[system.rows, system.cols] = values
    return out
