"""Row-restricted least squares and cheap spectral estimates.

The mixing step solves min_alpha |M alpha - r|_2 where M is a row subset of
the increment window. The factorization is a Householder QR without pivoting
(LAPACK, via numpy) recomputed at every mixing step; the triangular factor is
returned so the stability guard can reuse it.

The smallest singular value of the triangular factor is estimated by inverse
power iteration on R^T R. Each sweep costs two triangular solves, and the
estimate approaches sigma_min from above as the sweep count grows.
"""
from __future__ import annotations

import numpy as np
from scipy.linalg import solve_triangular

# Relative floor on |diag(R)| below which the factor is treated as singular.
RANK_RTOL = 1e-14


class RankDeficient(RuntimeError):
    """Triangular factor is numerically rank deficient."""


def _check_diag(r_factor: np.ndarray) -> None:
    d = np.abs(np.diagonal(r_factor))
    if d.size == 0:
        raise RankDeficient("empty factor")
    dmax = d.max()
    if dmax == 0.0 or d.min() < RANK_RTOL * dmax:
        raise RankDeficient(
            f"diagonal range [{d.min():.3e}, {dmax:.3e}] below relative "
            f"threshold {RANK_RTOL:g}"
        )


def qr_masked_solve(
    window: np.ndarray,
    rhs: np.ndarray,
    rows: np.ndarray | None,
    cols: int,
):
    """Solve the row-restricted least-squares problem of the mixing step.

    Parameters
    ----------
    window : (l1, m) ndarray
        Increment window; only the leading ``cols`` columns participate.
    rhs : (l1,) ndarray
        Restricted residual vector.
    rows : sorted int ndarray or None
        Row subset defining the restriction; None keeps every row.
    cols : int
        Number of filled window columns, 1 <= cols <= m.

    Returns
    -------
    alpha : (cols,) ndarray
        argmin_alpha |M alpha - r|_2 over the restricted system.
    r_factor : (cols, cols) ndarray
        R factor of the restricted matrix.

    The input window is never modified. Raises RankDeficient when the factor
    diagonal collapses below a relative threshold of 1e-14.
    """
    if cols < 1 or cols > window.shape[1]:
        raise ValueError(f"cols={cols} outside [1, {window.shape[1]}]")
    if rows is None:
        mat = window[:, :cols]
        r = rhs
    else:
        rows = np.asarray(rows)
        if rows.size < cols:
            raise ValueError(
                f"restricted system has {rows.size} rows for {cols} columns"
            )
        mat = window[rows, :cols]
        r = rhs[rows]
    q, r_factor = np.linalg.qr(mat, mode="reduced")
    _check_diag(r_factor)
    alpha = solve_triangular(
        r_factor, q.T @ r, lower=False, check_finite=False
    )
    if not np.isfinite(alpha).all():
        raise RankDeficient("least squares produced non-finite coefficients")
    return alpha, r_factor


def estimate_sigma_min(r_factor: np.ndarray, iterations: int = 3) -> float:
    """Estimate sigma_min(R) by inverse power iteration on R^T R.

    Starts from the normalized all-ones vector and runs ``iterations`` sweeps
    (1 to 5); each sweep solves R^T y = v and R w = y. Returns the square
    root of the resulting smallest-eigenvalue estimate of R^T R. The estimate
    is an upper bound on sigma_min and is non-increasing in the sweep count.
    """
    if not (1 <= iterations <= 5):
        raise ValueError("iterations must lie in [1, 5]")
    r_factor = np.asarray(r_factor)
    if r_factor.ndim != 2 or r_factor.shape[0] != r_factor.shape[1]:
        raise ValueError("r_factor must be square")
    _check_diag(r_factor)
    c = r_factor.shape[0]
    v = np.full(c, 1.0 / np.sqrt(c))
    theta = 1.0
    for _ in range(iterations):
        y = solve_triangular(r_factor, v, lower=False, trans="T")
        w = solve_triangular(r_factor, y, lower=False)
        theta = float(np.linalg.norm(w))
        if theta == 0.0:
            raise RankDeficient("inverse iteration collapsed to zero")
        v = w / theta
    return 1.0 / np.sqrt(theta)
