"""Dense float64 linear algebra with deterministic, self-contained kernels.

numpy arrays are the matrix carrier (row-major float64 throughout); matrix
products go through BLAS.  The decompositions themselves are implemented
here: a one-sided Jacobi SVD (high relative accuracy at desk scale, no
external LAPACK dependency in the algorithmic path) and a power iteration
for spectral norms with a gap-aware stopping rule.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .rng import RngState


class ShapeError(ValueError):
    """Raised when operand dimensions are incompatible."""


class ConvergenceError(RuntimeError):
    """Raised when an iterative kernel fails to reach its tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


def as_matrix(a) -> np.ndarray:
    """Coerce to a 2-D float64 array, rejecting anything else."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got ndim={m.ndim}")
    return m


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner dimensions differ: {a.shape} @ {b.shape}")
    return a @ b


def sample_gaussian(rng: RngState, rows: int, cols: int, std: float) -> np.ndarray:
    """rows x cols matrix of N(0, std^2) entries."""
    if rows <= 0 or cols <= 0:
        raise ShapeError(f"matrix dims must be positive, got {rows}x{cols}")
    if std < 0:
        raise ValueError(f"std must be nonnegative, got {std}")
    return rng.normal((rows, cols), std=std)


def sample_uniform(rng: RngState, rows: int, cols: int, bound: float) -> np.ndarray:
    """rows x cols matrix of U(-bound, bound] entries."""
    if rows <= 0 or cols <= 0:
        raise ShapeError(f"matrix dims must be positive, got {rows}x{cols}")
    if bound < 0:
        raise ValueError(f"bound must be nonnegative, got {bound}")
    return rng.uniform((rows, cols), -bound, bound)


# ---- SVD (one-sided Jacobi) ----


def _jacobi_orthogonalize(wr: np.ndarray, vr: np.ndarray, max_sweeps: int, tol: float):
    """One-sided Jacobi on wr, whose ROWS are the columns of the working
    matrix (contiguous in memory).  Rotates row pairs of wr (mirrored in vr)
    in cyclic order until every pairwise Gram entry satisfies
    |g_ij| <= tol*sqrt(g_ii*g_jj).
    """
    n = wr.shape[0]
    if n < 2:
        return
    norms2 = np.einsum("ij,ij->i", wr, wr)
    last_off = 0.0
    for _ in range(max_sweeps):
        rotated = False
        last_off = 0.0
        for i in range(n - 1):
            wi_row = wr[i]
            vi_row = vr[i]
            for j in range(i + 1, n):
                gii = norms2[i]
                gjj = norms2[j]
                wj_row = wr[j]
                gij = float(wi_row @ wj_row)
                denom = math.sqrt(gii * gjj)
                off = 0.0 if denom == 0.0 else abs(gij) / denom
                if off > last_off:
                    last_off = off
                if abs(gij) <= tol * denom:
                    continue
                rotated = True
                # Rotation angle zeroing the (i, j) Gram entry.
                tau = (gjj - gii) / (2.0 * gij)
                t = 1.0 if tau == 0.0 else math.copysign(1.0, tau) / (abs(tau) + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = c * t
                wi = wi_row.copy()
                np.multiply(wj_row, -s, out=wi_row)
                wi_row += c * wi
                wj_row *= c
                wj_row += s * wi
                vi = vi_row.copy()
                vj_row = vr[j]
                np.multiply(vj_row, -s, out=vi_row)
                vi_row += c * vi
                vj_row *= c
                vj_row += s * vi
                # Rotated diagonal Gram entries have a closed form.
                norms2[i] = gii - t * gij
                norms2[j] = gjj + t * gij
        if not rotated:
            return
        # Recompute cached norms once per sweep to stop drift.
        norms2 = np.einsum("ij,ij->i", wr, wr)
    raise ConvergenceError(
        f"jacobi SVD did not converge in {max_sweeps} sweeps", residual=last_off
    )


def _complete_basis(u: np.ndarray, start: int) -> None:
    """Fill u[:, start:] with unit vectors orthogonal to the earlier columns."""
    m = u.shape[0]
    col = start
    for k in range(m):
        if col >= u.shape[1]:
            break
        cand = np.zeros(m)
        cand[k] = 1.0
        # Two Gram-Schmidt passes; one is not always enough in float64.
        cand -= u[:, :col] @ (u[:, :col].T @ cand)
        cand -= u[:, :col] @ (u[:, :col].T @ cand)
        nrm = np.linalg.norm(cand)
        if nrm > 1e-6:
            u[:, col] = cand / nrm
            col += 1
    if col < u.shape[1]:
        raise ConvergenceError("failed to complete an orthonormal basis")


def svd(a, max_sweeps: int = 60, tol: float = 1e-12):
    """Thin SVD a = U @ diag(s) @ V.T with s sorted descending.

    The one-sided Jacobi sweep rotates the working matrix's columns until
    mutually orthogonal, their norms becoming the singular values.  Zero
    singular values get basis-completed U columns so U and V always have
    orthonormal columns.
    """
    a = as_matrix(a)
    if a.size == 0:
        raise ShapeError("svd of an empty matrix")
    if not np.isfinite(a).all():
        raise ValueError("svd input contains non-finite entries")
    transposed = a.shape[0] < a.shape[1]
    tall = a.T if transposed else a
    # wr rows are the working matrix's columns, kept contiguous for speed.
    wr = np.array(tall.T, dtype=np.float64, order="C", copy=True)
    n, m = wr.shape
    vr = np.eye(n)
    _jacobi_orthogonalize(wr, vr, max_sweeps, tol)
    s = np.sqrt(np.einsum("ij,ij->i", wr, wr))
    order = np.argsort(-s, kind="stable")
    s = s[order]
    wr = wr[order]
    v = vr[order].T.copy()
    rank = int(np.searchsorted(-s, 0.0))  # first exact zero
    u = np.empty((m, n))
    for k in range(rank):
        u[:, k] = wr[k] / s[k]
    if rank < n:
        _complete_basis(u, rank)
    if transposed:
        return v, s, u
    return u, s, v


def sigma_min(a) -> float:
    """Smallest singular value (of min(m, n) values) of a."""
    _, s, _ = svd(a)
    return float(s[-1])


class PowerIterResult(NamedTuple):
    value: float
    converged: bool
    iterations: int


def power_iteration(a, tol: float = 1e-12, max_iters: int = 20000) -> PowerIterResult:
    """Largest singular value of a by power iteration on a.T @ a.

    The Rayleigh quotient sequence lambda_k converges geometrically with
    ratio (sigma_2/sigma_1)^2; the loop stops once the extrapolated
    remaining error (from the observed ratio) drops below tol * lambda_k.
    Returns the best estimate and a convergence flag on stall.
    """
    a = as_matrix(a)
    if not np.isfinite(a).all():
        raise ValueError("power iteration input contains non-finite entries")
    m, n = a.shape
    if n > m:
        a = a.T
        m, n = n, m
    # Deterministic pseudo-random start keyed on the shape only.
    v = RngState(0x5EED).derive(("power", m, n)).normal((n,))
    v /= np.linalg.norm(v)
    lam_prev = 0.0
    delta_prev = np.inf
    for it in range(1, max_iters + 1):
        u = a @ v
        v = a.T @ u
        lam = float(np.linalg.norm(v))  # |A^T A v| with |v|=1 -> lambda estimate
        if lam == 0.0:
            return PowerIterResult(0.0, True, it)
        v /= lam
        delta = abs(lam - lam_prev)
        if it >= 3 and delta_prev > 0.0:
            ratio = delta / delta_prev
            if ratio < 1.0:
                est_err = delta * ratio / (1.0 - ratio)
            else:
                est_err = delta
            if est_err <= tol * lam and delta <= np.sqrt(tol) * lam:
                return PowerIterResult(float(np.sqrt(lam)), True, it)
        elif delta == 0.0 and it >= 2:
            return PowerIterResult(float(np.sqrt(lam)), True, it)
        lam_prev = lam
        delta_prev = delta
    return PowerIterResult(float(np.sqrt(lam_prev)), False, max_iters)


def spectral_norm(a, tol: float = 1e-12, max_iters: int = 20000) -> float:
    """Largest singular value; see power_iteration for the stopping rule."""
    return power_iteration(a, tol=tol, max_iters=max_iters).value


def linear_fit(xs, ys):
    """Ordinary least squares line fit.

    Returns (slope, intercept, residual) where residual is the root mean
    square of the fit errors.  Requires at least two distinct x values.
    """
    x = np.asarray(xs, dtype=np.float64).ravel()
    y = np.asarray(ys, dtype=np.float64).ravel()
    if x.size != y.size:
        raise ShapeError(f"xs and ys differ in length: {x.size} vs {y.size}")
    if x.size < 2 or np.ptp(x) == 0.0:
        raise ValueError("linear_fit needs >= 2 points with distinct x values")
    xm = x.mean()
    ym = y.mean()
    dx = x - xm
    slope = float(dx @ (y - ym) / (dx @ dx))
    intercept = float(ym - slope * xm)
    resid = y - (slope * x + intercept)
    rms = float(np.sqrt(np.mean(resid * resid)))
    return slope, intercept, rms
