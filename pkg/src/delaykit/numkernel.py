"""Dense linear-algebra and collocation primitives."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from delaykit.errors import IterationFailure, OutOfInterval

__all__ = [
    "EigResult",
    "generalized_eigs",
    "nullspace_split",
    "ChebGrid",
    "cheb_grid",
    "interp_row",
    "barycentric_eval",
]

EPS = np.finfo(float).eps


@dataclass(frozen=True)
class EigResult:
    """Finite generalized eigenvalues with unit-norm eigenvectors (as columns)."""

    values: np.ndarray
    right: np.ndarray
    left: np.ndarray | None
    n_infinite: int


def generalized_eigs(S: np.ndarray, P: np.ndarray, *, left: bool = False) -> EigResult:
    """Finite eigenvalues of the pencil ``S v = lambda P v`` via QZ.

    Eigenvalues whose homogeneous coordinate ``beta`` is negligible relative
    to ``alpha`` are treated as infinite and only counted.
    """
    S = np.asarray(S)
    P = np.asarray(P)
    if S.shape != P.shape or S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError("S and P must be square matrices of equal size")
    if S.shape[0] == 0:
        empty = np.zeros((0, 0), complex)
        return EigResult(np.zeros(0, complex), empty, empty if left else None, 0)
    # A standard problem (P = I) is markedly cheaper than QZ.
    Pm = None if np.array_equal(P, np.eye(P.shape[0])) else P
    try:
        out = scipy.linalg.eig(S, Pm, left=left, right=True, homogeneous_eigvals=True,
                               check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise IterationFailure(f"QZ iteration failed: {exc}") from exc
    if left:
        (alpha, beta), vl, vr = out
    else:
        (alpha, beta), vr = out
        vl = None
    finite = np.abs(beta) > 1e3 * EPS * np.abs(alpha)
    vals = alpha[finite] / beta[finite]
    vr = vr[:, finite]
    vr = vr / np.linalg.norm(vr, axis=0, keepdims=True)
    if vl is not None:
        vl = vl[:, finite]
        vl = vl / np.linalg.norm(vl, axis=0, keepdims=True)
    return EigResult(vals, vr, vl, int(np.count_nonzero(~finite)))


def nullspace_split(E: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, int]:
    """Orthonormal bases ``(U, Uperp, V, Vperp, rank)`` with ``U^T E = 0``, ``E V = 0``.

    When the null spaces are spanned by coordinate vectors (zero rows and
    columns of ``E``) those are used, which keeps exact zero blocks exact.
    """
    E = np.asarray(E, dtype=float)
    n = E.shape[0]
    if E.shape != (n, n):
        raise ValueError("E must be square")
    if n == 0:
        z = np.zeros((0, 0))
        return z, z, z, z, 0
    W, sv, Zt = np.linalg.svd(E)
    tol = n * (sv[0] if sv.size else 0.0) * EPS * 64
    rank = int(np.count_nonzero(sv > tol))
    nu = n - rank
    zero_cols = np.flatnonzero(~E.any(axis=0))
    zero_rows = np.flatnonzero(~E.any(axis=1))
    eye = np.eye(n)
    if zero_cols.size == nu and zero_rows.size == nu:
        V = eye[:, zero_cols]
        Vp = eye[:, np.setdiff1d(np.arange(n), zero_cols)]
        U = eye[:, zero_rows]
        Up = eye[:, np.setdiff1d(np.arange(n), zero_rows)]
        return U, Up, V, Vp, rank
    return W[:, rank:], W[:, :rank], Zt[rank:].T, Zt[:rank].T, rank


@dataclass(frozen=True)
class ChebGrid:
    """Chebyshev extreme points on ``[a, b]``, ordered from ``b`` down to ``a``."""

    degree: int
    interval: tuple[float, float]
    points: np.ndarray
    diff: np.ndarray
    weights: np.ndarray


def cheb_grid(N: int, interval: tuple[float, float] = (-1.0, 1.0)) -> ChebGrid:
    a, b = map(float, interval)
    if N < 1:
        raise ValueError("degree must be at least 1")
    if not b > a:
        raise ValueError("interval must be non-degenerate")
    j = np.arange(N + 1)
    x = np.cos(np.pi * j / N)
    c = np.ones(N + 1)
    c[0] = c[-1] = 2.0
    c *= (-1.0) ** j
    dX = x[:, None] - x[None, :]
    D = np.outer(c, 1.0 / c) / (dX + np.eye(N + 1))
    D -= np.diag(D.sum(axis=1))
    scale = 2.0 / (b - a)
    pts = a + (b - a) * (x + 1.0) / 2.0
    pts[0], pts[-1] = b, a
    w = (-1.0) ** j
    w[0] *= 0.5
    w[-1] *= 0.5
    return ChebGrid(N, (a, b), pts, D * scale, w)


def interp_row(grid: ChebGrid, theta: float) -> np.ndarray:
    """Lagrange basis values ``l_j(theta)`` so that ``p(theta) = row @ samples``."""
    a, b = grid.interval
    span = b - a
    if theta < a - 1e-14 * max(1.0, span) or theta > b + 1e-14 * max(1.0, span):
        raise OutOfInterval(f"theta={theta} outside [{a}, {b}]")
    theta = min(max(theta, a), b)
    diff = theta - grid.points
    row = np.zeros(grid.degree + 1)
    hit = np.flatnonzero(diff == 0)
    if hit.size:
        row[hit[0]] = 1.0
        return row
    t = grid.weights / diff
    return t / t.sum()


def barycentric_eval(grid: ChebGrid, samples, theta: float):
    """Evaluate the interpolating polynomial through ``samples`` (first axis = nodes)."""
    samples = np.asarray(samples)
    if samples.shape[0] != grid.degree + 1:
        raise ValueError("one sample per grid point is required")
    return np.tensordot(interp_row(grid, theta), samples, axes=(0, 0))
