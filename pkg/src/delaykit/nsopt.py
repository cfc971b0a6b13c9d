"""Nonsmooth local optimization.

BFGS with a weak Wolfe line search works well on nonsmooth functions that
are differentiable almost everywhere: the iterates approach kinks without
ever landing on them.  Termination uses the smallest vector in the convex
hull of recent gradients, a practical stand-in for Clarke stationarity.
An optional gradient-sampling phase polishes the result.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.optimize

from delaykit.errors import AllStartsFailed

__all__ = [
    "Objective",
    "NsoptOptions",
    "OptResult",
    "MultistartResult",
    "min_norm_convex",
    "bfgs_minimize",
    "gradient_sampling_refine",
    "multistart",
]

log = logging.getLogger(__name__)

# Radius (relative to max(1, |x|)) within which gradients form the stationarity bundle.
NEIGHBORHOOD = 1e-4

Objective = Callable[[np.ndarray], tuple[float, np.ndarray]]


@dataclass(frozen=True)
class NsoptOptions:
    maxit: int = 1000
    cpumax: float = math.inf
    fvalquit: float = -math.inf
    grad_norm_tol: float = 1e-6
    gradient_sampling: bool = False
    sample_radii: tuple[float, ...] = (1e-2, 1e-4, 1e-6)
    samples_per_iter: int | None = None
    print_level: int = 0
    seed: int = 0
    c1: float = 1e-4
    c2: float = 0.5
    max_linesearch: int = 50


@dataclass
class OptResult:
    x: np.ndarray
    f: float
    g: np.ndarray
    status: str
    iterations: int
    history: list[float] = field(default_factory=list)


@dataclass
class MultistartResult:
    x: np.ndarray
    f: float
    best_start: int
    log: list[OptResult]


def min_norm_convex(G: np.ndarray) -> np.ndarray:
    """Smallest-norm point in the convex hull of the columns of ``G``."""
    G = np.atleast_2d(G)
    k = G.shape[1]
    if k == 1:
        return G[:, 0].copy()
    # Simplex constraint enforced by a heavily weighted row of ones.
    big = 1e3 * max(1.0, float(np.abs(G).max()))
    Aug = np.vstack([G, big * np.ones((1, k))])
    rhs = np.concatenate([np.zeros(G.shape[0]), [big]])
    lam, _ = scipy.optimize.nnls(Aug, rhs)
    s = lam.sum()
    lam = lam / s if s > 0 else np.full(k, 1.0 / k)
    return G @ lam


def _evaluate(fun: Objective, x: np.ndarray) -> tuple[float, np.ndarray]:
    f, g = fun(x)
    f = float(f)
    g = np.asarray(g, dtype=float).reshape(x.shape)
    if math.isnan(f):
        f = math.inf
    return f, g


def _weak_wolfe(fun, x, f, g, d, c1, c2, maxit):
    """Bisection-bracketing weak Wolfe search; ``(t, f, g, ok)``."""
    gd = float(g @ d)
    lo, hi, t = 0.0, math.inf, 1.0
    best = None
    for _ in range(maxit):
        xt = x + t * d
        ft, gt = _evaluate(fun, xt)
        if not math.isfinite(ft) or ft > f + c1 * t * gd:
            hi = t
        else:
            if best is None or ft < best[1]:
                best = (t, ft, gt)
            if float(gt @ d) < c2 * gd:
                lo = t
            else:
                return t, ft, gt, True
        t = 0.5 * (lo + hi) if math.isfinite(hi) else 2.0 * lo
        if hi - lo < 1e-16 * max(1.0, hi) and math.isfinite(hi):
            break
    if best is not None:
        return best[0], best[1], best[2], False
    return 0.0, f, g, False


def bfgs_minimize(fun: Objective, x0, options: NsoptOptions = NsoptOptions()) -> OptResult:
    """Minimize ``fun`` (returning value and gradient) from ``x0``."""
    x = np.array(x0, dtype=float).reshape(-1)
    n = x.size
    f, g = _evaluate(fun, x)
    history = [f]
    if not math.isfinite(f):
        return OptResult(x, f, g, "infeasible_start", 0, history)
    if n == 0:
        return OptResult(x, f, g, "stationary", 0, history)
    H = np.eye(n)
    recent = [(x.copy(), g.copy())]
    start = time.process_time()
    status = "maxit"
    it = 0
    first = True
    for it in range(1, options.maxit + 1):
        if f <= options.fvalquit:
            status = "fvalquit"
            break
        if time.process_time() - start > options.cpumax:
            status = "cpumax"
            break
        d = -H @ g
        if not float(g @ d) < 0:
            H = np.eye(n)
            d = -g
        if np.linalg.norm(g) == 0:
            status = "stationary"
            break
        t, fn, gn, ok = _weak_wolfe(fun, x, f, g, d, options.c1, options.c2, options.max_linesearch)
        if t == 0.0:
            status = "linesearch_failed"
            break
        s = t * d
        y = gn - g
        x, f, g = x + s, fn, gn
        history.append(f)
        if options.print_level >= 2:
            log.info("iter %d: f = %.10g, |g| = %.3g", it, f, np.linalg.norm(g))
        sy = float(s @ y)
        if sy > 0:
            if first:
                H = np.eye(n) * (sy / float(y @ y))
                first = False
            rho = 1.0 / sy
            V = np.eye(n) - rho * np.outer(s, y)
            H = V @ H @ V.T + rho * np.outer(s, s)
        # Only gradients evaluated close to the current point count as a bundle.
        recent.append((x.copy(), g.copy()))
        radius = NEIGHBORHOOD * max(1.0, float(np.linalg.norm(x)))
        recent = [(xi, gi) for xi, gi in recent[-min(n, 10):] if np.linalg.norm(xi - x) <= radius]
        dnorm = np.linalg.norm(min_norm_convex(np.array([gi for _, gi in recent]).T))
        if np.linalg.norm(g) <= options.grad_norm_tol or dnorm <= options.grad_norm_tol:
            status = "stationary"
            break
        if not ok:
            status = "linesearch_failed"
            break
    return OptResult(x, f, g, status, it, history)


def gradient_sampling_refine(fun: Objective, x0, options: NsoptOptions = NsoptOptions()) -> OptResult:
    """Descend along minimum-norm sampled gradients over shrinking radii."""
    x = np.array(x0, dtype=float).reshape(-1)
    n = x.size
    f, g = _evaluate(fun, x)
    history = [f]
    if not math.isfinite(f) or n == 0:
        return OptResult(x, f, g, "infeasible_start" if n else "stationary", 0, history)
    rng = np.random.default_rng(options.seed)
    m = options.samples_per_iter or 2 * n
    it = 0
    for radius in options.sample_radii:
        eps = radius * (1.0 + np.linalg.norm(x))
        for _ in range(100):
            it += 1
            pts = rng.standard_normal((m, n))
            pts /= np.linalg.norm(pts, axis=1, keepdims=True)
            pts *= rng.random((m, 1)) ** (1.0 / n)
            grads = [g]
            for p in pts:
                fp, gp = _evaluate(fun, x + eps * p)
                if math.isfinite(fp):
                    grads.append(gp)
            d = -min_norm_convex(np.array(grads).T)
            dn = float(np.linalg.norm(d))
            if dn <= options.grad_norm_tol:
                break
            # Armijo backtracking along the sampled descent direction.
            t = 1.0
            accepted = False
            for _ in range(40):
                ft, gt = _evaluate(fun, x + t * d)
                if math.isfinite(ft) and ft < f - options.c1 * t * dn * dn:
                    accepted = True
                    break
                t *= 0.5
            if not accepted:
                break
            x, f, g = x + t * d, ft, gt
            history.append(f)
    return OptResult(x, f, g, "done", it, history)


def multistart(
    objective: Objective,
    initial_points: Sequence[np.ndarray] | None,
    nstart: int,
    options: NsoptOptions = NsoptOptions(),
    *,
    dim: int | None = None,
) -> MultistartResult:
    """Run BFGS (and optional gradient sampling) from several points; keep the best.

    Missing initial points are drawn as seeded standard-normal vectors.
    """
    if nstart < 1:
        raise ValueError("nstart must be at least 1")
    pts = [np.asarray(p, dtype=float).reshape(-1) for p in (initial_points or [])]
    if dim is None:
        if not pts:
            raise ValueError("dim is required without initial points")
        dim = pts[0].size
    rng = np.random.default_rng(options.seed)
    while len(pts) < nstart:
        pts.append(rng.standard_normal(dim))
    logs: list[OptResult] = []
    for i, x0 in enumerate(pts[:max(nstart, len(pts))]):
        res = bfgs_minimize(objective, x0, options)
        if options.gradient_sampling and math.isfinite(res.f):
            gs = gradient_sampling_refine(objective, res.x, options)
            if gs.f < res.f:
                res = OptResult(gs.x, gs.f, gs.g, res.status + "+gs", res.iterations + gs.iterations,
                                res.history + gs.history[1:])
        logs.append(res)
    finite = [i for i, r in enumerate(logs) if math.isfinite(r.f)]
    if not finite:
        raise AllStartsFailed("no start produced a finite objective value")
    best = min(finite, key=lambda i: (logs[i].f, i))
    return MultistartResult(logs[best].x, logs[best].f, best, logs)
