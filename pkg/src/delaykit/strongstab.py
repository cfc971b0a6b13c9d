"""Strong stability of neutral-type systems.

``gamma(r)`` is the worst spectral radius of the damped difference-part
coefficient sum over all phase combinations; its unit crossing ``C_D`` bounds
the real parts of the high-frequency root chains under infinitesimal delay
perturbations.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from delaykit.model import Classification, DelayDifferencePart, TdsSystem, delay_difference_part
from delaykit.spectrum import HalfPlane, RootsOptions, roots

__all__ = [
    "GammaROptions",
    "CdOptions",
    "GammaMax",
    "gamma_r",
    "gamma_r_detail",
    "cd",
    "strong_sa",
]

CORRECTION_RESIDUAL = 1e-8
STRONG_GUARD = 1e-6
# e^{-r h} beyond this exponent overflows; no unit crossing exists further left.
MAX_EXPONENT = 700.0


@dataclass(frozen=True)
class GammaROptions:
    Ntheta: int = 10
    quiet: bool = False


@dataclass(frozen=True)
class CdOptions:
    tol: float = 1e-10
    Ntheta: int = 10
    CD0: float = 0.0
    quiet: bool = False


@dataclass(frozen=True)
class GammaMax:
    """Maximizer of the spectral radius: value, phases and the eigen-triplet."""

    value: float
    theta: np.ndarray
    eigenvalue: complex
    right: np.ndarray
    left: np.ndarray


def _coefficients(part: DelayDifferencePart) -> tuple[np.ndarray, np.ndarray]:
    terms = part.normalized()
    if not terms:
        return np.zeros((0, part.nu, part.nu)), np.zeros(0)
    return np.array([m for m, _ in terms]), np.array([h for _, h in terms])


def _triplet(T: np.ndarray) -> tuple[complex, np.ndarray, np.ndarray]:
    w, vl, vr = _eig_lr(T)
    i = int(np.argmax(np.abs(w)))
    return complex(w[i]), vr[:, i], vl[:, i]


def _eig_lr(T):
    import scipy.linalg

    w, vl, vr = scipy.linalg.eig(T, left=True, right=True)
    return w, vl, vr


def _sum(Ms: np.ndarray, damp: np.ndarray, theta: np.ndarray) -> np.ndarray:
    return np.tensordot(damp * np.exp(1j * theta), Ms, axes=1)


def _gauss_newton(Ms, damp, theta0, lam0, v0, u0, seed: int = 0):
    """Refine a stationary point of ``|lambda(theta)|`` (theta_1 pinned to 0).

    Unknowns are ``v``, ``w = conj(u)``, ``lambda`` and ``theta_2..theta_m``;
    residuals are the right/left eigen-equations, two normalizations and the
    phase-stationarity conditions, stacked as real and imaginary parts.
    """
    m, nu = Ms.shape[0], Ms.shape[1]
    nt = m - 1
    rng = np.random.default_rng(seed)
    c = rng.standard_normal(nu) + 1j * rng.standard_normal(nu)
    c /= np.linalg.norm(c)
    v = v0 / np.vdot(c, v0)
    w = u0.conj()
    w = w / (w @ v)
    lam = lam0
    theta = theta0.astype(float).copy()
    Mt = Ms * damp[:, None, None]

    def residual(v, w, lam, theta):
        T = _sum(Ms, damp, theta)
        g = np.array([w @ Mt[k] @ v * np.exp(1j * theta[k]) for k in range(1, m)])
        return (
            np.concatenate([
                T @ v - lam * v,
                T.T @ w - lam * w,
                [np.vdot(c, v) - 1.0, w @ v - 1.0],
            ]),
            np.imag(np.conj(lam) * g),
            T, g,
        )

    best = None
    for _ in range(30):
        Rc, Rr, T, g = residual(v, w, lam, theta)
        res = float(np.sqrt(np.linalg.norm(Rc) ** 2 + np.linalg.norm(Rr) ** 2))
        if best is None or res < best[0]:
            best = (res, theta.copy(), lam)
        if res <= 1e-14:
            break
        nc_rows = Rc.size
        ncols = 4 * nu + 2 + nt
        Jc = np.zeros((nc_rows, ncols), dtype=complex)
        I = np.eye(nu)
        # Columns: [v (complex, nu) | w (complex, nu) | lambda (complex)] as holomorphic derivatives.
        Jc[:nu, :nu] = T - lam * I
        Jc[:nu, 2 * nu] = -v
        Jc[nu:2 * nu, nu:2 * nu] = T.T - lam * I
        Jc[nu:2 * nu, 2 * nu] = -w
        Jc[2 * nu, :nu] = c.conj()
        Jc[2 * nu + 1, :nu] = w
        Jc[2 * nu + 1, nu:2 * nu] = v
        Jtheta = np.zeros((nc_rows, nt), dtype=complex)
        for k in range(1, m):
            dT = 1j * Mt[k] * np.exp(1j * theta[k])
            Jtheta[:nu, k - 1] = dT @ v
            Jtheta[nu:2 * nu, k - 1] = dT.T @ w
        hol = Jc[:, :2 * nu + 1]
        # Real Jacobian: d/dx = J, d/dy = j J for each complex unknown.
        Jreal_c = np.hstack([hol, 1j * hol, Jtheta])
        Jr = np.zeros((nt, 2 * (2 * nu + 1) + nt))
        for k in range(1, m):
            e = np.exp(1j * theta[k])
            gv = (w @ Mt[k]) * e
            gw = (Mt[k] @ v) * e
            cl = np.conj(lam)
            row = np.zeros(2 * (2 * nu + 1) + nt)
            hol_row = np.concatenate([cl * gv, cl * gw, [0.0]])
            row[: 2 * nu + 1] = np.imag(hol_row)
            row[2 * nu + 1: 2 * (2 * nu + 1)] = np.imag(1j * hol_row)
            gk = g[k - 1]
            row[2 * nu] = np.imag(gk)
            row[2 * (2 * nu + 1) - 1] = -np.real(gk)
            row[2 * (2 * nu + 1) + k - 1] = np.imag(cl * 1j * gk)
            Jr[k - 1] = row
        J = np.vstack([Jreal_c.real, Jreal_c.imag, Jr])
        R = np.concatenate([Rc.real, Rc.imag, Rr])
        step = np.linalg.lstsq(J, -R, rcond=None)[0]
        nz = 2 * nu + 1
        dz = step[:nz] + 1j * step[nz:2 * nz]
        v = v + dz[:nu]
        w = w + dz[nu:2 * nu]
        lam = lam + dz[2 * nu]
        theta[1:] = theta[1:] + step[2 * nz:]
        if not (np.isfinite(lam) and np.all(np.isfinite(theta))):
            break
    return best


def gamma_r_detail(part: DelayDifferencePart, r: float, options: GammaROptions = GammaROptions()) -> GammaMax:
    """gamma(r) with its maximizing phases and eigenvectors."""
    Ms, h = _coefficients(part)
    nu = part.nu
    if Ms.shape[0] == 0 or nu == 0:
        return GammaMax(0.0, np.zeros(0), 0j, np.zeros(nu, complex), np.zeros(nu, complex))
    with np.errstate(over="ignore"):
        damp = np.exp(-r * h)
    if not np.all(np.isfinite(damp)):
        return GammaMax(math.inf, np.zeros(len(h)), complex(math.inf), np.zeros(nu, complex), np.zeros(nu, complex))
    m = Ms.shape[0]
    if m == 1:
        T = Ms[0] * damp[0]
        lam, vr, vl = _triplet(T)
        return GammaMax(abs(lam), np.zeros(1), lam, vr, vl)
    grid = 2 * np.pi * np.arange(options.Ntheta) / options.Ntheta
    combos = np.array(list(itertools.product(grid, repeat=m - 1)))
    thetas = np.hstack([np.zeros((combos.shape[0], 1)), combos])
    Ts = np.einsum("gk,kij->gij", damp[None, :] * np.exp(1j * thetas), Ms)
    rho = np.abs(np.linalg.eigvals(Ts)).max(axis=1)
    ibest = int(np.argmax(rho))
    theta = thetas[ibest]
    grid_val = float(rho[ibest])
    lam, vr, vl = _triplet(_sum(Ms, damp, theta))
    best = GammaMax(grid_val, theta, lam, vr, vl)
    if grid_val == 0.0:
        return best
    # Real coefficients make theta = 0 stationary by conjugate symmetry even when it
    # is a saddle, so Gauss-Newton also starts half a grid step off the grid maximum.
    half = np.pi / options.Ntheta
    starts = [theta]
    for k in range(1, m):
        for sgn in (1.0, -1.0):
            t = theta.copy()
            t[k] += sgn * half
            starts.append(t)
    for t0 in starts:
        l0, v0, u0 = _triplet(_sum(Ms, damp, t0))
        res, th, _ = _gauss_newton(Ms, damp, t0, l0, v0, u0)
        if res > CORRECTION_RESIDUAL:
            continue
        th = np.concatenate([[0.0], np.mod(th[1:], 2 * np.pi)])
        lam2, vr2, vl2 = _triplet(_sum(Ms, damp, th))
        if abs(lam2) >= best.value - 1e-12:
            best = GammaMax(max(abs(lam2), best.value), th, lam2, vr2, vl2)
    return best


def gamma_r(part: DelayDifferencePart, r: float, options: GammaROptions = GammaROptions()) -> float:
    return gamma_r_detail(part, r, options).value


def cd(part: DelayDifferencePart, options: CdOptions = CdOptions()) -> float:
    """Unique ``r`` with ``gamma(r) = 1``; ``-inf`` for essentially retarded parts."""
    if part.classification is Classification.ESSENTIALLY_RETARDED:
        return -math.inf
    Ms, h = _coefficients(part)
    if Ms.shape[0] == 1:
        rho = float(np.max(np.abs(np.linalg.eigvals(Ms[0]))))
        if rho == 0:
            return -math.inf
        if h[0] == 0:
            # Infinitesimal delay: the chain sits at log(rho) / 0+.
            return math.inf if rho > 1 else -math.inf
        return math.log(rho) / h[0]
    gopt = GammaROptions(Ntheta=options.Ntheta, quiet=options.quiet)
    hmax = float(h.max())

    def f(r):
        g = gamma_r(part, r, gopt)
        return math.log(g) if g > 0 else -math.inf

    lo, hi = options.CD0 - 1.0, options.CD0 + 1.0
    flo, fhi = f(lo), f(hi)
    width = 1.0
    for _ in range(60):
        if flo > 0:
            break
        if -lo * hmax > MAX_EXPONENT:
            return -math.inf
        hi, fhi = lo, flo
        width *= 2
        lo = lo - width
        flo = f(lo)
    else:
        return -math.inf
    width = 1.0
    for _ in range(60):
        if fhi < 0:
            break
        lo, flo = hi, fhi
        width *= 2
        hi = hi + width
        fhi = f(hi)
    if not (flo > 0 and fhi < 0):
        return -math.inf if flo <= 0 else math.inf
    # Illinois regula falsi on log(gamma), which is close to linear in r.
    side = 0
    for _ in range(200):
        if hi - lo <= options.tol:
            break
        if math.isinf(fhi):
            mid = 0.5 * (lo + hi)
        else:
            mid = (lo * fhi - hi * flo) / (fhi - flo)
            if not lo < mid < hi:
                mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0:
            return mid
        if fm > 0:
            lo, flo = mid, fm
            if side == -1:
                fhi *= 0.5
            side = -1
        else:
            hi, fhi = mid, fm
            if side == 1:
                flo *= 0.5
            side = 1
    return 0.5 * (lo + hi)


def strong_sa(
    system: TdsSystem,
    r: float,
    options: RootsOptions = RootsOptions(),
    cd_options: CdOptions = CdOptions(),
) -> float:
    """Strong spectral abscissa: ``max(C_D, c)`` with roots taken right of ``max(r, C_D)``."""
    part = delay_difference_part(system)
    c_d = cd(part, cd_options)
    if c_d == math.inf:
        return math.inf
    r_eff = max(r, c_d + STRONG_GUARD)
    rts = roots(system, HalfPlane(r_eff), options).roots
    c = float(np.max(rts.real)) if rts.size else -math.inf
    return max(c_d, c)
