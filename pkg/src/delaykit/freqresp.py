"""Frequency response and the strong H-infinity norm.

The norm is the larger of a finite-frequency peak, located by a level-set
iteration on a fixed-degree collocation approximation and then corrected on
the exact transfer function, and the asymptotic norm, which is the
worst-case gain of the high-frequency limit over all delay phases.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from delaykit import nsopt, numkernel
from delaykit.errors import NotStronglyStableDifference, SingularA22, SingularAtS
from delaykit.model import (
    Classification,
    Kind,
    StandardForm,
    TdsSystem,
    asymptotic_transfer_function,
    delay_difference_part,
    standard_form,
    to_ddae,
)
from delaykit.spectrum import HalfPlane, RootsOptions, discretize, roots
from delaykit.strongstab import CdOptions, cd, gamma_r

__all__ = [
    "HinfOptions",
    "HinfResult",
    "TransferEvaluator",
    "transfer_eval",
    "sigma",
    "hinf_asymptotic",
    "hinfnorm",
    "is_strongly_stable",
]

# Largest number of phase-grid points before the per-axis count is reduced.
MAX_THETA_GRID = 100_000


@dataclass(frozen=True)
class HinfOptions:
    Ntheta: int = 20
    fix_N: int = 20
    omega_init: tuple[float, ...] = (0.0,)
    pred_tol: float = 1e-3
    newton_tol: float = 1e-6
    roots: RootsOptions = field(default_factory=lambda: RootsOptions(quiet=True))


@dataclass(frozen=True)
class HinfResult:
    hinf: float
    wpeak: float
    asymptotic_norm: float
    theta: np.ndarray | None = None
    finite_peak: float = 0.0
    finite_omega: float = math.nan


class TransferEvaluator:
    """Evaluates ``T(s) = C (s E - sum A_k e^{-s h_k})^{-1} B`` on a standard form."""

    def __init__(self, sf: StandardForm) -> None:
        self.sf = sf
        n = sf.E.shape[0]
        self.E = np.asarray(sf.E)
        self.A = np.array(sf.A.matrices).reshape(-1, n, n)
        self.h = np.asarray(sf.A.delays)
        self.B = np.asarray(sf.B, dtype=complex)
        self.C = np.asarray(sf.C, dtype=complex)

    @classmethod
    def of(cls, system: TdsSystem) -> TransferEvaluator:
        return cls(standard_form(system))

    def K(self, s: complex) -> np.ndarray:
        return s * self.E - np.tensordot(np.exp(-s * self.h), self.A, axes=1)

    def solves(self, s: complex) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(T, K^{-1} B, C K^{-1})`` at ``s``."""
        K = self.K(s)
        try:
            lu = np.linalg.solve(K, self.B)
            ru = np.linalg.solve(K.T, self.C.T).T
        except np.linalg.LinAlgError as exc:
            raise SingularAtS(f"characteristic matrix singular at s = {s}") from exc
        if not (np.all(np.isfinite(lu)) and np.all(np.isfinite(ru))):
            raise SingularAtS(f"characteristic matrix singular at s = {s}")
        if np.linalg.cond(K) > 1e15:
            raise SingularAtS(f"characteristic matrix singular at s = {s}")
        return self.C @ lu, lu, ru

    def __call__(self, s: complex) -> np.ndarray:
        return self.solves(s)[0]

    def derivative(self, s: complex) -> tuple[np.ndarray, np.ndarray]:
        """``(T(s), dT/ds)``."""
        T, KB, CK = self.solves(s)
        dK = self.E + np.tensordot(self.h * np.exp(-s * self.h), self.A, axes=1)
        return T, -CK @ dK @ KB

    def top_triplet(self, omega: float):
        """Largest singular value at ``j omega`` with vectors and the solves used."""
        T, KB, CK = self.solves(1j * omega)
        U, S, Vh = np.linalg.svd(T)
        return S[0], U[:, 0], Vh[0].conj(), KB, CK, S

    def sigma_max(self, omega: float) -> float:
        return float(np.linalg.svd(self(1j * omega), compute_uv=False)[0])

    def dsigma(self, omega: float) -> tuple[float, float]:
        s0, u, v, KB, CK, _ = self.top_triplet(omega)
        s = 1j * omega
        dK = self.E + np.tensordot(self.h * np.exp(-s * self.h), self.A, axes=1)
        dT = -CK @ dK @ KB * 1j
        return float(s0), float(np.real(np.vdot(u, dT @ v)))


def transfer_eval(system: TdsSystem, s: complex) -> np.ndarray:
    """Transfer matrix ``w -> z`` at ``s``."""
    return TransferEvaluator.of(system)(s)


def sigma(system: TdsSystem, omegas) -> np.ndarray:
    """Singular values (descending, one column per frequency)."""
    ev = TransferEvaluator.of(system)
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    k = min(system.p2, system.q2)
    out = np.full((k, omegas.size), np.nan)
    for i, w in enumerate(omegas):
        try:
            out[:, i] = np.linalg.svd(ev(1j * w), compute_uv=False)
        except SingularAtS:
            pass
    return out


@dataclass(frozen=True)
class _Asymptotic:
    C: np.ndarray
    B: np.ndarray
    A0: np.ndarray
    Ak: np.ndarray
    h: np.ndarray

    def T(self, theta: np.ndarray) -> np.ndarray:
        K = self.A0 + np.tensordot(np.exp(-1j * theta), self.Ak, axes=1)
        return -self.C @ np.linalg.solve(K, self.B)

    def value_grad(self, theta: np.ndarray) -> tuple[float, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        K = self.A0 + np.tensordot(np.exp(-1j * theta), self.Ak, axes=1)
        KB = np.linalg.solve(K, self.B)
        CK = np.linalg.solve(K.T, self.C.T).T
        T = -self.C @ KB
        U, S, Vh = np.linalg.svd(T)
        u, v = U[:, 0], Vh[0].conj()
        # dT/dtheta_k = C K^{-1} (dK/dtheta_k) K^{-1} B, dK/dtheta_k = -j A_k e^{-j theta_k}
        g = np.array([
            np.real(np.vdot(u, CK @ (-1j * self.Ak[k] * np.exp(-1j * theta[k])) @ KB @ v))
            for k in range(self.Ak.shape[0])
        ])
        return float(S[0]), g, u, v, K


def _asymptotic_data(ta: TdsSystem) -> _Asymptotic:
    nu = ta.n
    # The leading term is the nominal coefficient; all later ones get a free phase.
    A0 = ta.A.matrices[0].astype(complex)
    delayed = list(ta.A)[1:]
    Ak = np.array([m for m, _ in delayed]).reshape(-1, nu, nu).astype(complex)
    h = np.array([h for _, h in delayed])
    return _Asymptotic(
        np.asarray(ta.C2.at(0.0), dtype=complex), np.asarray(ta.B2.at(0.0), dtype=complex),
        A0, Ak, h,
    )


def hinf_asymptotic(ta: TdsSystem, options: HinfOptions = HinfOptions()) -> tuple[float, np.ndarray]:
    """Worst-case gain of the asymptotic transfer function over all phases.

    ``ta`` is the difference system from :func:`asymptotic_transfer_function`.
    """
    if ta.n == 0 or ta.p2 == 0 or ta.q2 == 0:
        return 0.0, np.zeros(0)
    part = delay_difference_part(ta)
    if part.classification is Classification.ESSENTIALLY_NEUTRAL and gamma_r(part, 0.0) >= 1.0:
        raise NotStronglyStableDifference("difference part is not strongly stable (gamma(0) >= 1)")
    data = _asymptotic_data(ta)
    m = data.Ak.shape[0]
    if m == 0:
        return float(np.linalg.svd(data.T(np.zeros(0)), compute_uv=False)[0]), np.zeros(0)
    nth = options.Ntheta
    if nth ** m > MAX_THETA_GRID:
        nth = max(2, int(MAX_THETA_GRID ** (1.0 / m)))
    grid = 2 * np.pi * np.arange(nth) / nth
    thetas = np.array(list(itertools.product(grid, repeat=m)))
    K = data.A0[None] + np.einsum("gk,kij->gij", np.exp(-1j * thetas), data.Ak)
    Ts = -np.einsum("ij,gjk->gik", data.C, np.linalg.solve(K, np.broadcast_to(data.B, (len(thetas),) + data.B.shape)))
    vals = np.linalg.svd(Ts, compute_uv=False)[:, 0]
    i = int(np.argmax(vals))
    best_val, best_theta = float(vals[i]), thetas[i]

    def neg(theta):
        s, g, *_ = data.value_grad(theta)
        return -s, -g

    res = nsopt.bfgs_minimize(
        neg, best_theta, nsopt.NsoptOptions(maxit=100, grad_norm_tol=1e-12, print_level=0)
    )
    if -res.f > best_val:
        best_val, best_theta = -res.f, np.mod(res.x, 2 * np.pi)
    return best_val, best_theta


def is_strongly_stable(system: TdsSystem, options: RootsOptions = RootsOptions(quiet=True)) -> bool:
    """``C_D < 0`` and no characteristic roots in the closed right half-plane."""
    try:
        part = delay_difference_part(system)
    except SingularA22:
        return False
    c_d = cd(part, CdOptions())
    if c_d >= 0:
        return False
    rts = roots(system, HalfPlane(0.0), options).roots
    return rts.size == 0


def _has_feedthrough(system: TdsSystem) -> bool:
    dd = to_ddae(system)
    if len(system.D22):
        return True
    return np.linalg.matrix_rank(dd.E) < dd.n


def _level_set_pencil(Es, As, B, C, xi):
    n = Es.shape[0]
    Z = np.zeros((n, n))
    H = np.block([[As, (B @ B.T) / xi], [-(C.T @ C) / xi, -As.T]])
    J = np.block([[Es, Z], [Z, Es.T]])
    return H, J


def _discretized_descriptor(sf: StandardForm, N: int):
    from delaykit.model import create_system

    sysd = create_system(Kind.DDAE, sf.A, E=sf.E)
    S, P = discretize(sysd, N)
    n = sf.E.shape[0]
    size = S.shape[0]
    B = np.zeros((size, sf.B.shape[1]))
    B[:n] = sf.B
    C = np.zeros((sf.C.shape[0], size))
    C[:, :n] = sf.C
    return P, S, B, C


def _finite_peak(sf: StandardForm, options: HinfOptions) -> tuple[float, float]:
    """Level-set prediction on the approximation, then Newton on the exact response."""
    ev = TransferEvaluator(sf)
    P, S, B, C = _discretized_descriptor(sf, options.fix_N)

    def sig(w):
        try:
            return ev.sigma_max(w)
        except SingularAtS:
            return -math.inf

    cands = [abs(float(w)) for w in options.omega_init]
    poles = numkernel.generalized_eigs(S, P).values
    poles = poles[np.isfinite(poles)]
    if poles.size:
        damping = np.abs(poles.real) / np.maximum(np.abs(poles), 1e-300)
        for p in poles[np.argsort(damping)][:20]:
            cands.append(abs(p.imag))
    vals = [sig(w) for w in cands]
    i = int(np.argmax(vals))
    level, wbest = vals[i], cands[i]
    if not math.isfinite(level) or level <= 0:
        level, wbest = 0.0, 0.0
    for _ in range(50):
        xi = level * (1 + 2 * options.pred_tol) if level > 0 else 1e-12
        Hm, Jm = _level_set_pencil(P, S, B, C, xi)
        lam = numkernel.generalized_eigs(Hm, Jm).values
        imag = lam[np.abs(lam.real) <= 1e-6 * (1 + np.abs(lam))]
        ws = np.unique(np.round(np.abs(imag.imag), 12))
        if ws.size == 0:
            break
        pts = np.concatenate([[0.0], ws])
        mids = [
            math.sqrt(a * b) if a > 0 else 0.5 * (a + b) for a, b in zip(pts[:-1], pts[1:])
        ] + list(ws)
        vals = [sig(w) for w in mids]
        j = int(np.argmax(vals))
        if vals[j] <= level * (1 + options.pred_tol):
            if vals[j] > level:
                level, wbest = vals[j], mids[j]
            break
        level, wbest = vals[j], mids[j]
    return _newton_peak(ev, wbest, level, options)


def _newton_peak(ev: TransferEvaluator, w0: float, s0: float, options: HinfOptions) -> tuple[float, float]:
    """Solve ``d sigma / d omega = 0`` by Newton with a finite-difference second derivative."""
    w, best = w0, (s0, w0)
    for _ in range(30):
        try:
            s, d = ev.dsigma(w)
        except SingularAtS:
            break
        if s > best[0]:
            best = (s, w)
        if abs(d) <= options.newton_tol * max(1.0, s) or w == 0.0 and d <= 0:
            break
        hstep = 1e-6 * max(1.0, abs(w))
        try:
            _, d2 = ev.dsigma(w + hstep)
        except SingularAtS:
            break
        curv = (d2 - d) / hstep
        step = -d / curv if curv < 0 else math.copysign(0.1 * max(1.0, abs(w)), d)
        w_new = max(w + step, 0.0)
        if abs(w_new - w) <= 1e-14 * max(1.0, w):
            break
        w = w_new
    return best


def hinfnorm(system: TdsSystem, options: HinfOptions = HinfOptions()) -> HinfResult:
    """Strong H-infinity norm of ``w -> z`` and the peak frequency."""
    if not is_strongly_stable(system, options.roots):
        return HinfResult(math.inf, math.nan, math.nan)
    asym, theta = 0.0, None
    if _has_feedthrough(system):
        ta = asymptotic_transfer_function(system)
        asym, theta = hinf_asymptotic(ta, options)
    sf = standard_form(system)
    if np.any(sf.E):
        peak, wpk = _finite_peak(sf, options)
    else:
        peak, wpk = 0.0, math.nan
    if asym >= peak - 1e-12:
        return HinfResult(asym, math.inf, asym, theta, peak, wpk)
    return HinfResult(peak, wpk, asym, theta, peak, wpk)
