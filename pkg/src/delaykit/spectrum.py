"""Characteristic roots by spectral collocation plus Newton correction.

The infinitesimal generator is discretized on a Chebyshev grid over
``[-tau_max, 0]``; eigenvalues of the resulting pencil are then refined on
the exact characteristic matrix.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from delaykit import numkernel
from delaykit.errors import DelayKitWarning, ModelError, NotSiso
from delaykit.model import Kind, TdsSystem, TermList, create_system, to_ddae

__all__ = [
    "HalfPlane",
    "Rectangle",
    "Region",
    "RootsOptions",
    "SpectrumInfo",
    "SpectrumResult",
    "NewtonResult",
    "CharEvaluator",
    "discretize",
    "choose_degree",
    "newton_correct",
    "roots",
    "reduce_algebraic",
    "sa",
    "tzeros",
    "null_vectors",
]

N_START = 15
N_GAMMA_EXCEEDS_ONE = 30
MATCH_TOL = 1e-6
FALLBACK_MERGE = 1e-4
FALLBACK_REL_RESIDUAL = 1e-8


@dataclass(frozen=True)
class HalfPlane:
    r: float

    def contains(self, z) -> np.ndarray:
        return np.real(z) >= self.r

    @property
    def left(self) -> float:
        return self.r

    def expanded(self) -> HalfPlane:
        """Pre-filter region: shifted left by 10% of ``max(1, |r|)``."""
        return HalfPlane(self.r - 0.1 * max(1.0, abs(self.r)))


@dataclass(frozen=True)
class Rectangle:
    re_min: float
    re_max: float
    im_min: float
    im_max: float

    def __post_init__(self) -> None:
        if not (self.re_min <= self.re_max and self.im_min <= self.im_max):
            raise ModelError("rectangle bounds must be ordered")

    def contains(self, z) -> np.ndarray:
        z = np.asarray(z)
        return (
            (z.real >= self.re_min) & (z.real <= self.re_max)
            & (z.imag >= self.im_min) & (z.imag <= self.im_max)
        )

    @property
    def left(self) -> float:
        return self.re_min

    def expanded(self) -> Rectangle:
        """Pre-filter region: each side pushed out by 10% of the extent."""
        dr = 0.1 * (self.re_max - self.re_min)
        di = 0.1 * (self.im_max - self.im_min)
        return Rectangle(self.re_min - dr, self.re_max + dr, self.im_min - di, self.im_max + di)


Region = Union[HalfPlane, Rectangle]


@dataclass(frozen=True)
class RootsOptions:
    max_size_evp: int = 600
    fix_N: int | None = None
    newton_tol: float = 1e-10
    newton_max_iter: int = 20
    commensurate_basic_delay: float | None = None
    quiet: bool = False
    seed: int = 0


@dataclass
class SpectrumInfo:
    N: int = 0
    N_original: int = 0
    max_size_evp_enforced: bool = False
    gamma_r_exceeds_one: bool = False
    newton_initial_guesses: list[complex] = field(default_factory=list)
    newton_final_values: list[complex] = field(default_factory=list)
    newton_residuals: list[float] = field(default_factory=list)
    newton_unconverged_initial_guesses: list[int] = field(default_factory=list)
    newton_large_corrections: list[int] = field(default_factory=list)


@dataclass(frozen=True)
class SpectrumResult:
    roots: np.ndarray
    raw: np.ndarray
    info: SpectrumInfo


@dataclass(frozen=True)
class NewtonResult:
    value: complex
    vector: np.ndarray
    residual: float
    relative_residual: float
    converged: bool
    iterations: int


class CharEvaluator:
    """Fast evaluation of ``M(s)`` and ``M'(s)`` from stacked coefficients."""

    def __init__(self, system: TdsSystem) -> None:
        n = system.n
        self.n = n
        self.E = np.asarray(system.E, dtype=float)
        self.A = np.array(system.A.matrices).reshape(-1, n, n)
        self.hA = np.asarray(system.A.delays, dtype=float)
        self.H = np.array(system.H.matrices).reshape(-1, n, n)
        self.hH = np.asarray(system.H.delays, dtype=float)
        self.normE = float(np.linalg.norm(self.E, 2)) if n else 0.0
        self.normH = float(sum(np.linalg.norm(m, 2) for m in self.H))
        self.normA = float(sum(np.linalg.norm(m, 2) for m in self.A))

    def __call__(self, s: complex) -> tuple[np.ndarray, np.ndarray]:
        # Diverging Newton iterates may overflow; the caller rejects non-finite values.
        with np.errstate(over="ignore", invalid="ignore"):
            return self._evaluate(s)

    def _evaluate(self, s: complex) -> tuple[np.ndarray, np.ndarray]:
        eA = np.exp(-s * self.hA)
        M = -np.tensordot(eA, self.A, axes=1) + s * self.E
        dM = np.tensordot(self.hA * eA, self.A, axes=1) + self.E
        if self.H.shape[0]:
            eH = np.exp(-s * self.hH)
            Hs = np.tensordot(eH, self.H, axes=1)
            M = M + s * Hs
            dM = dM + Hs - s * np.tensordot(self.hH * eH, self.H, axes=1)
        return M, dM

    def scale(self, s: complex) -> float:
        return max(1.0, abs(s) * (self.normE + self.normH) + self.normA)


def _bordering_vector(n: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    c = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return c / np.linalg.norm(c)


def discretize(system: TdsSystem, N: int) -> tuple[np.ndarray, np.ndarray]:
    """Pencil ``(Sigma, Pi)`` of size ``(N+1) n`` approximating the generator."""
    n = system.n
    tau = system.tau_max
    grid = numkernel.cheb_grid(N, (-(tau if tau > 0 else 1.0), 0.0))
    D = grid.diff
    size = (N + 1) * n
    Sigma = np.kron(D, np.eye(n))
    Pi = np.eye(size)
    row0 = np.zeros((n, size))
    for m, h in system.A:
        row0 += np.kron(numkernel.interp_row(grid, -h)[None, :], m)
    for m, h in system.H:
        row0 -= np.kron((numkernel.interp_row(grid, -h) @ D)[None, :], m)
    Sigma[:n, :] = row0
    Pi[:n, :] = 0.0
    Pi[:n, :n] = system.E
    return Sigma, Pi


def newton_correct(
    system: TdsSystem,
    lambda0: complex,
    options: RootsOptions = RootsOptions(),
    *,
    c: np.ndarray | None = None,
    v0: np.ndarray | None = None,
    char: CharEvaluator | None = None,
) -> NewtonResult:
    """Newton iteration on ``[M(lambda) v; c^H v - 1] = 0``.

    Convergence is judged on the residual ``||M v|| / ||v||`` relative to
    the coefficient scale ``max(1, |lambda| (||E|| + sum ||H||) + sum ||A||)``.
    """
    char = char or CharEvaluator(system)
    n = char.n
    if c is None:
        c = _bordering_vector(n, options.seed)
    lam = complex(lambda0)
    M, dM = char(lam)
    if v0 is None:
        v = np.linalg.svd(M)[2][-1].conj()
    else:
        v = np.asarray(v0, dtype=complex)
    cv = np.vdot(c, v)
    if abs(cv) < 1e-8 * np.linalg.norm(v):
        c = v / np.linalg.norm(v)
        cv = np.vdot(c, v)
    v = v / cv
    best = None
    polish = 0
    converged = False
    it = 0
    for it in range(options.newton_max_iter + 1):
        res = float(np.linalg.norm(M @ v) / np.linalg.norm(v))
        rel = res / char.scale(lam)
        if best is None or rel < best[3]:
            best = (lam, v.copy(), res, rel)
        if rel <= options.newton_tol:
            converged = True
            # Two polishing steps tighten roots well below the stopping tolerance.
            if polish >= 2 or rel < 1e-15:
                break
            polish += 1
        elif converged:
            break
        if it == options.newton_max_iter:
            break
        J = np.zeros((n + 1, n + 1), dtype=complex)
        J[:n, :n] = M
        J[:n, n] = dM @ v
        J[n, :n] = c.conj()
        rhs = -np.concatenate([M @ v, [np.vdot(c, v) - 1.0]])
        try:
            step = np.linalg.solve(J, rhs)
        except np.linalg.LinAlgError:
            break
        v = v + step[:n]
        lam = lam + step[n]
        if not np.isfinite(lam) or abs(lam) > 1e12 or not np.all(np.isfinite(v)):
            break
        M, dM = char(lam)
    lam, v, res, rel = best
    converged = converged or rel <= options.newton_tol
    return NewtonResult(lam, v / np.linalg.norm(v), res, rel, converged, it)


def null_vectors(system: TdsSystem, lam: complex, char: CharEvaluator | None = None):
    """Left and right singular vectors of ``M(lam)`` for its smallest singular value."""
    char = char or CharEvaluator(system)
    M, dM = char(lam)
    W, _, Zh = np.linalg.svd(M)
    return W[:, -1], Zh[-1].conj(), M, dM


def _dedup(vals: list[complex], resid: list[float]) -> list[complex]:
    order = np.argsort(resid, kind="stable")
    kept: list[complex] = []
    for i in order:
        z = vals[i]
        if all(abs(z - k) > 1e-8 * (1 + abs(z)) for k in kept):
            kept.append(z)
    return kept


def _sort(z) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    return z[np.lexsort((z.imag, -z.real))] if z.size else z


def _correct_candidates(system, cand, region, options, char, c, info):
    """Newton-correct one representative of each conjugate pair and restore symmetry."""
    reps = [z for z in cand if z.imag >= -1e-6 * (1 + abs(z))]
    finals, resid, fallback = [], [], []
    for z0 in reps:
        nr = newton_correct(system, z0, options, c=c, char=char)
        idx = len(info.newton_initial_guesses)
        info.newton_initial_guesses.append(complex(z0))
        info.newton_final_values.append(complex(nr.value))
        info.newton_residuals.append(nr.relative_residual)
        if abs(nr.value - z0) > 0.1 * (1 + abs(z0)):
            info.newton_large_corrections.append(idx)
        if not nr.converged:
            info.newton_unconverged_initial_guesses.append(idx)
            if nr.relative_residual > FALLBACK_REL_RESIDUAL:
                continue
        z = nr.value
        if abs(z.imag) <= 1e-8 * (1 + abs(z)):
            z = complex(z.real, 0.0)
        pair = [z, z.conjugate()] if z.imag != 0.0 else [z]
        finals.extend(pair)
        resid.extend([nr.relative_residual] * len(pair))
        fallback.extend([not nr.converged] * len(pair))
    # An unconverged run stalling next to a converged root is the same root.
    good = [z for z, fb in zip(finals, fallback) if not fb]
    keep = [
        i for i, z in enumerate(finals)
        if not fallback[i] or all(abs(z - g) > FALLBACK_MERGE * (1 + abs(z)) for g in good)
    ]
    kept = _dedup([finals[i] for i in keep], [resid[i] for i in keep])
    return _sort([z for z in kept if region.contains(np.array([z]))[0]])


def _solve_at(system, N, region, options, char, c, info):
    if system.is_delay_free:
        A0 = system.A.at(0.0) if len(system.A) else np.zeros((system.n, system.n))
        res = numkernel.generalized_eigs(A0, system.E)
        raw = res.values
        sel = raw[region.contains(raw)]
        for z in sel:
            info.newton_initial_guesses.append(complex(z))
            info.newton_final_values.append(complex(z))
            M, _ = char(z)
            info.newton_residuals.append(float(np.linalg.svd(M, compute_uv=False)[-1]) / char.scale(z))
        vals = [complex(z.real, 0.0) if abs(z.imag) <= 1e-12 * (1 + abs(z)) else complex(z) for z in sel]
        return _sort(_dedup(vals, [0.0] * len(vals))), raw
    S, P = discretize(system, N)
    raw = numkernel.generalized_eigs(S, P).values
    cand = raw[region.expanded().contains(raw)]
    return _correct_candidates(system, cand, region, options, char, c, info), raw


def _match(a: np.ndarray, b: np.ndarray) -> bool:
    if a.size != b.size:
        return False
    rest = list(b)
    for z in a:
        d = [abs(z - w) for w in rest]
        j = int(np.argmin(d))
        if d[j] > MATCH_TOL * (1 + abs(z)):
            return False
        rest.pop(j)
    return True


def _warn(msg: str, options: RootsOptions) -> None:
    if not options.quiet:
        warnings.warn(msg, DelayKitWarning, stacklevel=3)


def _neutral_gamma(system: TdsSystem, r: float) -> float | None:
    """gamma(r) of the difference part, or None if it does not apply."""
    from delaykit import strongstab
    from delaykit.errors import SingularA22
    from delaykit.model import Classification, TermList, delay_difference_part

    if system.kind is Kind.RETARDED:
        return None
    # The nominal spectrum sees coincident delays as one term.
    nominal = system.with_(A=TermList.build(list(system.A), system.A.shape))
    try:
        part = delay_difference_part(nominal)
    except SingularA22:
        return None
    if part.classification is Classification.ESSENTIALLY_RETARDED:
        return None
    return strongstab.gamma_r(part, r)


def _max_degree(system: TdsSystem, options: RootsOptions) -> int:
    return max(1, options.max_size_evp // max(system.n, 1) - 1)


def choose_degree(system: TdsSystem, region: Region, options: RootsOptions = RootsOptions()):
    """Pick the discretization degree; returns ``(N, info, roots, raw)``."""
    info = SpectrumInfo()
    char = CharEvaluator(system)
    c = _bordering_vector(system.n, options.seed)
    cap = _max_degree(system, options)

    def at(N):
        info.newton_initial_guesses.clear()
        info.newton_final_values.clear()
        info.newton_residuals.clear()
        info.newton_unconverged_initial_guesses.clear()
        info.newton_large_corrections.clear()
        return _solve_at(system, N, region, options, char, c, info)

    def capped(N):
        info.N_original = N
        if N > cap:
            info.max_size_evp_enforced = True
            _warn(
                "Size of the generalized EVP would exceed its maximum value; "
                f"discretization with N = {cap}", options,
            )
            return cap
        return N

    if system.is_delay_free:
        info.N = info.N_original = 1
        rts, raw = at(1)
        return 1, info, rts, raw
    if options.fix_N is not None:
        N = capped(int(options.fix_N))
        info.N = N
        rts, raw = at(N)
        return N, info, rts, raw
    g = _neutral_gamma(system, region.left) if isinstance(region, HalfPlane) else None
    if g is not None and g >= 1.0:
        info.gamma_r_exceeds_one = True
        _warn(f"Case: gamma(r) >= 1 (gamma = {g:.4g}); spectral discretization with N = "
              f"{N_GAMMA_EXCEEDS_ONE}", options)
        N = capped(N_GAMMA_EXCEEDS_ONE)
        info.N = N
        rts, raw = at(N)
        return N, info, rts, raw
    N = capped(N_START)
    prev, raw = at(N)
    while True:
        nxt = math.ceil(1.5 * N)
        if N >= cap:
            # The root sets have not settled yet and the degree cannot grow further.
            if not info.max_size_evp_enforced:
                capped(nxt)
            info.N = N
            return N, info, prev, raw
        if nxt > cap:
            nxt = capped(nxt)
        cur, raw = at(nxt)
        N = nxt
        if _match(prev, cur):
            info.N = N
            info.N_original = max(info.N_original, N)
            return N, info, cur, raw
        prev = cur


def reduce_algebraic(system: TdsSystem) -> TdsSystem | None:
    """Retarded system with the same characteristic roots, or ``None``.

    Applies to descriptor systems whose algebraic part ``A22`` is delay-free:
    the algebraic variables are then eliminated by a Schur complement,
    ``det M(s) = det(-A22) det(s E11 - sum A11 + sum A12 A22^{-1} A21)``.
    """
    if system.kind is not Kind.DDAE or system.n == 0:
        return None
    U, Up, V, Vp, rank = numkernel.nullspace_split(system.E)
    if rank == system.n or rank == 0:
        return None
    scale = max((np.abs(m).max(initial=0.0) for m, _ in system.A), default=1.0)
    A22 = np.zeros((U.shape[1], V.shape[1]))
    for m, h in system.A:
        blk = U.T @ m @ V
        if h > 0 and np.abs(blk).max(initial=0.0) > 1e-14 * max(scale, 1.0):
            return None
        if h == 0:
            A22 += blk
    if np.linalg.cond(A22) > 1e12:
        return None
    E11 = Up.T @ system.E @ Vp
    Einv = np.linalg.inv(E11)
    terms = []
    for m, h in system.A:
        terms.append((Einv @ (Up.T @ m @ Vp), h))
    right = [(np.linalg.solve(A22, U.T @ m @ Vp), h) for m, h in system.A]
    for m, h in system.A:
        A12 = Up.T @ m @ V
        if not np.any(A12):
            continue
        for r, hr in right:
            terms.append((-Einv @ A12 @ r, h + hr))
    A = TermList.build(terms, (rank, rank)).drop_zeros()
    if not len(A) or A.delays[0] != 0:
        A = TermList.build(list(A) + [(np.zeros((rank, rank)), 0.0)], (rank, rank))
    return create_system(Kind.RETARDED, A)


def roots(system: TdsSystem, region: Region, options: RootsOptions = RootsOptions()) -> SpectrumResult:
    """Characteristic roots inside ``region``, sorted by decreasing real part.

    Descriptor systems with a delay-free algebraic part are solved through
    their retarded reduction, which has the same roots and a smaller pencil.
    """
    reduced = reduce_algebraic(system)
    _, info, rts, raw = choose_degree(reduced if reduced is not None else system, region, options)
    return SpectrumResult(rts, raw, info)


def sa(system: TdsSystem, r: float, options: RootsOptions = RootsOptions()) -> float:
    """Spectral abscissa over roots with real part at least ``r`` (``-inf`` if none)."""
    rts = roots(system, HalfPlane(r), options).roots
    return float(np.max(rts.real)) if rts.size else -math.inf


def _bordered_zero_system(system: TdsSystem) -> TdsSystem:
    if system.p1 == 1 and system.q1 == 1:
        B, C, D = system.B1, system.C1, system.D11
    elif system.p2 == 1 and system.q2 == 1:
        B, C, D = system.B2, system.C2, system.D22
    else:
        raise NotSiso("transmission zeros need a single-input single-output channel")
    dd = to_ddae(system)
    if dd is not system:
        B = dd.B1 if B is system.B1 else dd.B2
        C = dd.C1 if C is system.C1 else dd.C2
    n = dd.n
    N = n + 1
    blocks: dict[float, np.ndarray] = {0.0: np.zeros((N, N))}

    def blk(h):
        return blocks.setdefault(h, np.zeros((N, N)))

    for m, h in dd.A:
        blk(h)[:n, :n] += m
    for m, h in B:
        blk(h)[:n, n:] += m
    for m, h in C:
        blk(h)[n:, :n] += m
    for m, h in D:
        blk(h)[n:, n:] += m
    E = np.zeros((N, N))
    E[:n, :n] = dd.E
    return create_system(Kind.DDAE, TermList.build([(m, h) for h, m in blocks.items()], (N, N)), E=E)


def tzeros(system: TdsSystem, rect: Rectangle, options: RootsOptions = RootsOptions()) -> np.ndarray:
    """Transmission zeros of a SISO system inside ``rect``."""
    return roots(_bordered_zero_system(system), rect, options).roots
