"""Structured real uncertainty: pseudospectral abscissa and distance to instability.

An uncertain retarded system perturbs each state term as

    (A_k + sum_j G_kj delta_{ind_kj} H_kj) x(t - max(0, h_k + sum_j w_kj dtau_{ind_kj}))

with real matrix perturbations bounded in Frobenius norm and scalar delay
perturbations bounded in absolute value, all by the same ``epsilon``.

The worst case is sought by an ascent that keeps every perturbation on its
bound and aligns it with the sensitivity of the rightmost root.  It is a local
method; several restarts (from the most dangerous nominal roots and from
random boundary points) make it dependable on small problems.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from delaykit.errors import (
    IndexOutOfRange,
    ModelError,
    NoSignChange,
    ShapeMismatch,
    UnsupportedUncertaintyKind,
)
from delaykit.model import Kind, TdsSystem, TermList
from delaykit.spectrum import HalfPlane, RootsOptions, null_vectors, roots

__all__ = [
    "UncertaintyBlock",
    "UncertaintySet",
    "UncertainMatrix",
    "UncertainDelay",
    "UncertainSystem",
    "Perturbation",
    "PsaOptions",
    "PsaResult",
    "create_delta",
    "add_uncertainty",
    "instantiate",
    "psa",
    "dins",
]

# Ascent stops once a step gains less than this (relative to max(1, |c|)).
ASCENT_RTOL = 1e-10
# Gradient blocks smaller than this keep their current direction.
GRAD_FLOOR = 1e-14


@dataclass(frozen=True)
class UncertaintyBlock:
    rows: int
    cols: int
    value_type: str = "real"
    norm_type: str = "frobenius"

    def __post_init__(self) -> None:
        if self.rows < 1 or self.cols < 1:
            raise ShapeMismatch("uncertainty blocks need positive dimensions")
        if self.value_type not in ("real", "complex"):
            raise ModelError(f"unknown value type {self.value_type!r}")
        if self.norm_type not in ("frobenius", "spectral"):
            raise ModelError(f"unknown norm type {self.norm_type!r}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)


@dataclass(frozen=True)
class UncertaintySet:
    blocks: tuple[UncertaintyBlock, ...] = ()
    n_delay: int = 0

    @property
    def n_matrix(self) -> int:
        return len(self.blocks)

    @property
    def supported(self) -> bool:
        return all(b.value_type == "real" and b.norm_type == "frobenius" for b in self.blocks)


def create_delta(dims: Sequence[tuple[int, int]], value_types=None, norm_types=None) -> UncertaintySet:
    """Set of matrix perturbations with the given ``(rows, cols)`` shapes."""
    k = len(dims)
    value_types = value_types or ["real"] * k
    norm_types = norm_types or ["frobenius"] * k
    if not (len(value_types) == len(norm_types) == k):
        raise ShapeMismatch("dims, value_types and norm_types must have equal length")
    return UncertaintySet(
        tuple(UncertaintyBlock(int(r), int(c), v, n) for (r, c), v, n in zip(dims, value_types, norm_types))
    )


@dataclass(frozen=True)
class UncertainMatrix:
    """``sum_j G[j] delta_{ind[j]} H[j]``."""

    ind: tuple[int, ...]
    G: tuple[np.ndarray, ...]
    H: tuple[np.ndarray, ...]

    def __init__(self, ind, G, H) -> None:
        if not (len(ind) == len(G) == len(H)):
            raise ShapeMismatch("ind, G and H must have equal length")
        object.__setattr__(self, "ind", tuple(int(i) for i in ind))
        object.__setattr__(self, "G", tuple(np.atleast_2d(np.asarray(g, dtype=float)) for g in G))
        object.__setattr__(self, "H", tuple(np.atleast_2d(np.asarray(h, dtype=float)) for h in H))


@dataclass(frozen=True)
class UncertainDelay:
    """``max(-h, sum_j w[j] dtau_{ind[j]})`` added to a nominal delay ``h``."""

    ind: tuple[int, ...]
    w: tuple[float, ...]

    def __init__(self, ind, w) -> None:
        if len(ind) != len(w):
            raise ShapeMismatch("ind and w must have equal length")
        object.__setattr__(self, "ind", tuple(int(i) for i in ind))
        object.__setattr__(self, "w", tuple(float(x) for x in w))


@dataclass(frozen=True)
class UncertainSystem:
    nominal: TdsSystem
    delta: UncertaintySet
    matrices: tuple[UncertainMatrix | None, ...]
    delays: tuple[UncertainDelay | None, ...]

    @property
    def n_terms(self) -> int:
        return len(self.nominal.A)


@dataclass(frozen=True)
class Perturbation:
    """One instance of the uncertainties."""

    delta: tuple[np.ndarray, ...]
    deltatau: np.ndarray

    def norms(self) -> np.ndarray:
        return np.array(
            [np.linalg.norm(d) for d in self.delta] + [abs(t) for t in self.deltatau], dtype=float
        )

    def size(self) -> float:
        nrm = self.norms()
        return float(nrm.max()) if nrm.size else 0.0


def add_uncertainty(
    nominal: TdsSystem,
    delta: UncertaintySet,
    n_delay: int,
    umatrices: Sequence[UncertainMatrix | None] | None = None,
    udelays: Sequence[UncertainDelay | None] | None = None,
) -> UncertainSystem:
    """Attach uncertainties to the state terms of a retarded system.

    ``umatrices`` and ``udelays`` have one (possibly ``None``) slot per
    state term, in the order of ``nominal.A``.  Indices are zero-based.
    """
    if nominal.kind is not Kind.RETARDED:
        raise ModelError("uncertainties are only supported on retarded systems")
    m, n = len(nominal.A), nominal.n
    umatrices = list(umatrices) if umatrices is not None else [None] * m
    udelays = list(udelays) if udelays is not None else [None] * m
    if len(umatrices) != m or len(udelays) != m:
        raise ShapeMismatch(f"expected {m} uncertain-matrix and uncertain-delay slots")
    if n_delay < 0:
        raise ShapeMismatch("the number of delay uncertainties cannot be negative")
    for um in umatrices:
        if um is None:
            continue
        for i, G, H in zip(um.ind, um.G, um.H):
            if not 0 <= i < delta.n_matrix:
                raise IndexOutOfRange(f"matrix uncertainty index {i} out of range")
            rows, cols = delta.blocks[i].shape
            if G.shape != (n, rows) or H.shape != (cols, n):
                raise ShapeMismatch(
                    f"shape matrices {G.shape}, {H.shape} do not fit a {rows}x{cols} uncertainty on an order-{n} system"
                )
    for k, ud in enumerate(udelays):
        if ud is None:
            continue
        for i in ud.ind:
            if not 0 <= i < n_delay:
                raise IndexOutOfRange(f"delay uncertainty index {i} out of range")
    return UncertainSystem(nominal, replace(delta, n_delay=int(n_delay)), tuple(umatrices), tuple(udelays))


def _perturbation(usys: UncertainSystem, delta_values, deltatau_values) -> Perturbation:
    blocks = usys.delta.blocks
    delta_values = list(delta_values) if delta_values is not None else [np.zeros(b.shape) for b in blocks]
    if len(delta_values) != len(blocks):
        raise ShapeMismatch(f"expected {len(blocks)} matrix perturbations")
    ds = []
    for b, d in zip(blocks, delta_values):
        d = np.asarray(d, dtype=float)
        d = d.reshape(b.shape) if d.size == b.rows * b.cols else d
        if d.shape != b.shape:
            raise ShapeMismatch(f"perturbation of shape {d.shape}, expected {b.shape}")
        ds.append(d)
    dt = np.zeros(usys.delta.n_delay) if deltatau_values is None else np.asarray(deltatau_values, dtype=float).reshape(-1)
    if dt.size != usys.delta.n_delay:
        raise ShapeMismatch(f"expected {usys.delta.n_delay} delay perturbations")
    return Perturbation(tuple(ds), dt)


def _raw_delays(usys: UncertainSystem, p: Perturbation) -> np.ndarray:
    out = np.array(usys.nominal.A.delays, dtype=float)
    for k, ud in enumerate(usys.delays):
        if ud is not None:
            out[k] += sum(w * p.deltatau[i] for i, w in zip(ud.ind, ud.w))
    return out


def _terms(usys: UncertainSystem, p: Perturbation) -> list[tuple[np.ndarray, float]]:
    terms = []
    delays = np.maximum(_raw_delays(usys, p), 0.0)
    for (A, _), um, h in zip(usys.nominal.A, usys.matrices, delays):
        A = A.copy()
        if um is not None:
            for i, G, H in zip(um.ind, um.G, um.H):
                A = A + G @ p.delta[i] @ H
        terms.append((A, float(h)))
    return terms


def instantiate(usys: UncertainSystem, delta_values=None, deltatau_values=None) -> TdsSystem:
    """Concrete retarded system for one instance of the uncertainties."""
    p = delta_values if isinstance(delta_values, Perturbation) else _perturbation(usys, delta_values, deltatau_values)
    return usys.nominal.with_(A=TermList.build(_terms(usys, p), usys.nominal.A.shape))


@dataclass(frozen=True)
class PsaOptions:
    n_roots: int = 3
    n_random: int = 3
    maxit: int = 100
    seed: int = 0
    roots: RootsOptions = field(default_factory=lambda: RootsOptions(quiet=True))

    def __post_init__(self) -> None:
        if self.n_roots < 0 or self.n_random < 0 or self.maxit < 1:
            raise ValueError("restart counts must be non-negative and maxit positive")


@dataclass(frozen=True)
class PsaResult:
    value: float
    witness: Perturbation
    nominal: float
    restart_values: tuple[float, ...]
    best_restart: int

    def __float__(self) -> float:
        return self.value


class _Evaluator:
    """Spectral abscissa and rightmost root of instances, with a moving search floor."""

    def __init__(self, usys: UncertainSystem, options: PsaOptions) -> None:
        self.usys = usys
        self.options = options
        self.floor: float | None = None

    def rightmost(self, p: Perturbation) -> tuple[float, complex | None, TdsSystem]:
        system = instantiate(self.usys, p)
        if self.floor is None:
            r = -1.0
        else:
            r = self.floor
        for _ in range(60):
            rts = roots(system, HalfPlane(r), self.options.roots).roots
            if rts.size:
                c = float(rts.real.max())
                tied = rts[rts.real >= c - 1e-9 * max(1.0, abs(c))]
                lam = complex(tied[np.argmin(np.abs(tied.imag))])
                return c, lam, system
            r = r - max(1.0, abs(r))
        return -math.inf, None, system

    def set_reference(self, c: float) -> None:
        # Floor at half the distance to the imaginary axis below the reference value.
        self.floor = c - max(1.0, 0.5 * abs(c)) if math.isfinite(c) else None

    def root_list(self, p: Perturbation) -> np.ndarray:
        system = instantiate(self.usys, p)
        r = self.floor if self.floor is not None else -1.0
        return roots(system, HalfPlane(r), self.options.roots).roots

    def gradient(self, p: Perturbation, system: TdsSystem, lam: complex) -> Perturbation:
        """Derivative of ``Re(lam)`` with respect to every perturbation."""
        usys = self.usys
        u, v, _, dM = null_vectors(system, lam)
        denom = np.vdot(u, dM @ v)
        terms = _terms(usys, p)
        raw = _raw_delays(usys, p)
        gd = [np.zeros(b.shape) for b in usys.delta.blocks]
        gt = np.zeros(usys.delta.n_delay)
        if abs(denom) <= 1e-14 * (np.linalg.norm(dM) + 1.0):
            # Multiple root: no derivative; the random restarts supply directions.
            return Perturbation(tuple(gd), gt)
        for k, ((A, h), um, ud) in enumerate(zip(terms, usys.matrices, usys.delays)):
            phase = np.exp(-lam * h)
            if um is not None:
                for i, G, H in zip(um.ind, um.G, um.H):
                    # d lam / d delta = (u^H G)^T (H v)^T e^{-lam h} / (u^H M' v)
                    d = np.outer(G.T @ u.conj(), H @ v) * phase / denom
                    gd[i] += d.real
            if ud is not None and raw[k] > 0:
                dlam_dh = -np.vdot(u, lam * A @ v) * phase / denom
                for i, w in zip(ud.ind, ud.w):
                    gt[i] += w * dlam_dh.real
        return Perturbation(tuple(gd), gt)


def _to_boundary(g: Perturbation, current: Perturbation, eps: float) -> Perturbation:
    """Align each perturbation with its gradient block at full size ``eps``."""
    ds = []
    for gi, di in zip(g.delta, current.delta):
        nrm = np.linalg.norm(gi)
        ds.append(eps * gi / nrm if nrm > GRAD_FLOOR else di)
    dt = np.where(np.abs(g.deltatau) > GRAD_FLOOR, eps * np.sign(g.deltatau), current.deltatau)
    return Perturbation(tuple(ds), dt)


def _project(p: Perturbation, eps: float) -> Perturbation:
    ds = []
    for d in p.delta:
        nrm = np.linalg.norm(d)
        ds.append(d * (eps / nrm) if nrm > eps else d)
    return Perturbation(tuple(ds), np.clip(p.deltatau, -eps, eps))


def _blend(a: Perturbation, b: Perturbation, t: float) -> Perturbation:
    return Perturbation(
        tuple((1 - t) * x + t * y for x, y in zip(a.delta, b.delta)),
        (1 - t) * a.deltatau + t * b.deltatau,
    )


def _ascend(ev: _Evaluator, start: Perturbation, eps: float, maxit: int) -> tuple[float, Perturbation]:
    p = _project(start, eps)
    c, lam, system = ev.rightmost(p)
    if lam is None:
        return c, p
    for _ in range(maxit):
        g = ev.gradient(p, system, lam)
        target = _to_boundary(g, p, eps)
        improved = False
        # Full fixed-point step first, then shorter moves toward it.
        for t in (1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125):
            q = _project(_blend(p, target, t), eps)
            cq, lq, sq = ev.rightmost(q)
            if lq is not None and cq > c + ASCENT_RTOL * max(1.0, abs(c)):
                p, c, lam, system = q, cq, lq, sq
                improved = True
                break
        if not improved:
            break
    return c, p


def _random_boundary(usys: UncertainSystem, rng: np.random.Generator, eps: float) -> Perturbation:
    ds = []
    for b in usys.delta.blocks:
        d = rng.standard_normal(b.shape)
        ds.append(eps * d / np.linalg.norm(d))
    dt = eps * rng.choice([-1.0, 1.0], size=usys.delta.n_delay)
    return Perturbation(tuple(ds), dt)


def _check_supported(usys: UncertainSystem) -> None:
    if not usys.delta.supported:
        raise UnsupportedUncertaintyKind(
            "only real-valued uncertainties bounded in Frobenius norm are supported"
        )


def psa(usys: UncertainSystem, epsilon: float, options: PsaOptions = PsaOptions()) -> PsaResult:
    """Worst-case spectral abscissa over perturbations of size at most ``epsilon``.

    The returned value is the spectral abscissa of the returned witness, so it
    is attained and never below the nominal spectral abscissa.
    """
    _check_supported(usys)
    if not epsilon >= 0:
        raise ValueError("epsilon must be non-negative")
    ev = _Evaluator(usys, options)
    zero = _perturbation(usys, None, None)
    c0, _, _ = ev.rightmost(zero)
    ev.set_reference(c0)
    if epsilon == 0 or (not usys.delta.blocks and usys.delta.n_delay == 0):
        return PsaResult(c0, zero, c0, (c0,), 0)

    starts: list[Perturbation] = []
    nominal_roots = ev.root_list(zero)
    upper = [z for z in nominal_roots if z.imag >= 0][: options.n_roots]
    system0 = instantiate(usys, zero)
    for lam in upper:
        starts.append(_to_boundary(ev.gradient(zero, system0, complex(lam)), zero, epsilon))
    rng = np.random.default_rng(options.seed)
    starts += [_random_boundary(usys, rng, epsilon) for _ in range(options.n_random)]

    values = [c0]
    witnesses = [zero]
    for s in starts:
        c, p = _ascend(ev, s, epsilon, options.maxit)
        values.append(c)
        witnesses.append(p)
    best = max(range(len(values)), key=lambda i: (values[i], -i))
    return PsaResult(values[best], witnesses[best], c0, tuple(values), best)


def dins(
    usys: UncertainSystem,
    interval: tuple[float, float],
    options: PsaOptions = PsaOptions(),
    *,
    tol: float = 1e-3,
) -> float:
    """Smallest ``epsilon`` in ``interval`` whose pseudospectral abscissa reaches zero.

    Bisection on the (nondecreasing) pseudospectral abscissa, to absolute
    accuracy ``tol``.  Returns the upper end of the final bracket.
    """
    _check_supported(usys)
    lo, hi = float(interval[0]), float(interval[1])
    if not 0 <= lo < hi:
        raise ValueError("interval must satisfy 0 <= lo < hi")
    if psa(usys, lo, options).value >= 0:
        raise NoSignChange(f"pseudospectral abscissa is already non-negative at {lo}")
    if psa(usys, hi, options).value < 0:
        raise NoSignChange(f"pseudospectral abscissa stays negative on [{lo}, {hi}]")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if psa(usys, mid, options).value >= 0:
            hi = mid
        else:
            lo = mid
    return hi
