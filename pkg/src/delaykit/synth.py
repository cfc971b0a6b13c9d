"""Fixed-order output-feedback synthesis by nonsmooth optimization.

Free controller entries are packed into a vector ``p``.  Objectives are the
(strong) spectral abscissa of the closed loop, a log-barrier variant that
keeps ``gamma(0)`` of the difference part below one, and a mix of the strong
spectral abscissa with the strong H-infinity norm.  Gradients come from
eigenvalue and singular-value sensitivities; the closed loop depends
affinely on ``p`` through its controller term.
"""

from __future__ import annotations

import dataclasses
import enum
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from delaykit import nsopt, numkernel
from delaykit.errors import (
    DefectiveRoot,
    FailedStronglyStabilizing,
    NotStabilizing,
    ShapeMismatch,
    SingularA22,
    SingularAtS,
)
from delaykit.freqresp import HinfOptions, TransferEvaluator, hinfnorm, is_strongly_stable
from delaykit.model import (
    Classification,
    ClosedLoopLayout,
    Controller,
    ControllerPattern,
    DelayDifferencePart,
    TdsSystem,
    TermList,
    close_loop,
    closed_loop_layout,
    delay_difference_part,
    standard_form,
)
from delaykit.spectrum import CharEvaluator, HalfPlane, RootsOptions, null_vectors, roots
from delaykit.strongstab import CdOptions, GammaROptions, cd, gamma_r_detail, strong_sa

__all__ = [
    "Method",
    "SynthOptions",
    "ParamVector",
    "ObjectiveEvaluation",
    "Sensitivity",
    "SynthLog",
    "SynthResult",
    "pack",
    "unpack",
    "rightmost_sensitivity",
    "objective_stab",
    "objective_hinf",
    "stabopt",
    "hiopt",
]

log = logging.getLogger(__name__)

# Roots whose real parts differ by less than this are treated as tied.
TIE_TOL = 1e-8
# Below this |u^H M'(lambda) v| (relative) a root counts as defective.
DEFECTIVE_TOL = 1e-12
STRONG_GUARD = 1e-6
# Expansions of the search half-plane before giving up on finding a root.
MAX_EXPANSIONS = 12


class Method(enum.Enum):
    AUTO = "auto"
    CD = "cd"
    BARRIER = "barrier"


@dataclass(frozen=True)
class SynthOptions:
    nstart: int = 5
    method: Method = Method.AUTO
    w1: float = 1e-3
    w2: float = 1e-3
    Ntheta: int = 10
    alpha: float = 0.0
    roots: RootsOptions = field(default_factory=lambda: RootsOptions(quiet=True))
    nsopt: nsopt.NsoptOptions = field(default_factory=nsopt.NsoptOptions)
    hinf: HinfOptions = field(default_factory=HinfOptions)
    print_level: int = 0
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.w1 < 1:
            raise ValueError("w1 must lie in [0, 1)")
        if not self.w2 > 0:
            raise ValueError("w2 must be positive")
        if not 0 <= self.alpha <= 1:
            raise ValueError("alpha must lie in [0, 1]")
        if self.nstart < 1:
            raise ValueError("nstart must be at least 1")
        object.__setattr__(self, "method", Method(self.method))


@dataclass(frozen=True)
class ParamVector:
    """Free controller entries and where they live: ``(matrix, row, col)``."""

    p: np.ndarray
    layout: tuple[tuple[int, int, int], ...]


def _layout(pattern: ControllerPattern) -> tuple[tuple[int, int, int], ...]:
    out = []
    for k, m in enumerate(pattern.mask):
        for r, c in zip(*np.nonzero(m)):
            out.append((k, int(r), int(c)))
    return tuple(out)


def pack(controller: Controller, pattern: ControllerPattern) -> ParamVector:
    blocks = controller.blocks()
    for b, m in zip(blocks, pattern.mask):
        if b.shape != m.shape:
            raise ShapeMismatch(f"controller block {b.shape} does not match pattern {m.shape}")
    lay = _layout(pattern)
    return ParamVector(np.array([blocks[k][r, c] for k, r, c in lay], dtype=float), lay)


def unpack(p, pattern: ControllerPattern) -> Controller:
    """Controller with free entries from ``p`` and the rest copied from the basis."""
    vec = p.p if isinstance(p, ParamVector) else np.asarray(p, dtype=float).reshape(-1)
    lay = _layout(pattern)
    if vec.size != len(lay):
        raise ShapeMismatch(f"expected {len(lay)} parameters, got {vec.size}")
    mats = [np.array(b, dtype=float) for b in pattern.basis]
    for x, (k, r, c) in zip(vec, lay):
        mats[k][r, c] = x
    return Controller(*mats)


@dataclass(frozen=True)
class ObjectiveEvaluation:
    f: float
    grad: np.ndarray
    c: float = math.nan
    cd: float = math.nan
    gamma0: float = math.nan
    hinf: float = math.nan
    branch: str = ""


@dataclass(frozen=True)
class Sensitivity:
    """Rightmost root, its real part and the gradient of that real part."""

    c: float
    root: complex
    grad: np.ndarray


@dataclass
class _EvalState:
    """Per-start warm-start data: last abscissa and discretization degree."""

    anchor: float = math.nan
    degree: int | None = None
    calls: int = 0


class _Problem:
    """Plant, pattern and the structural facts every evaluation reuses."""

    def __init__(self, plant: TdsSystem, pattern: ControllerPattern, options: SynthOptions) -> None:
        self.plant = plant
        self.pattern = pattern
        self.options = options
        self.layout: ClosedLoopLayout = closed_loop_layout(plant, pattern.nc)
        self.params = _layout(pattern)
        grids = self.layout.controller_positions()
        # Closed-loop (row, col) of each free parameter inside the controller term.
        self.positions = [(grids[k][0][r, 0], grids[k][1][0, c]) for k, r, c in self.params]
        rng = np.random.default_rng(12345)
        probe = unpack(rng.standard_normal(len(self.params)) + pack_basis_offset(pattern), pattern) \
            if self.params else unpack(np.zeros(0), pattern)
        part = delay_difference_part(close_loop(plant, probe))
        self.neutral = part.classification is Classification.ESSENTIALLY_NEUTRAL
        # The zero-delay controller term is not counted; only genuinely delayed terms are.
        nonzero = sum(1 for m, h in part.delayed if h > 0 and np.any(m))
        method = options.method
        if method is Method.AUTO:
            method = Method.CD if nonzero <= 2 else Method.BARRIER
        self.method = method

    @property
    def dim(self) -> int:
        return len(self.params)

    def closed_loop(self, p) -> TdsSystem:
        return close_loop(self.plant, unpack(p, self.pattern))

    def term_derivatives(self) -> list[tuple[int, int]]:
        return self.positions


def pack_basis_offset(pattern: ControllerPattern) -> np.ndarray:
    """Basis values at the free positions (used to centre structural probes)."""
    return np.array([pattern.basis[k][r, c] for k, r, c in _layout(pattern)], dtype=float)


# ---------------------------------------------------------------------------
# Spectral abscissa and its gradient


def _roots_options(problem: _Problem, state: _EvalState) -> RootsOptions:
    opts = problem.options.roots
    if state.degree is not None and opts.fix_N is None and state.calls % 10:
        return dataclasses.replace(opts, fix_N=state.degree)
    return opts


def _offset(system: TdsSystem) -> float:
    tau = system.tau_max
    return min(1.0, 2.0 / tau) if tau > 0 else 1.0


def _rightmost(system: TdsSystem, floor: float, problem: _Problem, state: _EvalState):
    """Rightmost roots right of ``floor``; returns (roots, info) or (empty, None)."""
    off = _offset(system)
    r = state.anchor - off if math.isfinite(state.anchor) else -off
    r = max(r, floor)
    opts = _roots_options(problem, state)
    for k in range(MAX_EXPANSIONS):
        res = roots(system, HalfPlane(r), opts)
        if res.roots.size:
            if opts.fix_N is None:
                state.degree = res.info.N
            return res.roots
        if r <= floor:
            break
        r = max(r - off * 2.0 ** (k + 1), floor)
        opts = problem.options.roots
    return np.zeros(0, complex)


def _pick_active(rts: np.ndarray) -> complex:
    c = rts.real.max()
    tied = rts[rts.real >= c - TIE_TOL * max(1.0, abs(c))]
    return complex(tied[np.argmin(np.abs(tied.imag))])


def _root_gradient(system: TdsSystem, lam: complex, positions) -> np.ndarray:
    """d Re(lambda) / d p for parameters entering the controller term at ``positions``."""
    char = CharEvaluator(system)
    u, v, M, dM = null_vectors(system, lam, char)
    denom = np.vdot(u, dM @ v)
    scale = np.linalg.norm(dM, 2) + 1.0
    if abs(denom) <= DEFECTIVE_TOL * scale:
        raise DefectiveRoot(f"root {lam} is (numerically) defective")
    # M = lambda E - sum A_k e^{-lambda h_k}; the controller term has h = 0,
    # so dM/dp_i = -e_r e_c^T and dlambda/dp_i = conj(u_r) v_c / (u^H M' v).
    return np.array([np.real(np.conj(u[r]) * v[c] / denom) for r, c in positions])


def rightmost_sensitivity(
    system: TdsSystem,
    positions: Sequence[tuple[int, int]],
    region_hint: float | None = None,
    options: RootsOptions = RootsOptions(quiet=True),
) -> Sensitivity:
    """Spectral abscissa of a closed loop and its gradient in controller entries.

    ``positions`` are closed-loop ``(row, col)`` indices of the parameters in
    the zero-delay controller term.  Ties in the real part are broken toward
    the smallest imaginary part.
    """
    r = region_hint if region_hint is not None else -_offset(system)
    rts = np.zeros(0, complex)
    for k in range(MAX_EXPANSIONS):
        rts = roots(system, HalfPlane(r), options).roots
        if rts.size:
            break
        r -= _offset(system) * 2.0 ** (k + 1)
    if not rts.size:
        return Sensitivity(-math.inf, complex(-math.inf), np.zeros(len(positions)))
    lam = _pick_active(rts)
    return Sensitivity(float(lam.real), lam, _root_gradient(system, lam, positions))


# ---------------------------------------------------------------------------
# gamma(r) and C_D sensitivities


def _unit_a22(part: DelayDifferencePart, row: int, col: int) -> np.ndarray:
    """Derivative of ``U^T K V`` for a unit change of closed-loop entry (row, col)."""
    return np.outer(part.U[row, :], part.V[col, :])


def _gamma_gradients(part: DelayDifferencePart, r: float, positions, term: int, ntheta: int):
    """``(gamma, d gamma / d p, d gamma / d r)`` at ``r``.

    ``term`` is the index in ``part.A22`` of the term holding the controller.
    """
    det = gamma_r_detail(part, r, GammaROptions(Ntheta=ntheta))
    mu = det.eigenvalue
    if det.value == 0 or not np.isfinite(det.value):
        return det.value, np.zeros(len(positions)), 0.0
    terms = list(part.A22)
    A0 = terms[0][0]
    delayed = terms[1:]
    h = np.array([hk for _, hk in delayed])
    z = np.exp(-r * h) * np.exp(1j * det.theta)
    Ms = [np.linalg.solve(A0, m) for m, _ in delayed]
    T = sum(zk * mk for zk, mk in zip(z, Ms))
    w, v = det.left, det.right
    wv = np.vdot(w, v)

    def dabs(dT):
        dmu = np.vdot(w, dT @ v) / wv
        return float(np.real(np.conj(mu) * dmu) / abs(mu))

    dr = dabs(sum(-hk * zk * mk for hk, zk, mk in zip(h, z, Ms)))
    grads = []
    for row, col in positions:
        dA = _unit_a22(part, row, col)
        if term == 0:
            dT = -np.linalg.solve(A0, dA @ T)
        else:
            dT = z[term - 1] * np.linalg.solve(A0, dA)
        grads.append(dabs(dT))
    return det.value, np.array(grads), dr


def _controller_term(system: TdsSystem) -> int:
    """Index of the controller term (the second zero-delay term) in ``system.A``."""
    zero = np.flatnonzero(np.asarray(system.A.delays) == 0)
    return int(zero[1]) if zero.size > 1 else int(zero[0])


def _cd_and_gradient(part, positions, term, options: SynthOptions):
    c_d = cd(part, CdOptions(Ntheta=options.Ntheta))
    if not math.isfinite(c_d):
        return c_d, np.zeros(len(positions))
    _, gp, gr = _gamma_gradients(part, c_d, positions, term, options.Ntheta)
    if gr == 0:
        return c_d, np.zeros(len(positions))
    return c_d, -gp / gr


def _nominal_part(system: TdsSystem) -> DelayDifferencePart:
    merged = system.with_(A=TermList.build(list(system.A), system.A.shape))
    return delay_difference_part(merged)


# ---------------------------------------------------------------------------
# Objectives


def _fd_gradient(fn, p: np.ndarray, f0: float) -> np.ndarray:
    g = np.zeros_like(p)
    for i in range(p.size):
        h = 1e-6 * max(1.0, abs(p[i]))
        q = p.copy()
        q[i] += h
        g[i] = (fn(q) - f0) / h
    return g


def _abscissa(system, floor, problem, state):
    """(c, gradient) with ``c`` the largest real part of roots right of ``floor``."""
    rts = _rightmost(system, floor, problem, state)
    if not rts.size:
        return -math.inf, np.zeros(problem.dim)
    lam = _pick_active(rts)
    state.anchor = float(lam.real)
    try:
        g = _root_gradient(system, lam, problem.positions)
    except DefectiveRoot:
        log.debug("defective rightmost root %s; finite-difference gradient", lam)
        g = None
    return float(lam.real), g


def _stab_eval(p: np.ndarray, problem: _Problem, state: _EvalState) -> ObjectiveEvaluation:
    state.calls += 1
    opts = problem.options
    cl = problem.closed_loop(p)
    pos = problem.positions

    def value_only(q):
        return _stab_eval(q, problem, _EvalState(state.anchor, state.degree, 1)).f

    if not problem.neutral:
        c, g = _abscissa(cl, -math.inf, problem, state)
        if g is None:
            g = _fd_gradient(value_only, p, c)
        return ObjectiveEvaluation(c, g, c=c, branch="abscissa")
    try:
        part = delay_difference_part(cl)
    except SingularA22:
        return ObjectiveEvaluation(math.inf, np.zeros(problem.dim), branch="singular")
    term = _controller_term(cl)
    if problem.method is Method.CD:
        c_d, gcd = _cd_and_gradient(part, pos, term, opts)
        if c_d == math.inf:
            return ObjectiveEvaluation(math.inf, np.zeros(problem.dim), cd=c_d, branch="cd")
        c, g = _abscissa(cl, c_d + STRONG_GUARD if math.isfinite(c_d) else -math.inf, problem, state)
        if c >= c_d:
            if g is None:
                g = _fd_gradient(value_only, p, c)
            return ObjectiveEvaluation(c, g, c=c, cd=c_d, branch="abscissa")
        return ObjectiveEvaluation(c_d, gcd, c=c, cd=c_d, branch="cd")
    # Barrier: nominal abscissa plus -w2 log(1 - w1 - gamma0).
    g0, gg0, _ = _gamma_gradients(part, 0.0, pos, term, opts.Ntheta)
    slack = 1.0 - opts.w1 - g0
    if not slack > 0:
        return ObjectiveEvaluation(math.inf, np.zeros(problem.dim), gamma0=g0, branch="barrier")
    nominal = _nominal_part(cl)
    c_nom, g_nom = -math.inf, np.zeros(problem.dim)
    if nominal.classification is Classification.ESSENTIALLY_NEUTRAL:
        # The nominal spectrum has a root chain; its abscissa bounds c from below.
        c_nom, g_nom = _cd_and_gradient(nominal, pos, 0, opts)
    c, g = _abscissa(cl, c_nom + STRONG_GUARD if math.isfinite(c_nom) else -math.inf, problem, state)
    if c < c_nom:
        c, g = c_nom, g_nom
    if g is None:
        g = _fd_gradient(value_only, p, c - opts.w2 * math.log(slack))
    f = c - opts.w2 * math.log(slack)
    return ObjectiveEvaluation(f, g + opts.w2 * gg0 / slack, c=c, gamma0=g0, branch="barrier")


def objective_stab(
    p,
    plant: TdsSystem,
    pattern: ControllerPattern,
    options: SynthOptions = SynthOptions(),
) -> ObjectiveEvaluation:
    """Stabilization objective: abscissa, strong abscissa (CD) or barrier, by closed-loop type."""
    problem = _Problem(plant, pattern, options)
    return _stab_eval(np.asarray(p, dtype=float).reshape(-1), problem, _EvalState())


def _gamma0_eval(p: np.ndarray, problem: _Problem) -> tuple[float, np.ndarray]:
    cl = problem.closed_loop(p)
    part = delay_difference_part(cl)
    g0, gg, _ = _gamma_gradients(part, 0.0, problem.positions, _controller_term(cl), problem.options.Ntheta)
    return g0, gg


def _strong_abscissa(cl, problem, state):
    """Approach-1 value ``max(c, C_D)`` with gradient."""
    if not problem.neutral:
        c, g = _abscissa(cl, -math.inf, problem, state)
        return c, g
    part = delay_difference_part(cl)
    c_d, gcd = _cd_and_gradient(part, problem.positions, _controller_term(cl), problem.options)
    if c_d == math.inf:
        return math.inf, gcd
    c, g = _abscissa(cl, c_d + STRONG_GUARD if math.isfinite(c_d) else -math.inf, problem, state)
    if c >= c_d:
        return c, g
    return c_d, gcd


def _hinf_gradient(cl: TdsSystem, res, positions) -> np.ndarray:
    """d sigma_max / d p at the peak (finite frequency or asymptotic phases)."""
    sf = standard_form(cl)
    if math.isfinite(res.wpeak):
        ev = TransferEvaluator(sf)
        _, u, v, KB, CK, _ = ev.top_triplet(res.wpeak)
        # T = C K^{-1} B with K = sE - sum A_k e^{-s h_k}; dT/dp = C K^{-1} (dA/dp) K^{-1} B.
        x = u.conj() @ CK
        y = KB @ v
        return np.array([np.real(x[r] * y[c]) for r, c in positions])
    U, _, V, _, _ = numkernel.nullspace_split(sf.E)
    terms = list(TermList.build([(U.T @ m @ V, h) for m, h in sf.A], (U.shape[1],) * 2, merge=False))
    theta = np.asarray(res.theta)
    K = terms[0][0].astype(complex)
    for (m, _), th in zip(terms[1:], theta):
        K = K + m * np.exp(-1j * th)
    Bt = U.T @ sf.B
    Ct = sf.C @ V
    T = -Ct @ np.linalg.solve(K, Bt)
    Uu, _, Vh = np.linalg.svd(T)
    u, v = Uu[:, 0], Vh[0].conj()
    x = u.conj() @ Ct @ np.linalg.inv(K)
    y = np.linalg.solve(K, Bt @ v)
    zero = np.flatnonzero(np.asarray([h for _, h in terms]) == 0)
    idx = int(zero[1]) if zero.size > 1 else 0
    phase = np.exp(-1j * theta[idx - 1]) if idx > 0 else 1.0
    grads = []
    for r, c in positions:
        dK = np.outer(U[r, :], V[c, :]) * phase
        # T = -C K^{-1} B so dT = C K^{-1} dK K^{-1} B.
        grads.append(float(np.real(x @ dK @ y)))
    return np.array(grads)


def _hinf_eval(p: np.ndarray, problem: _Problem, state: _EvalState) -> ObjectiveEvaluation:
    state.calls += 1
    opts = problem.options
    alpha = opts.alpha
    cl = problem.closed_loop(p)
    f = 0.0
    grad = np.zeros(problem.dim)
    C = math.nan
    if alpha > 0:
        C, gC = _strong_abscissa(cl, problem, state)
        if gC is None:
            gC = _fd_gradient(lambda q: _strong_abscissa(problem.closed_loop(q), problem, _EvalState(state.anchor))[0], p, C)
        if alpha == 1.0:
            return ObjectiveEvaluation(C, gC, c=C, branch="strong_abscissa")
        f += alpha * C
        grad = grad + alpha * gC
    try:
        res = hinfnorm(cl, opts.hinf)
    except (SingularA22, SingularAtS):
        return ObjectiveEvaluation(math.inf, grad, c=C, hinf=math.inf, branch="hinf")
    if not math.isfinite(res.hinf):
        return ObjectiveEvaluation(math.inf, grad, c=C, hinf=math.inf, branch="hinf")
    gH = _hinf_gradient(cl, res, problem.positions)
    f += (1 - alpha) * res.hinf
    grad = grad + (1 - alpha) * gH
    return ObjectiveEvaluation(f, grad, c=C, hinf=res.hinf, branch="hinf")


def objective_hinf(
    p,
    plant: TdsSystem,
    pattern: ControllerPattern,
    options: SynthOptions = SynthOptions(),
) -> ObjectiveEvaluation:
    """``alpha C + (1 - alpha) |||T_zw|||``; ``+inf`` when the loop is not strongly stable."""
    problem = _Problem(plant, pattern, options)
    return _hinf_eval(np.asarray(p, dtype=float).reshape(-1), problem, _EvalState())


# ---------------------------------------------------------------------------
# Drivers


@dataclass
class SynthLog:
    starts: list[nsopt.OptResult] = field(default_factory=list)
    initial_values: list[float] = field(default_factory=list)
    discarded: list[int] = field(default_factory=list)
    best_start: int = -1
    objective: float = math.inf
    strong_sa: float = math.nan
    method: Method = Method.AUTO


class SynthResult(NamedTuple):
    controller: Controller
    closed_loop: TdsSystem
    log: SynthLog


def _initial_points(problem: _Problem, initials, nstart: int, seed: int) -> list[np.ndarray]:
    pts = []
    for x in initials or []:
        if isinstance(x, Controller):
            pts.append(pack(x, problem.pattern).p)
            continue
        a = np.asarray(x, dtype=float)
        if a.size == problem.dim:
            pts.append(a.reshape(-1))
        elif problem.pattern.nc == 0 and a.shape == problem.pattern.shapes[3]:
            pts.append(pack(Controller.static(a), problem.pattern).p)
        else:
            raise ShapeMismatch(f"initial value of shape {a.shape} does not fit {problem.dim} parameters")
    rng = np.random.default_rng(seed)
    while len(pts) < nstart:
        pts.append(rng.standard_normal(problem.dim))
    return pts


def _default_pattern(plant: TdsSystem, nc: int, pattern: ControllerPattern | None) -> ControllerPattern:
    if pattern is None:
        return ControllerPattern.full(nc, plant.p1, plant.q1)
    if pattern.nc != nc:
        raise ShapeMismatch(f"pattern has order {pattern.nc}, requested {nc}")
    expected = [(nc, nc), (nc, plant.q1), (plant.p1, nc), (plant.p1, plant.q1)]
    if pattern.shapes != expected:
        raise ShapeMismatch(f"pattern shapes {pattern.shapes}, expected {expected}")
    return pattern


def _minimize(fun, x0: np.ndarray, options: SynthOptions, seed: int) -> nsopt.OptResult:
    opts = dataclasses.replace(options.nsopt, seed=seed)
    res = nsopt.bfgs_minimize(fun, x0, opts)
    if opts.gradient_sampling and math.isfinite(res.f) and x0.size:
        gs = nsopt.gradient_sampling_refine(fun, res.x, opts)
        if gs.f < res.f:
            res = nsopt.OptResult(gs.x, gs.f, gs.g, res.status + "+gs",
                                  res.iterations + gs.iterations, res.history + gs.history[1:])
    return res


def _stab_start(problem: _Problem, x0: np.ndarray, seed: int) -> tuple[nsopt.OptResult, float]:
    opts = problem.options
    state = _EvalState()

    def fun(x):
        ev = _stab_eval(x, problem, state)
        if opts.print_level >= 2:
            log.info("f = %.10g (%s)", ev.f, ev.branch)
        return ev.f, ev.grad

    x = x0
    if problem.neutral and problem.method is Method.BARRIER:
        g0, _ = _gamma0_eval(x, problem)
        if g0 >= 1 - opts.w1:
            target = (1 - opts.w1) * 0.99
            pre = dataclasses.replace(opts.nsopt, fvalquit=target, seed=seed)
            x = nsopt.bfgs_minimize(lambda q: _gamma0_eval(q, problem), x, pre).x
    f0 = fun(x)[0]
    return _minimize(fun, x, opts, seed), f0


def _finish(problem: _Problem, results, initial_values, discarded, method) -> SynthResult:
    finite = [i for i, r in enumerate(results) if r is not None and math.isfinite(r.f)]
    starts = [r for r in results if r is not None]
    if not finite:
        best = next((i for i, r in enumerate(results) if r is not None), None)
        if best is None:
            raise FailedStronglyStabilizing("no start produced a usable controller")
    else:
        best = min(finite, key=lambda i: (results[i].f, i))
    res = results[best]
    controller = unpack(res.x, problem.pattern)
    cl = close_loop(problem.plant, controller)
    try:
        C = strong_sa(cl, -_offset(cl), problem.options.roots)
        if C == -math.inf:
            C = strong_sa(cl, -10.0, problem.options.roots)
    except SingularA22:
        C = math.inf
    log_ = SynthLog(starts, initial_values, discarded, best, res.f, C, method)
    return SynthResult(controller, cl, log_)


def stabopt(
    plant: TdsSystem,
    nc: int = 0,
    pattern: ControllerPattern | None = None,
    initials: Sequence | None = None,
    options: SynthOptions = SynthOptions(),
) -> SynthResult:
    """Search a (strongly) stabilizing controller of order ``nc``.

    Warns with :class:`NotStabilizing` if the best strong spectral abscissa is
    not negative; the best controller is still returned.
    """
    if nc < 0:
        raise ValueError("controller order must be non-negative")
    pattern = _default_pattern(plant, nc, pattern)
    problem = _Problem(plant, pattern, options)
    pts = _initial_points(problem, initials, options.nstart, options.seed)
    results, initial_values = [], []
    for i, x0 in enumerate(pts):
        res, f0 = _stab_start(problem, x0, options.seed + i)
        results.append(res)
        initial_values.append(f0)
        if options.print_level >= 1:
            log.info("start %d: f = %.10g (%s, %d iterations)", i, res.f, res.status, res.iterations)
    out = _finish(problem, results, initial_values, [], problem.method)
    if not out.log.strong_sa < 0:
        warnings.warn("Resulting controller is not stabilizing", NotStabilizing, stacklevel=2)
    return out


def hiopt(
    plant: TdsSystem,
    nc: int = 0,
    pattern: ControllerPattern | None = None,
    initials: Sequence | None = None,
    options: SynthOptions = SynthOptions(),
) -> SynthResult:
    """Minimize ``alpha C + (1 - alpha)`` strong H-infinity norm from strongly stabilizing starts.

    Starts that are not strongly stabilizing are first passed through
    :func:`stabopt`; those that remain unstable are discarded.
    """
    if nc < 0:
        raise ValueError("controller order must be non-negative")
    pattern = _default_pattern(plant, nc, pattern)
    problem = _Problem(plant, pattern, options)
    stab_problem = _Problem(plant, pattern, dataclasses.replace(options, method=Method.CD))
    pts = _initial_points(problem, initials, options.nstart, options.seed)
    results: list[nsopt.OptResult | None] = []
    initial_values, discarded = [], []
    for i, x0 in enumerate(pts):
        cl = problem.closed_loop(x0)
        if not _safe_strongly_stable(cl, options):
            res, _ = _stab_start(stab_problem, x0, options.seed + i)
            x0 = res.x
            if not _safe_strongly_stable(problem.closed_loop(x0), options):
                discarded.append(i)
                results.append(None)
                initial_values.append(math.inf)
                continue
        state = _EvalState()

        def fun(x, state=state):
            ev = _hinf_eval(x, problem, state)
            return ev.f, ev.grad

        initial_values.append(fun(x0)[0])
        res = _minimize(fun, x0, options, options.seed + i)
        results.append(res)
        if options.print_level >= 1:
            log.info("start %d: f = %.10g (%s)", i, res.f, res.status)
    if len(discarded) == len(pts):
        raise FailedStronglyStabilizing("Failed to find a strongly stabilizing initial controller")
    return _finish(problem, results, initial_values, discarded, problem.method)


def _safe_strongly_stable(cl: TdsSystem, options: SynthOptions) -> bool:
    try:
        return is_strongly_stable(cl, options.roots)
    except SingularA22:
        return False
