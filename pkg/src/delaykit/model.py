"""System representations and structural transformations.

A :class:`TdsSystem` describes

    E x'(t) + sum_k H_k x'(t - h_k) = sum_k A_k x(t - h_k)
                                      + sum_k B1_k u(t - h_k) + sum_k B2_k w(t - h_k)
    y(t) = sum_k C1_k x(t - h_k) + sum_k D11_k u(t - h_k) + sum_k D12_k w(t - h_k)
    z(t) = sum_k C2_k x(t - h_k) + sum_k D21_k u(t - h_k) + sum_k D22_k w(t - h_k)

with the characteristic matrix ``M(s) = s E + s sum H_k e^{-s h_k} - sum A_k e^{-s h_k}``.
``(u, y)`` are the control channels and ``(w, z)`` the performance channels.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, NamedTuple, Sequence, Union

import numpy as np

from delaykit import numkernel
from delaykit.errors import (
    AdvancedSystem,
    DdaeMissingZeroDelay,
    DimensionMismatch,
    ImproperTransferFunction,
    ModelError,
    NegativeDelay,
    NeutralZeroDelay,
    NoPerformanceChannels,
    SingularA22,
)

__all__ = [
    "Kind",
    "Classification",
    "TermList",
    "TdsSystem",
    "Controller",
    "ControllerPattern",
    "DelayDifferencePart",
    "StandardForm",
    "create_system",
    "from_quasipolynomial",
    "from_transfer_function",
    "to_ddae",
    "delay_difference_part",
    "standard_form",
    "asymptotic_transfer_function",
    "close_loop",
    "ClosedLoopLayout",
    "closed_loop_layout",
]

# Relative size below which a delayed difference coefficient counts as zero.
ZERO_TERM_RTOL = 1e-12


class Kind(enum.Enum):
    RETARDED = "retarded"
    NEUTRAL = "neutral"
    DDAE = "ddae"
    DELAY_DIFFERENCE = "delay_difference"


class Classification(enum.Enum):
    ESSENTIALLY_RETARDED = "essentially_retarded"
    ESSENTIALLY_NEUTRAL = "essentially_neutral"


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


def _as_matrix(m) -> np.ndarray:
    a = np.asarray(m, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        # A bare vector is read as a column (the common SISO B / D case).
        a = a.reshape(-1, 1)
    if a.ndim != 2:
        raise DimensionMismatch(f"expected a matrix, got an array of shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ModelError("matrix entries must be finite")
    return a


@dataclass(frozen=True)
class TermList:
    """Delayed coefficient family ``sum_k M_k e^{-s h_k}``.

    Terms are sorted by delay and duplicate delays are merged by summation
    unless ``merge=False``; unmerged duplicates at delay 0 model an
    infinitesimal delay (distinct for strong stability, equal for evaluation).
    ``shape`` is stored explicitly so an empty list still has dimensions.
    """

    matrices: tuple[np.ndarray, ...]
    delays: np.ndarray
    shape: tuple[int, int]

    @classmethod
    def build(
        cls,
        terms: Iterable[tuple[object, float]],
        shape: tuple[int, int] | None = None,
        *,
        merge: bool = True,
    ) -> TermList:
        merged: dict[float, np.ndarray] = {}
        kept: list[tuple[float, np.ndarray]] = []
        for m, h in terms:
            a = _as_matrix(m)
            h = float(h)
            if not np.isfinite(h):
                raise ModelError("delays must be finite")
            if h < 0:
                raise NegativeDelay(f"negative delay {h}")
            if shape is None:
                shape = a.shape
            if a.shape != tuple(shape):
                raise DimensionMismatch(f"term of shape {a.shape}, expected {tuple(shape)}")
            if merge:
                merged[h] = merged[h] + a if h in merged else a.copy()
            else:
                kept.append((h, a.copy()))
        if shape is None:
            raise DimensionMismatch("cannot infer the shape of an empty term list")
        if merge:
            kept = [(h, merged[h]) for h in sorted(merged)]
        else:
            kept.sort(key=lambda t: t[0])
        return cls(
            tuple(_frozen(m) for _, m in kept),
            _frozen(np.array([h for h, _ in kept], dtype=float)),
            (int(shape[0]), int(shape[1])),
        )

    @classmethod
    def empty(cls, rows: int, cols: int) -> TermList:
        return cls.build([], (rows, cols))

    @classmethod
    def constant(cls, m) -> TermList:
        return cls.build([(m, 0.0)])

    def __len__(self) -> int:
        return len(self.matrices)

    def __iter__(self) -> Iterator[tuple[np.ndarray, float]]:
        return iter(zip(self.matrices, (float(h) for h in self.delays)))

    @property
    def max_delay(self) -> float:
        return float(self.delays[-1]) if len(self.delays) else 0.0

    def at(self, delay: float) -> np.ndarray:
        """Total coefficient at an exact delay (zeros if absent)."""
        out = np.zeros(self.shape)
        for m, h in self:
            if h == delay:
                out = out + m
        return out

    def evaluate(self, s: complex) -> np.ndarray:
        out = np.zeros(self.shape, dtype=complex)
        for m, h in self:
            out += m * np.exp(-s * h)
        return out

    def derivative(self, s: complex) -> np.ndarray:
        out = np.zeros(self.shape, dtype=complex)
        for m, h in self:
            if h:
                out -= h * m * np.exp(-s * h)
        return out

    def map(self, fn) -> TermList:
        terms = [(fn(m), h) for m, h in self]
        if terms:
            return TermList.build(terms, merge=False)
        return TermList.build([], fn(np.zeros(self.shape)).shape)

    def drop_zeros(self, atol: float = 0.0) -> TermList:
        keep = [(m, h) for m, h in self if np.abs(m).max(initial=0.0) > atol]
        return TermList.build(keep, self.shape, merge=False)


TermsLike = Union[TermList, Sequence[tuple[object, float]], np.ndarray, None]


@dataclass(frozen=True)
class TdsSystem:
    """Validated time-delay system. Construct via :func:`create_system`."""

    kind: Kind
    E: np.ndarray
    A: TermList
    H: TermList
    B1: TermList
    C1: TermList
    D11: TermList
    B2: TermList
    C2: TermList
    D12: TermList
    D21: TermList
    D22: TermList

    def __post_init__(self) -> None:
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise DimensionMismatch("A terms must be square")
        if self.E.shape != (n, n):
            raise DimensionMismatch("E must match the dimension of A")
        if self.H.shape != (n, n):
            raise DimensionMismatch("H terms must be n-by-n")
        p1, q1, p2, q2 = self.p1, self.q1, self.p2, self.q2
        expected = {
            "B1": (n, p1), "C1": (q1, n), "D11": (q1, p1),
            "B2": (n, p2), "C2": (q2, n), "D12": (q1, p2),
            "D21": (q2, p1), "D22": (q2, p2),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise DimensionMismatch(f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        if self.kind in (Kind.RETARDED, Kind.NEUTRAL) and not np.array_equal(self.E, np.eye(n)):
            raise ModelError("retarded and neutral systems require E = I")
        if self.kind is not Kind.NEUTRAL and len(self.H):
            raise ModelError("only neutral systems carry H terms")
        if self.kind is Kind.NEUTRAL and len(self.H) and self.H.delays[0] == 0:
            raise NeutralZeroDelay("neutral H terms need strictly positive delays")
        if self.kind in (Kind.DDAE, Kind.DELAY_DIFFERENCE) and n and (
            not len(self.A) or self.A.delays[0] != 0
        ):
            raise DdaeMissingZeroDelay("descriptor systems need an A term at delay 0")
        if self.kind is Kind.DELAY_DIFFERENCE:
            if np.any(self.E):
                raise ModelError("delay difference systems have E = 0")
            if n and np.linalg.matrix_rank(self.A.matrices[0]) < n:
                raise SingularA22("zero-delay coefficient of a difference system is singular")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def p1(self) -> int:
        return self.B1.shape[1]

    @property
    def q1(self) -> int:
        return self.C1.shape[0]

    @property
    def p2(self) -> int:
        return self.B2.shape[1]

    @property
    def q2(self) -> int:
        return self.C2.shape[0]

    @property
    def tau_max(self) -> float:
        """Largest state delay (input/output delays do not affect the spectrum)."""
        return max(self.A.max_delay, self.H.max_delay)

    @property
    def is_delay_free(self) -> bool:
        return self.tau_max == 0.0

    def char_matrix(self, s: complex) -> np.ndarray:
        return s * (self.E + self.H.evaluate(s)) - self.A.evaluate(s)

    def char_derivative(self, s: complex) -> np.ndarray:
        """d/ds of the characteristic matrix."""
        return self.E + self.H.evaluate(s) + s * self.H.derivative(s) - self.A.derivative(s)

    def state_scale(self) -> float:
        """Size of the coefficients, used to make residuals relative."""
        return float(
            sum(np.linalg.norm(m, 2) for m, _ in self.A) if len(self.A) else 0.0
        )

    def derivative_scale(self) -> float:
        return float(np.linalg.norm(self.E, 2) + sum(np.linalg.norm(m, 2) for m, _ in self.H))

    def with_(self, **changes) -> TdsSystem:
        return replace(self, **changes)


def _terms(value: TermsLike, shape: tuple[int, int] | None) -> TermList:
    if isinstance(value, TermList):
        if shape is not None and value.shape != shape:
            raise DimensionMismatch(f"term list of shape {value.shape}, expected {shape}")
        return value
    if value is None:
        return TermList.build([], shape)
    if isinstance(value, np.ndarray) or (
        isinstance(value, (list, tuple)) and value and not isinstance(value[0], tuple)
    ):
        return TermList.build([(value, 0.0)], shape)
    return TermList.build(value, shape)


def _first_shape(*values: TermsLike) -> list[tuple[int, int] | None]:
    out = []
    for v in values:
        if v is None:
            out.append(None)
        elif isinstance(v, TermList):
            out.append(v.shape)
        else:
            out.append(_terms(v, None).shape if _nonempty(v) else None)
    return out


def _nonempty(v: TermsLike) -> bool:
    if v is None:
        return False
    if isinstance(v, TermList):
        return True
    if isinstance(v, np.ndarray):
        return True
    return len(v) > 0


def _pick(dim_sources: list[int | None], default: int = 0) -> int:
    vals = {d for d in dim_sources if d is not None}
    if len(vals) > 1:
        raise DimensionMismatch(f"inconsistent channel dimensions {sorted(vals)}")
    return vals.pop() if vals else default


def create_system(
    kind: Kind | str,
    A: TermsLike,
    *,
    E=None,
    H: TermsLike = None,
    B1: TermsLike = None,
    C1: TermsLike = None,
    D11: TermsLike = None,
    B2: TermsLike = None,
    C2: TermsLike = None,
    D12: TermsLike = None,
    D21: TermsLike = None,
    D22: TermsLike = None,
) -> TdsSystem:
    """Build and validate a system.

    Each term family may be a :class:`TermList`, a sequence of
    ``(matrix, delay)`` pairs, or a single matrix (taken at delay 0).
    Missing channels become empty lists with dimensions inferred from
    the channels that are present.
    """
    kind = Kind(kind) if not isinstance(kind, Kind) else kind
    if kind is Kind.DDAE and (A is None or not _nonempty(A)):
        raise DdaeMissingZeroDelay("descriptor systems need an A term at delay 0")
    A_t = _terms(A, None if E is None else _as_matrix(E).shape)
    n = A_t.shape[0]
    s = dict(zip(
        ["B1", "C1", "D11", "B2", "C2", "D12", "D21", "D22"],
        _first_shape(B1, C1, D11, B2, C2, D12, D21, D22),
    ))

    def r(name):
        return None if s[name] is None else s[name][0]

    def c(name):
        return None if s[name] is None else s[name][1]

    p1 = _pick([c("B1"), c("D11"), c("D21")])
    q1 = _pick([r("C1"), r("D11"), r("D12")])
    p2 = _pick([c("B2"), c("D12"), c("D22")])
    q2 = _pick([r("C2"), r("D21"), r("D22")])
    if E is None:
        if kind is Kind.DELAY_DIFFERENCE:
            E_m = np.zeros((n, n))
        else:
            E_m = np.eye(n)
    else:
        E_m = _as_matrix(E)
    return TdsSystem(
        kind=kind,
        E=_frozen(E_m),
        A=A_t,
        H=_terms(H, (n, n)),
        B1=_terms(B1, (n, p1)),
        C1=_terms(C1, (q1, n)),
        D11=_terms(D11, (q1, p1)),
        B2=_terms(B2, (n, p2)),
        C2=_terms(C2, (q2, n)),
        D12=_terms(D12, (q1, p2)),
        D21=_terms(D21, (q2, p1)),
        D22=_terms(D22, (q2, p2)),
    )


def _group_rows(coeffs: np.ndarray, tau: np.ndarray) -> dict[float, np.ndarray]:
    rows: dict[float, np.ndarray] = {}
    for row, t in zip(coeffs, tau):
        t = float(t)
        if t < 0:
            raise NegativeDelay(f"negative delay {t}")
        rows[t] = rows[t] + row if t in rows else np.array(row, dtype=float)
    return rows


def from_quasipolynomial(P, tau) -> TdsSystem:
    """Companion realization of ``sum_k (sum_j P[k, j] s^{n-j}) e^{-s tau_k}``.

    The characteristic function of the result equals the quasi-polynomial
    divided by the leading coefficient of its zero-delay part.
    """
    P = np.atleast_2d(np.asarray(P, dtype=float))
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    if P.shape[0] != tau.size:
        raise DimensionMismatch("one delay per coefficient row is required")
    n = P.shape[1] - 1
    if n < 1:
        raise DimensionMismatch("the quasi-polynomial must have degree at least 1")
    rows = _group_rows(P, tau)
    if 0.0 not in rows or rows[0.0][0] == 0:
        raise AdvancedSystem("no zero-delay row with nonzero leading coefficient")
    lead = rows[0.0][0]
    A_terms, H_terms = [], []
    for t, row in sorted(rows.items()):
        A_k = np.zeros((n, n))
        if t == 0:
            A_k[np.arange(n - 1), np.arange(1, n)] = 1.0
        A_k[n - 1, :] = -row[n - np.arange(n)] / lead
        if t == 0 or np.any(A_k):
            A_terms.append((A_k, t))
        if t > 0 and row[0] != 0:
            H_k = np.zeros((n, n))
            H_k[n - 1, n - 1] = row[0] / lead
            H_terms.append((H_k, t))
    kind = Kind.NEUTRAL if H_terms else Kind.RETARDED
    return create_system(kind, A_terms, H=H_terms or None)


def _strip_leading_zero_columns(M: np.ndarray) -> np.ndarray:
    k = 0
    while k < M.shape[1] - 1 and not np.any(M[:, k]):
        k += 1
    return M[:, k:]


def from_transfer_function(P, Q, tau, D=None) -> TdsSystem:
    """Realize the SISO transfer function ``P(s)/Q(s) + D(s)`` on the control channel.

    ``P``, ``Q`` and ``D`` hold one row per delay in ``tau``; columns of ``P`` and
    ``Q`` are coefficients in descending powers of ``s``.  A strictly proper
    ratio is realized in observer-companion form (neutral when delayed rows
    of ``Q`` have nonzero leading coefficients).  A biproper ratio gets a
    descriptor realization with one algebraic variable standing for the
    highest derivative.
    """
    P = np.atleast_2d(np.asarray(P, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    if P.shape[0] != tau.size or Q.shape[0] != tau.size:
        raise DimensionMismatch("P and Q need one row per delay")
    P = _strip_leading_zero_columns(P)
    Q = _strip_leading_zero_columns(Q)
    nP, n = P.shape[1] - 1, Q.shape[1] - 1
    if nP > n:
        raise ImproperTransferFunction("numerator degree exceeds denominator degree")
    if D is not None:
        D = np.asarray(D, dtype=float).reshape(-1)
        if D.size != tau.size:
            raise DimensionMismatch("D needs one entry per delay")
        if nP == n and np.any(D):
            raise ImproperTransferFunction("a direct term is only allowed for strictly proper P/Q")
    q_rows = _group_rows(Q, tau)
    if 0.0 not in q_rows or q_rows[0.0][0] == 0:
        raise AdvancedSystem("no zero-delay denominator row with nonzero leading coefficient")
    q0 = q_rows[0.0][0]
    # Pad P to n + 1 columns so column n - i is the coefficient of s^i.
    p_rows = _group_rows(np.hstack([np.zeros((tau.size, n - nP)), P]), tau)

    if nP < n:
        A_terms, H_terms, B_terms = [], [], []
        for t, row in sorted(q_rows.items()):
            A_k = np.zeros((n, n))
            if t == 0:
                A_k[np.arange(1, n), np.arange(n - 1)] = 1.0
            A_k[:, n - 1] = -row[n - np.arange(n)] / q0
            if t == 0 or np.any(A_k):
                A_terms.append((A_k, t))
            if t > 0 and row[0] != 0:
                H_k = np.zeros((n, n))
                H_k[n - 1, n - 1] = row[0] / q0
                H_terms.append((H_k, t))
        for t, row in sorted(p_rows.items()):
            b = (row[n - np.arange(n)] / q0).reshape(n, 1)
            if np.any(b):
                B_terms.append((b, t))
        C = np.zeros((1, n))
        C[0, n - 1] = 1.0
        D_terms = [] if D is None else [(d, t) for d, t in zip(D, tau) if d != 0]
        kind = Kind.NEUTRAL if H_terms else Kind.RETARDED
        return create_system(
            kind, A_terms, H=H_terms or None,
            B1=TermList.build(B_terms, (n, 1)),
            C1=[(C, 0.0)],
            D11=TermList.build(D_terms, (1, 1)),
        )

    # Biproper: states xi, xi', ..., xi^(n-1) and algebraic v = xi^(n), with Q(d/dt) xi = u.
    m = n + 1
    E = np.zeros((m, m))
    E[:n, :n] = np.eye(n)
    A_terms, C_terms = [], []
    for t, row in sorted(q_rows.items()):
        A_k = np.zeros((m, m))
        if t == 0:
            A_k[np.arange(n), np.arange(1, m)] = 1.0
        A_k[n, :n] = -row[n - np.arange(n)] / q0
        A_k[n, n] = -row[0] / q0
        if t == 0 or np.any(A_k):
            A_terms.append((A_k, t))
    for t, row in sorted(p_rows.items()):
        c = np.concatenate([row[n - np.arange(n)], row[:1]]).reshape(1, m)
        if np.any(c):
            C_terms.append((c, t))
    B = np.zeros((m, 1))
    B[n, 0] = 1.0 / q0
    return create_system(
        Kind.DDAE, A_terms, E=E,
        B1=[(B, 0.0)],
        C1=TermList.build(C_terms, (1, m)),
        D11=TermList.empty(1, 1),
    )


def _pad(tl: TermList, rows: int, cols: int, r0: int = 0, c0: int = 0) -> TermList:
    """Embed every term of ``tl`` into a zero matrix of size rows x cols."""

    def emb(m):
        out = np.zeros((rows, cols))
        out[r0:r0 + m.shape[0], c0:c0 + m.shape[1]] = m
        return out

    return TermList.build([(emb(m), h) for m, h in tl], (rows, cols))


def to_ddae(system: TdsSystem) -> TdsSystem:
    """Descriptor form. Neutral systems get the state ``[x; xi]`` with
    ``xi = x + sum H_k x(t - h_k)``, doubling the dimension."""
    if system.kind in (Kind.DDAE, Kind.DELAY_DIFFERENCE):
        return system
    n = system.n
    if system.kind is Kind.RETARDED:
        A = system.A
        if not len(A) or A.delays[0] != 0:
            A = TermList.build(list(A) + [(np.zeros((n, n)), 0.0)], (n, n), merge=False)
        return replace(system, kind=Kind.DDAE, A=A)
    N = 2 * n
    E = np.zeros((N, N))
    E[:n, n:] = np.eye(n)
    terms: list[tuple[np.ndarray, float]] = []
    zero = np.zeros((N, N))
    zero[n:, :n] = np.eye(n)
    zero[n:, n:] = -np.eye(n)
    terms.append((zero, 0.0))
    for m, h in system.A:
        blk = np.zeros((N, N))
        blk[:n, :n] = m
        terms.append((blk, h))
    for m, h in system.H:
        blk = np.zeros((N, N))
        blk[n:, :n] = m
        terms.append((blk, h))
    return TdsSystem(
        kind=Kind.DDAE,
        E=_frozen(E),
        A=TermList.build(terms, (N, N)),
        H=TermList.empty(N, N),
        B1=_pad(system.B1, N, system.p1),
        C1=_pad(system.C1, system.q1, N),
        D11=system.D11,
        B2=_pad(system.B2, N, system.p2),
        C2=_pad(system.C2, system.q2, N),
        D12=system.D12,
        D21=system.D21,
        D22=system.D22,
    )


@dataclass(frozen=True)
class DelayDifferencePart:
    """The algebraic difference subsystem governing high-frequency roots."""

    A22: TermList
    U: np.ndarray
    V: np.ndarray
    Uperp: np.ndarray
    Vperp: np.ndarray
    classification: Classification

    @property
    def nu(self) -> int:
        return self.A22.shape[0]

    @property
    def delayed(self) -> list[tuple[np.ndarray, float]]:
        """All terms after the leading one, including infinitesimally delayed ones."""
        return list(self.A22)[1:]

    def normalized(self) -> list[tuple[np.ndarray, float]]:
        """Delayed coefficients premultiplied by the inverse leading coefficient."""
        A0 = self.A22.matrices[0]
        return [(np.linalg.solve(A0, m), h) for m, h in self.delayed]


def _depends_on_lambda(A22: TermList, seed: int = 0) -> bool:
    """Whether ``det(sum A22_k z_k)`` varies with the phases ``z_k``.

    Nilpotent coupling (e.g. static feedback without feedthrough) gives
    delayed terms whose determinant contribution vanishes identically.
    """
    if A22.shape[0] == 0 or len(A22) < 2:
        return False
    A0 = A22.matrices[0]
    Ms = [np.linalg.solve(A0, m) for m in A22.matrices[1:]]
    if not any(np.any(m) for m in Ms):
        return False
    rng = np.random.default_rng(seed)
    nu = A0.shape[0]
    for _ in range(4):
        z = 2.0 * np.exp(2j * np.pi * rng.random(len(Ms)))
        T = np.eye(nu) + sum(zk * m for zk, m in zip(z, Ms))
        if abs(np.linalg.det(T) - 1.0) > 1e-9 * max(1.0, np.linalg.norm(T) ** nu):
            return True
    return False


def _check_invertible(A0: np.ndarray) -> None:
    if A0.size and (not np.all(np.isfinite(A0)) or np.linalg.cond(A0) > 1e13):
        raise SingularA22("zero-delay difference coefficient is singular")


def delay_difference_part(system: TdsSystem) -> DelayDifferencePart:
    n = system.n
    if system.kind is Kind.RETARDED:
        return DelayDifferencePart(
            TermList.empty(0, 0), _frozen(np.zeros((n, 0))), _frozen(np.zeros((n, 0))),
            _frozen(np.eye(n)), _frozen(np.eye(n)), Classification.ESSENTIALLY_RETARDED,
        )
    if system.kind is Kind.NEUTRAL:
        A22 = TermList.build([(np.eye(n), 0.0)] + list(system.H), (n, n))
        U = V = _frozen(np.eye(n))
        Up = Vp = _frozen(np.zeros((n, 0)))
    else:
        U, Up, V, Vp, _ = numkernel.nullspace_split(system.E)
        nu = U.shape[1]
        terms = [(U.T @ m @ V, h) for m, h in system.A]
        scale = max((np.abs(m).max(initial=0.0) for m, _ in system.A), default=1.0)
        tol = ZERO_TERM_RTOL * max(scale, 1.0)
        terms = [(m, h) for m, h in terms if h == 0 or np.abs(m).max(initial=0.0) > tol]
        A22 = TermList.build(terms, (nu, nu), merge=False)
    if A22.shape[0]:
        if not len(A22) or A22.delays[0] != 0:
            raise SingularA22("no zero-delay difference coefficient")
        _check_invertible(A22.matrices[0])
    neutral = _depends_on_lambda(A22)
    cls = Classification.ESSENTIALLY_NEUTRAL if neutral else Classification.ESSENTIALLY_RETARDED
    return DelayDifferencePart(A22, _frozen(U), _frozen(V), _frozen(Up), _frozen(Vp), cls)


class StandardForm(NamedTuple):
    """``z = C X``, ``E X' = sum A_k X(t - h_k) + B w`` with no feedthrough."""

    E: np.ndarray
    A: TermList
    B: np.ndarray
    C: np.ndarray

    def char_matrix(self, s: complex) -> np.ndarray:
        return s * self.E - self.A.evaluate(s)

    def transfer(self, s: complex) -> np.ndarray:
        return self.C @ np.linalg.solve(self.char_matrix(s), self.B.astype(complex))


def _is_standard(sys: TdsSystem) -> bool:
    return (
        len(sys.B2) == 1 and sys.B2.delays[0] == 0
        and len(sys.C2) == 1 and sys.C2.delays[0] == 0
        and not len(sys.D22)
    )


def standard_form(system: TdsSystem) -> StandardForm:
    """Descriptor realization of ``w -> z`` with undelayed ``B`` and ``C``.

    Input delays, output delays and feedthrough are moved into the dynamics
    through algebraic copies of ``w`` and ``z``.
    """
    if system.p2 == 0 or system.q2 == 0:
        raise NoPerformanceChannels("system has no performance channels")
    sys = to_ddae(system)
    n, p2, q2 = sys.n, sys.p2, sys.q2
    A = sys.A if len(sys.A) and sys.A.delays[0] == 0 else TermList.build(
        list(sys.A) + [(np.zeros((n, n)), 0.0)], (n, n), merge=False)
    if _is_standard(sys):
        return StandardForm(sys.E, A, sys.B2.matrices[0], sys.C2.matrices[0])
    N = n + p2 + q2
    iw, iz = slice(n, n + p2), slice(n + p2, N)
    E = np.zeros((N, N))
    E[:n, :n] = sys.E
    blocks: dict[float, np.ndarray] = {}

    def blk(h):
        return blocks.setdefault(h, np.zeros((N, N)))

    z0 = blk(0.0)
    z0[iw, iw] = -np.eye(p2)
    z0[iz, iz] = -np.eye(q2)
    extras = []
    for i, (m, h) in enumerate(A):
        if i and h == 0:
            # Keep infinitesimally delayed terms apart.
            extra = np.zeros((N, N))
            extra[:n, :n] = m
            extras.append((extra, 0.0))
        else:
            blk(h)[:n, :n] += m
    for m, h in sys.B2:
        blk(h)[:n, iw] += m
    for m, h in sys.C2:
        blk(h)[iz, :n] += m
    for m, h in sys.D22:
        blk(h)[iz, iw] += m
    B = np.zeros((N, p2))
    B[iw, :] = np.eye(p2)
    C = np.zeros((q2, N))
    C[:, iz] = np.eye(q2)
    terms = [(m, h) for h, m in blocks.items()] + extras
    return StandardForm(_frozen(E), TermList.build(terms, (N, N), merge=False), _frozen(B), _frozen(C))


def asymptotic_transfer_function(system: TdsSystem) -> TdsSystem:
    """Difference system realizing the high-frequency limit of ``w -> z``.

    Its transfer function is ``-C V (sum U^T A_k V e^{-s h_k})^{-1} U^T B``
    where ``U``, ``V`` span the left and right null spaces of the standard-form ``E``.
    """
    sf = standard_form(system)
    U, _, V, _, _ = numkernel.nullspace_split(sf.E)
    nu = U.shape[1]
    p2, q2 = sf.B.shape[1], sf.C.shape[0]
    if nu == 0:
        A22 = TermList.empty(0, 0)
    else:
        A22 = TermList.build([(U.T @ m @ V, h) for m, h in sf.A], (nu, nu), merge=False)
        _check_invertible(A22.matrices[0])
    return TdsSystem(
        kind=Kind.DELAY_DIFFERENCE,
        E=_frozen(np.zeros((nu, nu))),
        A=A22,
        H=TermList.empty(nu, nu),
        B1=TermList.empty(nu, 0),
        C1=TermList.empty(0, nu),
        D11=TermList.empty(0, 0),
        B2=TermList.build([(U.T @ sf.B, 0.0)], (nu, p2)),
        C2=TermList.build([(sf.C @ V, 0.0)], (q2, nu)),
        D12=TermList.empty(0, p2),
        D21=TermList.empty(q2, 0),
        D22=TermList.empty(q2, p2),
    )


@dataclass(frozen=True)
class Controller:
    """Output feedback ``xc' = Ac xc + Bc y``, ``u = Cc xc + Dc y``."""

    Ac: np.ndarray
    Bc: np.ndarray
    Cc: np.ndarray
    Dc: np.ndarray

    def __post_init__(self) -> None:
        for name in ("Ac", "Bc", "Cc", "Dc"):
            a = np.asarray(getattr(self, name), dtype=float)
            if a.ndim != 2:
                raise DimensionMismatch(f"{name} must be a matrix")
            object.__setattr__(self, name, _frozen(a))
        nc = self.Ac.shape[0]
        p1, q1 = self.Dc.shape
        if (
            self.Ac.shape != (nc, nc)
            or self.Bc.shape != (nc, q1)
            or self.Cc.shape != (p1, nc)
        ):
            raise DimensionMismatch("controller matrices have inconsistent shapes")

    @classmethod
    def static(cls, Dc) -> Controller:
        Dc = np.atleast_2d(np.asarray(Dc, dtype=float))
        p1, q1 = Dc.shape
        return cls(np.zeros((0, 0)), np.zeros((0, q1)), np.zeros((p1, 0)), Dc)

    @classmethod
    def zeros(cls, nc: int, p1: int, q1: int) -> Controller:
        return cls(np.zeros((nc, nc)), np.zeros((nc, q1)), np.zeros((p1, nc)), np.zeros((p1, q1)))

    @property
    def nc(self) -> int:
        return self.Ac.shape[0]

    @property
    def p1(self) -> int:
        return self.Dc.shape[0]

    @property
    def q1(self) -> int:
        return self.Dc.shape[1]

    def blocks(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        return self.Ac, self.Bc, self.Cc, self.Dc


@dataclass(frozen=True)
class ControllerPattern:
    """Structure constraint: entries with ``mask`` False are pinned to ``basis``."""

    mask: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]
    basis: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]

    def __post_init__(self) -> None:
        mask = tuple(np.asarray(m, dtype=bool).reshape(np.shape(m)) for m in self.mask)
        basis = tuple(_frozen(np.asarray(b, dtype=float).reshape(np.shape(b))) for b in self.basis)
        if len(mask) != 4 or len(basis) != 4:
            raise DimensionMismatch("mask and basis need four matrices (Ac, Bc, Cc, Dc)")
        for m, b in zip(mask, basis):
            m.setflags(write=False)
            if m.shape != b.shape:
                raise DimensionMismatch("mask and basis shapes differ")
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "basis", basis)

    @classmethod
    def full(cls, nc: int, p1: int, q1: int) -> ControllerPattern:
        shapes = [(nc, nc), (nc, q1), (p1, nc), (p1, q1)]
        return cls(tuple(np.ones(s, bool) for s in shapes), tuple(np.zeros(s) for s in shapes))

    @classmethod
    def static(cls, mask, basis=None) -> ControllerPattern:
        """Pattern for a static gain ``u = Dc y``."""
        mask = np.atleast_2d(np.asarray(mask, dtype=bool))
        p1, q1 = mask.shape
        basis = np.zeros((p1, q1)) if basis is None else np.atleast_2d(np.asarray(basis, dtype=float))
        empty = [(0, 0), (0, q1), (p1, 0)]
        return cls(
            tuple(np.zeros(s, bool) for s in empty) + (mask,),
            tuple(np.zeros(s) for s in empty) + (basis,),
        )

    @property
    def nc(self) -> int:
        return self.mask[0].shape[0]

    @property
    def shapes(self) -> list[tuple[int, int]]:
        return [m.shape for m in self.mask]


@dataclass(frozen=True)
class ClosedLoopLayout:
    """Index bookkeeping for the closed loop state ``[x; y; xc; u]``."""

    n: int
    q1: int
    nc: int
    p1: int
    plant_n: int = field(default=0)

    @property
    def size(self) -> int:
        return self.n + self.q1 + self.nc + self.p1

    @property
    def y(self) -> slice:
        return slice(self.n, self.n + self.q1)

    @property
    def xc(self) -> slice:
        return slice(self.n + self.q1, self.n + self.q1 + self.nc)

    @property
    def u(self) -> slice:
        return slice(self.n + self.q1 + self.nc, self.size)

    def controller_positions(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Row/column index grids in the controller term of the closed loop
        for the entries of (Ac, Bc, Cc, Dc)."""
        xc = np.arange(self.xc.start, self.xc.stop)
        y = np.arange(self.y.start, self.y.stop)
        u = np.arange(self.u.start, self.u.stop)
        return [np.ix_(xc, xc), np.ix_(xc, y), np.ix_(u, xc), np.ix_(u, y)]


def closed_loop_layout(plant: TdsSystem, nc: int) -> ClosedLoopLayout:
    n = 2 * plant.n if plant.kind is Kind.NEUTRAL else plant.n
    return ClosedLoopLayout(n, plant.q1, nc, plant.p1, plant.n)


def close_loop(plant: TdsSystem, controller: Controller) -> TdsSystem:
    """Feedback interconnection as a descriptor system in ``[x; y; xc; u]``.

    The measured output ``y`` and control input ``u`` stay as algebraic
    variables. The controller occupies its own zero-delay term (the last
    one), read as an infinitesimal feedback delay, so its entries enter
    affinely and strong stability accounts for arbitrarily small loop delays.
    """
    if controller.p1 != plant.p1 or controller.q1 != plant.q1:
        raise DimensionMismatch(
            f"controller is {controller.p1}x{controller.q1}, plant needs {plant.p1}x{plant.q1}"
        )
    P = to_ddae(plant)
    lay = closed_loop_layout(plant, controller.nc)
    n, N = lay.n, lay.size
    ix, iy, ic, iu = slice(0, n), lay.y, lay.xc, lay.u
    E = np.zeros((N, N))
    E[ix, ix] = P.E
    E[ic, ic] = np.eye(controller.nc)
    blocks: dict[float, np.ndarray] = {}

    def blk(h):
        return blocks.setdefault(h, np.zeros((N, N)))

    z = blk(0.0)
    z[iy, iy] = -np.eye(lay.q1)
    z[iu, iu] = -np.eye(lay.p1)
    K = np.zeros((N, N))
    K[ic, ic] = controller.Ac
    K[ic, iy] = controller.Bc
    K[iu, ic] = controller.Cc
    K[iu, iy] = controller.Dc
    for i, (m, h) in enumerate(P.A):
        if i and h == 0:
            raise ModelError("plant already carries an infinitesimally delayed term")
        blk(h)[ix, ix] += m
    for m, h in P.B1:
        blk(h)[ix, iu] += m
    for m, h in P.C1:
        blk(h)[iy, ix] += m
    for m, h in P.D11:
        blk(h)[iy, iu] += m

    def rows_embed(tl: TermList, pieces) -> TermList:
        # pieces: list of (TermList, row slice) stacked into N rows
        terms = []
        for part, sl in pieces:
            for m, h in part:
                out = np.zeros((N, tl.shape[1]))
                out[sl, :] = m
                terms.append((out, h))
        return TermList.build(terms, (N, tl.shape[1]))

    def cols_embed(tl: TermList, pieces) -> TermList:
        terms = []
        for part, sl in pieces:
            for m, h in part:
                out = np.zeros((tl.shape[0], N))
                out[:, sl] = m
                terms.append((out, h))
        return TermList.build(terms, (tl.shape[0], N))

    B2 = rows_embed(P.B2, [(P.B2, ix), (P.D12, iy)])
    C2 = cols_embed(P.C2, [(P.C2, ix), (P.D21, iu)])
    return TdsSystem(
        kind=Kind.DDAE,
        E=_frozen(E),
        A=TermList.build([(m, h) for h, m in blocks.items()] + [(K, 0.0)], (N, N), merge=False),
        H=TermList.empty(N, N),
        B1=TermList.empty(N, 0),
        C1=TermList.empty(0, N),
        D11=TermList.empty(0, 0),
        B2=B2,
        C2=C2,
        D12=TermList.empty(0, P.p2),
        D21=TermList.empty(P.q2, 0),
        D22=P.D22,
    )
