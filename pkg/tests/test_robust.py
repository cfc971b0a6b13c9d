import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from delaykit.errors import (
    IndexOutOfRange,
    ModelError,
    NoSignChange,
    ShapeMismatch,
    UnsupportedUncertaintyKind,
)
from delaykit.model import create_system
from delaykit.robust import (
    Perturbation,
    PsaOptions,
    UncertainDelay,
    UncertainMatrix,
    add_uncertainty,
    create_delta,
    dins,
    instantiate,
    psa,
)
from delaykit.spectrum import RootsOptions, sa

QUIET = RootsOptions(quiet=True)


def scalar_case():
    """x' = (-1 + delta) x."""
    nominal = create_system("retarded", [(np.array([[-1.0]]), 0.0)])
    return add_uncertainty(nominal, create_delta([(1, 1)]), 0, [UncertainMatrix([0], [[[1.0]]], [[[1.0]]])])


def symmetric_case(A):
    """x' = (A + delta) x with a full real 2x2 block."""
    nominal = create_system("retarded", [(A, 0.0)])
    return add_uncertainty(nominal, create_delta([(2, 2)]), 0, [UncertainMatrix([0], [np.eye(2)], [np.eye(2)])])


def delay_case():
    """Full 2x2 block on A0 plus an uncertain delay on the second term."""
    A = np.array([[-2.0, 0.5], [0.5, -1.0]])
    nominal = create_system("retarded", [(A, 0.0), (0.3 * np.eye(2), 1.0)])
    return add_uncertainty(
        nominal, create_delta([(2, 2)]), 1,
        [UncertainMatrix([0], [np.eye(2)], [np.eye(2)]), None],
        [None, UncertainDelay([0], [0.5])],
    )


def random_feasible(usys, eps, rng):
    deltas = []
    for b in usys.delta.blocks:
        d = rng.standard_normal(b.shape)
        deltas.append(d * eps * rng.random() ** 0.25 / np.linalg.norm(d))
    return Perturbation(tuple(deltas), eps * rng.uniform(-1, 1, usys.delta.n_delay))


def test_scalar_value_and_instability_radius():
    u = scalar_case()
    assert abs(psa(u, 0.3).value - (-0.7)) <= 1e-10
    assert abs(dins(u, (0.0, 2.0)) - 1.0) <= 1e-3


@given(st.floats(-3.0, 1.0), st.floats(-3.0, 1.0), st.floats(-1.0, 1.0), st.floats(0.05, 1.0))
def test_symmetric_block_closed_form(a, d, b, eps):
    A = np.array([[a, b], [b, d]])
    res = psa(symmetric_case(A), eps)
    assert abs(res.value - (np.linalg.eigvalsh(A)[-1] + eps)) <= 1e-6


@pytest.mark.parametrize("make,eps", [(scalar_case, 0.3), (delay_case, 0.4)])
def test_sampling_never_exceeds_psa(make, eps):
    u = make()
    value = psa(u, eps).value
    rng = np.random.default_rng(7)
    worst = max(sa(instantiate(u, random_feasible(u, eps, rng)), -5.0, QUIET) for _ in range(500))
    assert worst <= value + 1e-6


@pytest.mark.parametrize("make,eps", [(scalar_case, 0.3), (delay_case, 0.4), (delay_case, 0.1)])
def test_witness_reproduces_value(make, eps):
    u = make()
    res = psa(u, eps)
    assert np.all(res.witness.norms() <= eps + 1e-12)
    assert abs(sa(instantiate(u, res.witness), res.value - 1.0, QUIET) - res.value) <= 1e-6
    assert res.value >= res.nominal - 1e-9
    assert float(res) == res.value


@settings(max_examples=10)
@given(st.floats(0.0, 0.6), st.floats(0.0, 0.6))
def test_monotone_in_epsilon(e1, e2):
    lo, hi = sorted((e1, e2))
    u = delay_case()
    assert psa(u, lo).value <= psa(u, hi).value + 1e-9


def test_zero_epsilon_is_nominal():
    u = delay_case()
    res = psa(u, 0.0)
    assert abs(res.value - sa(u.nominal, -5.0, QUIET)) <= 1e-12
    assert res.witness.size() == 0.0


def test_instantiate_zero_is_nominal():
    u = delay_case()
    sys = instantiate(u)
    for (m0, h0), (m1, h1) in zip(u.nominal.A, sys.A):
        assert np.array_equal(m0, m1) and h0 == h1
    empty = add_uncertainty(u.nominal, create_delta([]), 0)
    same = instantiate(empty)
    assert all(np.array_equal(a, b) for (a, _), (b, _) in zip(u.nominal.A, same.A))


def test_instantiate_structure_and_clamp():
    u = delay_case()
    d = np.array([[0.1, -0.2], [0.3, 0.4]])
    (A0, _), (A1, _) = list(u.nominal.A)
    terms = list(instantiate(u, [d], [0.2]).A)
    assert np.array_equal(terms[0][0], A0 + d) and terms[1][1] == 1.0 + 0.5 * 0.2
    # A delay pushed below zero is clamped and the term joins the zero-delay one.
    clamped = list(instantiate(u, [d], [-4.0]).A)
    assert len(clamped) == 1 and clamped[0][1] == 0.0
    assert np.allclose(clamped[0][0], A0 + d + A1, atol=1e-15)


def test_turning_structure(system_file):
    u = system_file("turning").uncertainty
    assert u.delta.n_matrix == 2 and u.delta.n_delay == 1
    assert len(u.matrices[0].ind) == 2 and len(u.matrices[1].ind) == 1
    sys = instantiate(u, [[[1.0]], [[0.0]]], [0.0])
    (A0, _), (A1, _) = list(u.nominal.A)
    (B0, _), (B1, _) = list(sys.A)
    # delta_1 moves the (2,1) entries of A0 and A1 by equal and opposite amounts.
    shift0, shift1 = B0 - A0, B1 - A1
    assert shift0[1, 0] == -shift1[1, 0] != 0
    shift0[1, 0] = shift1[1, 0] = 0
    assert not shift0.any() and not shift1.any()


def test_turning_no_sign_change_on_short_interval(system_file):
    with pytest.raises(NoSignChange):
        dins(system_file("turning").uncertainty, (0.0, 0.1))


def test_validation_errors():
    nominal = create_system("retarded", [(-np.eye(2), 0.0)])
    delta = create_delta([(1, 2)])
    with pytest.raises(ShapeMismatch):
        UncertainMatrix([0], [np.ones((2, 1))], [])
    with pytest.raises(ShapeMismatch):
        add_uncertainty(nominal, delta, 0, [UncertainMatrix([0], [np.ones((2, 1))], [np.ones((1, 2))])])
    with pytest.raises(IndexOutOfRange):
        add_uncertainty(nominal, delta, 0, [UncertainMatrix([1], [np.ones((2, 1))], [np.ones((2, 2))])])
    with pytest.raises(IndexOutOfRange):
        add_uncertainty(nominal, delta, 0, None, [UncertainDelay([0], [1.0])])
    with pytest.raises(ShapeMismatch):
        add_uncertainty(nominal, delta, 0, [None, None])
    with pytest.raises(ShapeMismatch):
        create_delta([(1, 1)], ["real", "real"])
    neutral = create_system("neutral", [(-np.eye(2), 0.0)], H=[(0.1 * np.eye(2), 1.0)])
    with pytest.raises(ModelError):
        add_uncertainty(neutral, delta, 0)
    u = scalar_case()
    with pytest.raises(ShapeMismatch):
        instantiate(u, [np.ones((2, 2))])
    with pytest.raises(ValueError):
        psa(u, -0.1)
    with pytest.raises(ValueError):
        dins(u, (1.0, 0.5))
    with pytest.raises(ValueError):
        PsaOptions(maxit=0)


@pytest.mark.parametrize("kinds", [(["complex"], ["frobenius"]), (["real"], ["spectral"])])
def test_unsupported_kinds(kinds):
    nominal = create_system("retarded", [(-np.eye(1), 0.0)])
    u = add_uncertainty(nominal, create_delta([(1, 1)], *kinds), 0, [UncertainMatrix([0], [[[1.0]]], [[[1.0]]])])
    with pytest.raises(UnsupportedUncertaintyKind):
        psa(u, 0.1)
    with pytest.raises(UnsupportedUncertaintyKind):
        dins(u, (0.0, 1.0))


def test_seeded_determinism():
    u = delay_case()
    a, b = psa(u, 0.3, PsaOptions(seed=5)), psa(u, 0.3, PsaOptions(seed=5))
    assert a.value == b.value and a.restart_values == b.restart_values
