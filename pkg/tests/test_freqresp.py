import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from delaykit.errors import SingularAtS
from delaykit.freqresp import (
    HinfOptions,
    hinf_asymptotic,
    hinfnorm,
    is_strongly_stable,
    sigma,
    transfer_eval,
)
from delaykit.model import Controller, asymptotic_transfer_function, close_loop, create_system

A0 = np.array([[-4.0, 2.0], [-3.0, -3.0]])
A1 = np.array([[-2.0, -1.0], [3.0, -2.0]])
B = np.array([[1.0], [-1.0]])
C = np.array([[-2.0, 1.0]])


def example1(tau1=1.0, tau2=2.0, D22=None):
    return create_system("retarded", [(A0, 0.0), (A1, tau1)], B2=[(B, tau2)], C2=[(C, 0.0)], D22=D22)


def example1_tf(s, tau1=1.0, tau2=2.0):
    e1 = np.exp(-s * tau1)
    num = 9 + 3 * s + 5 * e1
    den = s * s + 7 * s + 18 + (4 * s + 5) * e1 + 7 * e1 * e1
    return -num / den * np.exp(-s * tau2)


def first_order():
    return create_system("retarded", [(-np.eye(1), 0.0)], B2=np.eye(1), C2=np.eye(1))


@pytest.mark.parametrize("omega", [0.0, 3.5571, 0.37, 12.0])
def test_transfer_matches_closed_form(omega):
    s = 1j * omega
    assert abs(transfer_eval(example1(), s)[0, 0] - example1_tf(s)) <= 1e-10


@given(st.floats(0.3, 2.0), st.floats(0.0, 3.0), st.floats(-5.0, 5.0), st.floats(0.0, 20.0))
def test_transfer_closed_form_any_delays(tau1, tau2, re, im):
    s = complex(re, im)
    try:
        got = transfer_eval(example1(tau1, tau2), s)[0, 0]
    except SingularAtS:
        return
    want = example1_tf(s, tau1, tau2)
    assert abs(got - want) <= 1e-9 * max(1.0, abs(want))


def test_static_and_first_order():
    D = np.array([[2.0, -1.0], [0.5, 3.0]])
    static = create_system("retarded", [(-np.eye(1), 0.0)], D22=D)
    assert np.allclose(transfer_eval(static, 0.3 + 2j), D, atol=1e-14)
    assert abs(transfer_eval(first_order(), 0.0)[0, 0] - 1.0) <= 1e-14
    assert abs(transfer_eval(first_order(), 2j)[0, 0] - 1 / (1 + 2j)) <= 1e-14


def test_transfer_at_root_is_singular():
    with pytest.raises(SingularAtS):
        transfer_eval(first_order(), -1.0)


def test_sigma_first_order_magnitudes():
    sv = sigma(first_order(), [0.0, 1.0, 1e6])
    assert sv.shape == (1, 3)
    assert np.allclose(sv[0], [1.0, 1 / math.sqrt(2), 1e-6], atol=1e-9)


def test_sigma_nan_column_at_singular_point():
    sys = create_system("retarded", [(np.zeros((1, 1)), 0.0)], B2=np.eye(1), C2=np.eye(1))
    sv = sigma(sys, [0.0, 1.0])
    assert np.isnan(sv[0, 0]) and abs(sv[0, 1] - 1.0) <= 1e-14


def test_sigma_example1_peak():
    assert abs(sigma(example1(), [3.5571])[0, 0] - 1.5388) <= 1e-3


@given(st.integers(0, 2**31 - 1), st.floats(0.01, 50.0))
def test_sigma_symmetric_and_sorted(seed, omega):
    rng = np.random.default_rng(seed)
    sys = create_system(
        "retarded",
        [(rng.standard_normal((3, 3)) - 4 * np.eye(3), 0.0), (0.5 * rng.standard_normal((3, 3)), 0.7)],
        B2=rng.standard_normal((3, 2)), C2=rng.standard_normal((3, 3)),
    )
    sv = sigma(sys, [omega, -omega])
    assert sv.shape == (2, 2)
    assert np.allclose(sv[:, 0], sv[:, 1], rtol=1e-10, atol=1e-12)
    assert np.all(np.diff(sv[:, 0]) <= 0)


def test_asymptotic_norm_of_feedthrough_terms():
    sys = example1(D22=[(np.eye(1), 0.0), (np.eye(1), 1.0), (-2 * np.eye(1), 2.0)])
    value, theta = hinf_asymptotic(asymptotic_transfer_function(sys))
    assert abs(value - 4.0) <= 1e-9
    full = np.concatenate([[0.0], theta])
    coeffs = np.array([1.0, 1.0, -2.0])
    assert abs(abs(coeffs @ np.exp(-1j * (full - full[0]))) - 4.0) <= 1e-9


def test_asymptotic_norm_of_constant():
    sys = example1(D22=[(np.array([[-2.5]]), 0.0)])
    value, _ = hinf_asymptotic(asymptotic_transfer_function(sys))
    assert abs(value - 2.5) <= 1e-12


def test_asymptotic_norm_of_ddae_loop(system_file):
    sf = system_file("hiopt_ddae")
    cl = close_loop(sf.system, Controller.static(np.array([[-0.3533, -0.1012]])))
    value, _ = hinf_asymptotic(asymptotic_transfer_function(cl))
    assert abs(value - 1.8331) <= 1e-3


def test_hinfnorm_example1():
    res = hinfnorm(example1())
    assert abs(res.hinf - 1.5388) <= 1e-3
    assert abs(res.wpeak - 3.5571) <= 1e-2
    assert res.asymptotic_norm == 0.0


def test_hinfnorm_example2_asymptotic_dominated():
    res = hinfnorm(example1(D22=[(np.eye(1), 0.0), (np.eye(1), 1.0), (-2 * np.eye(1), 2.0)]))
    assert abs(res.hinf - 4.0) <= 1e-6
    assert res.wpeak == math.inf
    assert res.hinf >= res.asymptotic_norm - 1e-9


def test_hinfnorm_unstable_gate(system_file):
    plant = system_file("rdde1").system
    n = plant.n
    sys = create_system("retarded", list(plant.A), B2=np.ones((n, 1)), C2=np.ones((1, n)))
    assert not is_strongly_stable(sys)
    res = hinfnorm(sys)
    assert res.hinf == math.inf and math.isnan(res.wpeak)


@pytest.mark.parametrize("name", ["hinf_ex1", "hinf_ex2"])
def test_hinf_bounds_sampled_gain(name, system_file, rng):
    sys = system_file(name).system
    res = hinfnorm(sys)
    omegas = np.concatenate([rng.uniform(0, 10, 150), 10 ** rng.uniform(1, 3, 50)])
    assert np.all(res.hinf >= sigma(sys, omegas)[0] - 1e-6)


@settings(max_examples=10)
@given(st.integers(0, 2**31 - 1))
def test_delay_free_matches_dense_sweep(seed):
    rng = np.random.default_rng(seed)
    n = 3
    A = rng.standard_normal((n, n))
    A -= (np.max(np.linalg.eigvals(A).real) + 0.3) * np.eye(n)
    sys = create_system("retarded", [(A, 0.0)], B2=rng.standard_normal((n, 2)), C2=rng.standard_normal((2, n)))
    res = hinfnorm(sys, HinfOptions())
    omegas = np.concatenate([[0.0], np.logspace(-3, 3, 10_000)])
    Bm, Cm = sys.B2.at(0.0), sys.C2.at(0.0)
    T = Cm @ np.linalg.solve(1j * omegas[:, None, None] * np.eye(n) - A, Bm)
    sweep = np.linalg.svd(T, compute_uv=False)[:, 0].max()
    assert res.hinf >= sweep - 1e-9 * sweep
    assert res.hinf <= sweep * (1 + 1e-4)
