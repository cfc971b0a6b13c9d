import warnings

import numpy as np
import pytest
import scipy.special
from hypothesis import given
from hypothesis import strategies as st

from delaykit.errors import DelayKitWarning
from delaykit.model import Controller, close_loop, create_system, to_ddae
from delaykit.spectrum import (
    CharEvaluator,
    HalfPlane,
    Rectangle,
    RootsOptions,
    choose_degree,
    newton_correct,
    reduce_algebraic,
    roots,
    sa,
    tzeros,
)

QUIET = RootsOptions(quiet=True)


def lambert_roots(a, b, tau, branches=range(-30, 31)):
    """Roots of s - a - b e^{-s tau} = 0 from the Lambert W branches."""
    arg = b * tau * np.exp(-a * tau)
    return np.array([a + scipy.special.lambertw(arg, k) / tau for k in branches])


def relative_residual(system, z):
    char = CharEvaluator(system)
    M, _ = char(z)
    return np.linalg.svd(M, compute_uv=False)[-1] / char.scale(z)


def match(a, b, tol):
    a, b = np.sort_complex(np.asarray(a)), np.sort_complex(np.asarray(b))
    return a.size == b.size and all(np.min(np.abs(b - z)) < tol for z in a)


@pytest.mark.parametrize("a, b, tau, r", [(-1.0, -2.0, 1.0, -3.0), (0.5, -1.0, 2.0, -2.0), (-2.0, 1.5, 0.5, -6.0)])
def test_scalar_dde_matches_lambert_w(a, b, tau, r):
    sys = create_system("retarded", [(np.array([[a]]), 0.0), (np.array([[b]]), tau)])
    got = roots(sys, HalfPlane(r), QUIET).roots
    ref = lambert_roots(a, b, tau)
    ref = ref[ref.real >= r]
    assert match(got, ref, 1e-8)


def test_rdde1_rightmost_roots(system_file):
    sys = system_file("rdde1").system
    res = roots(sys, HalfPlane(-1.5), QUIET)
    assert np.count_nonzero(res.roots.real >= 0) == 3
    assert res.roots.real.max() == pytest.approx(0.6176, abs=1e-3)
    assert sa(sys, -1.5, QUIET) == res.roots.real.max()


def test_roots_sorted_by_decreasing_real_part(system_file):
    rts = roots(system_file("rdde1").system, HalfPlane(-1.5), QUIET).roots
    assert np.all(np.diff(rts.real) <= 1e-12)


@given(st.integers(0, 2**31 - 1), st.floats(0.2, 2.0))
def test_random_retarded_roots_are_accurate_and_symmetric(seed, tau):
    rng = np.random.default_rng(seed)
    sys = create_system("retarded", [(rng.standard_normal((2, 2)), 0.0), (rng.standard_normal((2, 2)), tau)])
    rts = roots(sys, HalfPlane(-2.0), QUIET).roots
    for z in rts:
        assert relative_residual(sys, z) <= 1e-8
        if z.imag != 0:
            assert np.min(np.abs(rts - z.conjugate())) <= 1e-10 * max(1.0, abs(z))


@given(st.integers(0, 2**31 - 1))
def test_to_ddae_spectrum_equivalence(seed):
    rng = np.random.default_rng(seed)
    A0, A1 = rng.standard_normal((2, 2, 2))
    sys = create_system("retarded", [(A0, 0.0), (A1, 1.0)])
    rect = Rectangle(-1.5, 3.0, -15.0, 15.0)
    direct = roots(sys, rect, QUIET).roots
    via = roots(to_ddae(sys), rect, QUIET).roots
    # Roots sitting on the rectangle edge may fall on either side.
    inner = Rectangle(-1.4, 2.9, -14.0, 14.0)
    assert match(direct[inner.contains(direct)], via[inner.contains(via)], 1e-6)


def test_neutral_to_ddae_equivalence(system_file):
    nd = system_file("neutral1").system
    rect = Rectangle(-3.0, 1.0, -60.0, 60.0)
    a = roots(nd, rect, QUIET).roots
    b = roots(to_ddae(nd), rect, QUIET).roots
    assert a.size > 40
    assert match(a, b, 1e-6)
    for z in a:
        assert relative_residual(nd, z) <= 1e-8


def test_difference_equation_roots_match_closed_form(system_file):
    dd = system_file("difference1").system
    got = roots(dd, Rectangle(-3.0, 1.0, -60.0, 60.0), QUIET).roots
    chain = [(2 * l + 1) * np.pi for l in range(-10, 10) if abs((2 * l + 1) * np.pi) <= 60]
    expected = [np.log(m) + 1j * w for m in (1.5, 0.5) for w in chain]
    assert match(got, expected, 1e-6)


def test_rectangle_is_subset_of_half_plane(system_file):
    sys = system_file("rdde1").system
    big = roots(sys, HalfPlane(-1.5), QUIET).roots
    small = roots(sys, Rectangle(-1.0, 1.0, 0.0, 8.0), QUIET).roots
    assert small.size == np.count_nonzero(Rectangle(-1.0, 1.0, 0.0, 8.0).contains(big))
    assert match(small, big[Rectangle(-1.0, 1.0, 0.0, 8.0).contains(big)], 1e-9)


def test_empty_region():
    sys = create_system("retarded", [(np.array([[-1.0]]), 0.0), (np.array([[0.5]]), 1.0)])
    assert roots(sys, Rectangle(5.0, 6.0, 0.0, 1.0), QUIET).roots.size == 0
    assert sa(sys, 5.0, QUIET) == -np.inf


def test_delay_free_system_uses_eigenvalues():
    A = np.array([[0.0, 1.0], [-2.0, -3.0]])
    rts = roots(create_system("retarded", A), HalfPlane(-10.0), QUIET).roots
    assert match(rts, np.linalg.eigvals(A), 1e-12)


def test_max_size_warning(system_file):
    sys = system_file("rdde1").system
    with pytest.warns(DelayKitWarning, match="Size of the generalized EVP would exceed its maximum value"):
        res = roots(sys, HalfPlane(-4.5), RootsOptions(max_size_evp=80))
    assert res.info.max_size_evp_enforced
    assert res.info.N * sys.n <= 80 + sys.n


def test_quiet_suppresses_warnings(system_file):
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        roots(system_file("rdde1").system, HalfPlane(-4.5), RootsOptions(max_size_evp=80, quiet=True))


def test_gamma_exceeds_one_flag(system_file):
    res = roots(system_file("neutral2").system, HalfPlane(-0.6), QUIET)
    assert res.info.gamma_r_exceeds_one
    assert res.info.N == 30


def test_fixed_degree():
    sys = create_system("retarded", [(np.array([[-1.0]]), 0.0), (np.array([[-2.0]]), 1.0)])
    N, info, _, _ = choose_degree(sys, HalfPlane(-3.0), RootsOptions(fix_N=12, quiet=True))
    assert N == 12 and info.N == 12


def test_newton_correct_recovers_perturbed_root():
    sys = create_system("retarded", [(np.array([[-1.0]]), 0.0), (np.array([[-2.0]]), 1.0)])
    ref = lambert_roots(-1.0, -2.0, 1.0, [0])[0]
    res = newton_correct(sys, ref + 0.05 - 0.03j)
    assert res.converged
    assert abs(res.value - ref) < 1e-12


def test_algebraic_reduction_keeps_spectrum(system_file):
    sf = system_file("mixed")
    cl = close_loop(sf.system, Controller.static([[8.4197, -0.4036], [4.3451, 10.6842]]))
    red = reduce_algebraic(cl)
    assert red is not None and red.n == sf.system.n
    hp = HalfPlane(-3.0)
    _, _, full, _ = choose_degree(cl, hp, QUIET)
    assert match(roots(red, hp, QUIET).roots, full, 1e-8)
    assert reduce_algebraic(system_file("rdde1").system) is None


def test_transmission_zeros_lambert(system_file):
    z = tzeros(system_file("tzeros_siso").system, Rectangle(-4.0, 4.0, -50.0, 50.0), QUIET)
    w = -scipy.special.lambertw(1.0).real
    assert np.min(np.abs(z - w)) < 1e-6
    assert np.all(np.abs(z * np.exp(-z) + 1) <= 1e-8)
    assert np.all(np.isclose(z * np.exp(-z), -1, atol=1e-8))
