"""Acceptance criteria, one test each; the summary prints a PASS/FAIL line per criterion."""

import math
import warnings

import numpy as np
import pytest

from delaykit.freqresp import hinfnorm
from delaykit.model import (
    Classification,
    Controller,
    close_loop,
    create_system,
    delay_difference_part,
    from_quasipolynomial,
    to_ddae,
)
from delaykit.nsopt import NsoptOptions, bfgs_minimize, multistart
from delaykit.robust import instantiate, psa, dins
from delaykit.spectrum import HalfPlane, Rectangle, RootsOptions, roots, sa, tzeros
from delaykit.strongstab import cd, gamma_r, strong_sa
from delaykit.synth import SynthOptions, hiopt, objective_hinf, objective_stab, stabopt

from test_nsopt import bounded_pieces, lp_by_vertices, max_affine, quadratic
from test_spectrum import match, relative_residual
from test_synth import MS1, assert_gradient

QUIET = RootsOptions(quiet=True)

# Printed controllers of the mixed-objective example and their (sa, hinf) table entries.
PRINTED_MIXED = [
    ([[8.4197, -0.4036], [4.3451, 10.6842]], (-0.8751, 1.8061)),
    ([[7.0877, 0.0571], [6.5345, 13.3927]], (-0.6153, 1.2908)),
    ([[8.1324, -0.7980], [4.7536, 11.2210]], (-0.8285, 1.4869)),
]


@pytest.mark.criterion(1, "retarded example: sa = 0.6176 on Re >= -1.5, three roots in the closed right half-plane")
def test_criterion_1_rdde_abscissa(system_file):
    res = roots(system_file("rdde1").system, HalfPlane(-1.5), QUIET)
    assert abs(res.roots.real.max() - 0.6176) <= 1e-3
    assert np.count_nonzero(res.roots.real >= 0) == 3


@pytest.mark.criterion(2, "delay-difference example: roots ln1.5 / ln0.5 + j(2l+1)pi on [-3,1]x[-60,60]")
def test_criterion_2_difference_roots(system_file):
    got = roots(system_file("difference1").system, Rectangle(-3.0, 1.0, -60.0, 60.0), QUIET).roots
    chain = [(2 * l + 1) * math.pi for l in range(-10, 10) if abs((2 * l + 1) * math.pi) <= 60]
    expected = [math.log(m) + 1j * w for m in (1.5, 0.5) for w in chain]
    assert match(got, expected, 1e-6)


@pytest.mark.criterion(3, "neutral example: gamma(0) = 1.25, strong sa = 0.1614, nominal chain at -ln(sqrt 2)")
def test_criterion_3_neutral_strong_abscissa(system_file):
    sys = system_file("neutral2").system
    part = delay_difference_part(sys)
    assert abs(gamma_r(part, 0.0) - 1.25) <= 1e-4
    assert abs(strong_sa(sys, -0.2, QUIET) - 0.1614) <= 1e-3
    # Nominal difference equation x(t) - 0.75 x(t-1) + 0.5 x(t-2) = 0.
    nominal = create_system("delay_difference", [(np.eye(1), 0.0)] + list(sys.H))
    assert abs(sa(nominal, -1.0, QUIET) - (-math.log(math.sqrt(2)))) <= 1e-6


@pytest.mark.criterion(4, "closed-loop DDAE: essentially neutral, C_D = -3.4234, strong sa = -0.2845")
def test_criterion_4_closed_loop_ddae(system_file):
    sf = system_file("ddae_feedback")
    cl = close_loop(sf.system, sf.controller)
    part = delay_difference_part(cl)
    assert part.classification is Classification.ESSENTIALLY_NEUTRAL
    assert abs(cd(part) - (-3.4234)) <= 1e-3
    assert abs(strong_sa(cl, -1.0, QUIET) - (-0.2845)) <= 1e-3


@pytest.mark.criterion(5, "H-infinity: 1.5388 at 3.5571; feedthrough example 4 at wpeak = inf")
def test_criterion_5_hinf_norms(system_file):
    res = hinfnorm(system_file("hinf_ex1").system)
    assert abs(res.hinf - 1.5388) <= 1e-3 and abs(res.wpeak - 3.5571) <= 1e-2
    res = hinfnorm(system_file("hinf_ex2").system)
    assert abs(res.hinf - 4.0) <= 1e-6 and res.wpeak == math.inf


@pytest.mark.criterion(6, "transmission zeros include -0.56714; all satisfy |s e^-s + 1| <= 1e-8")
def test_criterion_6_transmission_zeros(system_file):
    z = tzeros(system_file("tzeros_siso").system, Rectangle(-4.0, 4.0, -50.0, 50.0), QUIET)
    assert np.min(np.abs(z - (-0.5671432904097838))) <= 1e-6
    assert np.all(np.abs(z * np.exp(-z) + 1) <= 1e-8)


@pytest.mark.criterion(7, "synthesis: heating loop strongly stable and improved; fragility barrier |D Dc| < 1 - w1, sa < 0")
def test_criterion_7_stabilization(system_file):
    plant = system_file("heating").system
    opts = SynthOptions(nstart=1, seed=0)
    res = stabopt(plant, initials=[np.zeros((1, 5))], options=opts)
    assert res.log.strong_sa < 0
    assert res.log.objective <= res.log.initial_values[res.log.best_start]

    plant = system_file("fragility").system
    opts = SynthOptions(nstart=1, method="barrier", seed=0)
    res = stabopt(plant, initials=[np.zeros((1, 1))], options=opts)
    D = plant.D11.at(0.0)
    assert abs(D[0, 0] * res.controller.Dc[0, 0]) < 1 - opts.w1
    assert sa(res.closed_loop, -5.0, QUIET) < 0


@pytest.mark.criterion(8, "mixed objective: Pareto ordering of alpha = 1 / 0 runs; printed controllers match the table")
def test_criterion_8_mixed_objective(system_file):
    plant = system_file("mixed").system
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        r1 = hiopt(plant, initials=[np.zeros((2, 2))], options=SynthOptions(nstart=1, alpha=1.0))
        r0 = hiopt(plant, initials=[r1.controller.Dc], options=SynthOptions(nstart=1, alpha=0.0))
    h1, h0 = hinfnorm(r1.closed_loop).hinf, hinfnorm(r0.closed_loop).hinf
    c1, c0 = sa(r1.closed_loop, -3.0, QUIET), sa(r0.closed_loop, -3.0, QUIET)
    assert h0 <= h1 and c1 <= c0
    for Dc, (sa_ref, hinf_ref) in PRINTED_MIXED:
        cl = close_loop(plant, Controller.static(np.array(Dc)))
        assert abs(sa(cl, -3.0, QUIET) - sa_ref) <= 2e-3
        assert abs(hinfnorm(cl).hinf - hinf_ref) <= 2e-3


@pytest.mark.criterion(9, "turning process: psa(0) = -16.3646, psa(1) >= 19.7, dins = 0.4125, monotone, valid witness")
def test_criterion_9_robustness(system_file):
    u = system_file("turning").uncertainty
    assert abs(psa(u, 0.0).value - (-16.3646)) <= 1e-2
    top = psa(u, 1.0)
    assert top.value >= 19.7
    assert abs(dins(u, (0.0, 1.0)) - 0.4125) <= 5e-2
    values = [psa(u, e).value for e in np.linspace(0.0, 1.0, 6)]
    assert all(a <= b + 1e-9 for a, b in zip(values, values[1:]))
    for eps in (0.3, 1.0):
        res = psa(u, eps)
        assert np.all(res.witness.norms() <= eps + 1e-12)
        assert abs(sa(instantiate(u, res.witness), res.value - 5.0, QUIET) - res.value) <= 1e-6


def _emitted_roots(system_file):
    rng = np.random.default_rng(0)
    cases = [
        (system_file("rdde1").system, HalfPlane(-1.5)),
        (system_file("neutral1").system, Rectangle(-3.0, 1.0, -60.0, 60.0)),
        (system_file("neutral2").system, HalfPlane(-0.6)),
    ]
    sf = system_file("ddae_feedback")
    cases.append((close_loop(sf.system, sf.controller), HalfPlane(-1.0)))
    for _ in range(3):
        A0, A1 = rng.standard_normal((2, 3, 3))
        cases.append((create_system("retarded", [(A0, 0.0), (A1, rng.uniform(0.2, 2.0))]), HalfPlane(-2.0)))
    return [(sys, roots(sys, region, QUIET).roots) for sys, region in cases]


@pytest.mark.criterion(10, "property suites: gradients vs FD, residuals, conjugate symmetry, to_ddae, quasi-polynomials, nsopt oracles")
def test_criterion_10_property_suites(system_file):
    stab_points = [
        ("heating", np.zeros(5), "auto"),
        ("neutral_stab", np.array([0.104, 0.246, 0.099]), "cd"),
        ("neutral_stab", np.array([-0.391, 0.272, 0.134]), "cd"),
        ("neutral_stab", np.array([0.18, 0.012, -0.088]), "barrier"),
        ("fragility", np.array([-0.5]), "barrier"),
    ]
    for name, p, method in stab_points:
        assert_gradient(objective_stab, name, p, SynthOptions(method=method), system_file)
    hinf_points = [
        ("mixed", MS1, 0.0),
        ("mixed", MS1 + np.array([-2.71, -1.89, -0.17, -0.42]), 0.5),
        ("hiopt_ddae", np.array([0.25, -0.5]), 0.0),
    ]
    for name, p, alpha in hinf_points:
        assert_gradient(objective_hinf, name, p, SynthOptions(alpha=alpha), system_file)

    for sys, rts in _emitted_roots(system_file):
        assert rts.size > 0
        assert max(relative_residual(sys, z) for z in rts) <= 1e-8
        assert match(rts, rts.conj(), 1e-8)

    rng = np.random.default_rng(1)
    for _ in range(3):
        A0, A1 = rng.standard_normal((2, 2, 2))
        sys = create_system("retarded", [(A0, 0.0), (A1, 1.0)])
        rect, inner = Rectangle(-1.5, 3.0, -15.0, 15.0), Rectangle(-1.4, 2.9, -14.0, 14.0)
        a, b = roots(sys, rect, QUIET).roots, roots(to_ddae(sys), rect, QUIET).roots
        assert match(a[inner.contains(a)], b[inner.contains(b)], 1e-6)

        P = np.vstack([np.concatenate([[1.0], rng.standard_normal(3)]), rng.standard_normal(4)])
        tau = rng.uniform(0.2, 2.0)
        qp = from_quasipolynomial(P, [0.0, tau])
        for s in rng.standard_normal(4) * 2 + 3j * rng.standard_normal(4):
            q = np.polyval(P[0], s) + np.polyval(P[1], s) * np.exp(-s * tau)
            assert abs(np.linalg.det(qp.char_matrix(s)) - q) <= 1e-10 * max(1.0, abs(q), abs(s) ** 3)

        A, b = bounded_pieces(rng)
        res = multistart(max_affine(A, b), [rng.standard_normal(3)], 1, NsoptOptions(gradient_sampling=True))
        assert abs(res.f - lp_by_vertices(A, b)) <= 1e-5
        a = rng.standard_normal(4)
        res = bfgs_minimize(quadratic(a), 3 * rng.standard_normal(4), NsoptOptions(grad_norm_tol=1e-12))
        assert np.linalg.norm(res.x - a) <= 1e-5
