import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from delaykit import numkernel
from delaykit.errors import OutOfInterval


@given(st.integers(2, 8), st.integers(0, 2**31 - 1))
def test_generalized_eigs_match_standard_problem(n, seed):
    rng = np.random.default_rng(seed)
    S = rng.standard_normal((n, n))
    P = rng.standard_normal((n, n)) + n * np.eye(n)
    res = numkernel.generalized_eigs(S, P)
    expected = np.linalg.eigvals(np.linalg.solve(P, S))
    assert res.values.size == n
    for z in expected:
        assert np.min(np.abs(res.values - z)) < 1e-8 * max(1.0, abs(z))
    for k, z in enumerate(res.values):
        v = res.right[:, k]
        assert np.linalg.norm(S @ v - z * P @ v) < 1e-8 * max(1.0, abs(z)) * np.linalg.norm(S)


def test_singular_pencil_counts_infinite_eigenvalues():
    S = np.diag([1.0, 2.0, 3.0])
    P = np.diag([1.0, 1.0, 0.0])
    res = numkernel.generalized_eigs(S, P)
    assert res.n_infinite == 1
    assert np.allclose(np.sort(res.values.real), [1.0, 2.0])


def test_left_vectors_requested():
    S = np.array([[1.0, 2.0], [0.0, 3.0]])
    res = numkernel.generalized_eigs(S, np.eye(2), left=True)
    for k, z in enumerate(res.values):
        w = res.left[:, k]
        assert np.linalg.norm(w.conj() @ S - z * w.conj()) < 1e-12


def test_nullspace_split_uses_coordinate_vectors_for_zero_blocks():
    E = np.diag([1.0, 0.0, 2.0])
    U, Up, V, Vp, rank = numkernel.nullspace_split(E)
    assert rank == 2
    assert np.array_equal(U, np.eye(3)[:, [1]])
    assert np.array_equal(V, np.eye(3)[:, [1]])
    assert Up.shape == (3, 2) and Vp.shape == (3, 2)


@given(st.integers(0, 2**31 - 1))
def test_nullspace_split_general(seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((4, 2))
    E = X @ rng.standard_normal((2, 4))
    U, Up, V, Vp, rank = numkernel.nullspace_split(E)
    assert rank == 2
    assert np.linalg.norm(U.T @ E) < 1e-10 * np.linalg.norm(E)
    assert np.linalg.norm(E @ V) < 1e-10 * np.linalg.norm(E)
    assert np.allclose(np.hstack([U, Up]).T @ np.hstack([U, Up]), np.eye(4))


@given(st.integers(2, 20), st.integers(0, 6))
def test_cheb_diff_exact_on_polynomials(N, degree):
    degree = min(degree, N)
    grid = numkernel.cheb_grid(N, (-2.0, 0.0))
    coeffs = np.arange(1, degree + 2, dtype=float)
    p = np.polynomial.Polynomial(coeffs)
    vals = p(grid.points)
    assert np.allclose(grid.diff @ vals, p.deriv()(grid.points), atol=1e-8 * np.abs(coeffs).sum() * N**2)


def test_cheb_grid_orientation_and_interpolation():
    grid = numkernel.cheb_grid(6, (-3.0, 0.0))
    assert grid.points[0] == 0.0 and grid.points[-1] == -3.0
    samples = np.cos(grid.points)
    p = np.polynomial.Chebyshev.fit(grid.points, samples, 6)
    for theta in (-2.9, -1.234, -0.01):
        assert numkernel.barycentric_eval(grid, samples, theta) == pytest.approx(p(theta), abs=1e-12)
    row = numkernel.interp_row(grid, grid.points[2])
    assert row[2] == 1.0 and row.sum() == 1.0


def test_interp_row_rejects_points_outside():
    grid = numkernel.cheb_grid(4, (-1.0, 0.0))
    with pytest.raises(OutOfInterval):
        numkernel.interp_row(grid, 0.5)


@pytest.mark.parametrize("N, interval", [(0, (-1, 1)), (3, (1, 1))])
def test_cheb_grid_validation(N, interval):
    with pytest.raises(ValueError):
        numkernel.cheb_grid(N, interval)
