import numpy as np
import pytest
from hypothesis import given, strategies as st

from tandemqbd.model import InstabilityError, ModelError, TandemParams, build_blocks
from tandemqbd.oracle import TruncatedChain, solve_stationary_direct
from tandemqbd.orthopoly import compute_zhat
from tandemqbd.qbd import (
    ConvergenceError,
    eigen_spectrum,
    left_null_vector,
    match_multisets,
    nonzero_eigenvalues,
    r_residual,
    solve_R,
    stationary,
)

from strategies import stable_params


def pencil_roots_in_disk(blocks):
    """Roots of det(Q0 + z Q1 + z^2 Q2) with |z| < 1, via a companion linearisation."""
    n = blocks.phase_count
    q2inv = np.linalg.inv(blocks.q2)
    comp = np.block([[np.zeros((n, n)), np.eye(n)], [-q2inv @ blocks.q0, -q2inv @ blocks.q1]])
    ev = np.linalg.eigvals(comp)
    # the zero root is defective; a Jordan block of size s splits into a ring
    # of radius ~eps**(1/s), about 1e-5 for the capacities used here
    return ev[(np.abs(ev) < 1 - 1e-9) & (np.abs(ev) > 1e-3)]


def test_r_m1(second):
    b = build_blocks(second.with_capacity(1))
    sol = solve_R(b, tol=1e-14)
    assert sol.spectral_radius == pytest.approx((3 - np.sqrt(6)) / 2, abs=1e-12)
    assert (sol.r[0] == 0).all() and (sol.r >= 0).all()
    assert sol.residual < 1e-14 and sol.monotone
    ev = eigen_spectrum(sol.r)
    assert abs(ev[1]) < 1e-12


def test_zero_iterate_residual(first):
    b = build_blocks(first.with_capacity(3))
    assert r_residual(b, np.zeros((4, 4))) == first.mu1


def test_identity_spectrum():
    np.testing.assert_allclose(eigen_spectrum(np.eye(4)), 1.0)
    with pytest.raises(ModelError):
        eigen_spectrum(np.ones((2, 3)))


def test_nonzero_eigenvalues_defective():
    # nilpotent Jordan block plus one eigenvalue 0.3
    a = np.diag(np.ones(5), 1)
    a[5, 5] = 0.3
    ev = nonzero_eigenvalues(a)
    assert len(ev) == 1 and ev[0] == pytest.approx(0.3)
    assert len(nonzero_eigenvalues(np.zeros((3, 3)))) == 0


def test_match_multisets():
    assert match_multisets([1, 2j], [2j, 1 + 1e-9]) == pytest.approx(1e-9)
    assert match_multisets([1], [1, 2]) == float("inf")


@pytest.mark.parametrize("p", [TandemParams(1, 3, 2), TandemParams(1, 2, 3), TandemParams(0.5, 0.6, 3.0)])
@pytest.mark.parametrize("m", [1, 2, 4, 6])
def test_spectrum_inside_pencil_roots(p, m):
    b = build_blocks(p.with_capacity(m))
    sol = solve_R(b, tol=1e-14)
    nz = nonzero_eigenvalues(sol.r)
    roots = pencil_roots_in_disk(b)
    assert match_multisets(nz, roots) < 1e-6
    assert sol.spectral_radius == pytest.approx(compute_zhat(p.with_capacity(m), m), abs=1e-8)
    assert sol.spectral_radius < 1


def test_convergence_cap(second):
    with pytest.raises(ConvergenceError):
        solve_R(build_blocks(second.with_capacity(3)), tol=1e-14, max_iter=3)
    with pytest.raises(ModelError):
        solve_R(build_blocks(second.with_capacity(3)), tol=0)


@pytest.mark.parametrize("p,m", [(TandemParams(1, 3, 2), 1), (TandemParams(1, 3, 2), 5), (TandemParams(1, 2, 3), 8)])
def test_stationary_matches_direct_solve(p, m):
    pm = p.with_capacity(m)
    b = build_blocks(pm)
    st_ = stationary(b, solve_R(b, tol=1e-14), 150)
    assert st_.normalization_error < 1e-10
    direct = solve_stationary_direct(TruncatedChain.from_blocks(b, 150))
    mask = st_.pi > 1e-12
    assert np.abs(st_.pi[mask] / direct.pi[mask] - 1).max() < 1e-6
    # and the generator built straight from the rates agrees with the one from blocks
    direct2 = solve_stationary_direct(TruncatedChain.tandem(pm, 150, m))
    np.testing.assert_allclose(direct2.pi, direct.pi, rtol=1e-10, atol=0)


def test_stationary_geometric_marginals(second):
    # large-m surrogate: queue 2 is geometric with rho2 in the bulk
    b = build_blocks(second.with_capacity(40))
    st_ = stationary(b, solve_R(b, tol=1e-14), 40)
    marg = st_.level_marginals()
    ratios = marg[6:30] / marg[5:29]
    assert np.abs(ratios - second.rho2).max() < 1e-4
    k = np.arange(10)
    np.testing.assert_allclose(marg[:10], (1 - second.rho2) * second.rho2**k, rtol=1e-4)


def test_stationary_pi_k_recursion(first):
    b = build_blocks(first.with_capacity(3))
    sol = solve_R(b, tol=1e-14)
    st_ = stationary(b, sol, 10)
    for k in range(10):
        np.testing.assert_allclose(st_.pi[k + 1], st_.pi[k] @ sol.r, atol=1e-16)
    assert (st_.pi >= 0).all()


def test_stationary_rejects_unstable(second):
    b = build_blocks(second.with_capacity(2))
    sol = solve_R(b)
    sol.spectral_radius = 1.0
    with pytest.raises(InstabilityError):
        stationary(b, sol, 5)


def test_left_null_vector_rejects_rank_two():
    with pytest.raises(ModelError):
        left_null_vector(np.zeros((3, 3)))


@given(stable_params(), st.integers(1, 6))
def test_r_properties(p, m):
    pm = p.with_capacity(m)
    b = build_blocks(pm)
    sol = solve_R(b, tol=1e-13)
    assert sol.monotone and sol.residual < 1e-13
    assert (sol.r >= 0).all() and (sol.r[0] == 0).all()
    assert sol.spectral_radius < 1
