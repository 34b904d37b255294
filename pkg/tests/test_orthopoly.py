import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tandemqbd.invariant import solve_w
from tandemqbd.model import ModelError, TandemParams, build_blocks, characteristic_matrix, chi1, sigma, tau
from tandemqbd.orthopoly import (
    Kind,
    PolyFamily,
    compute_zhat,
    eval_poly,
    eval_poly_sequence,
    interlacing_violations,
    largest_zero,
    phat_at_chi_error,
    xi_matrix,
    zeros,
    zeros_mp,
    zhat_limit_study,
)
from tandemqbd.qbd import solve_R

from strategies import stable_params

GRID = [TandemParams(1, 2, 3), TandemParams(1, 3, 2), TandemParams(0.5, 0.6, 3.0)]


def test_p0_is_one(first):
    for kind in Kind:
        assert eval_poly(PolyFamily(first, 0.4, kind), 0, np.array([-3.0, 0.0, 2.0])).tolist() == [1.0, 1.0, 1.0]


def test_degree_one_zeros(first):
    z = 0.4
    assert zeros(PolyFamily(first, z, Kind.P), 1).zeros[0] == pytest.approx(-first.lam - first.mu2 * (1 - z))
    assert zeros(PolyFamily(first, z, Kind.PHAT), 1).zeros[0] == pytest.approx(-first.mu2 * (1 - z))
    with pytest.raises(ModelError):
        zeros(PolyFamily(first, z), 0)
    with pytest.raises(ModelError):
        PolyFamily(first, 0.0)


def test_zeros_match_dense_eigenvalues(second):
    for kind, capped in ((Kind.P, False), (Kind.PHAT, True)):
        zs = zeros(PolyFamily(second, 0.45, kind), 9).zeros
        ref = np.sort(np.linalg.eigvals(characteristic_matrix(second, 0.45, 9, capped=capped)).real)
        np.testing.assert_allclose(zs, ref, atol=1e-11)
        assert (np.diff(zs) > 0).all()


def test_zeros_are_roots(second):
    fam = PolyFamily(second, 0.6, Kind.P)
    zs = zeros(fam, 12).zeros
    scale = np.abs(eval_poly(fam, 12, zs - 0.05))
    assert (np.abs(eval_poly(fam, 12, zs)) < 1e-8 * scale).all()


def test_zeros_mp_agree_with_float(first):
    for kind in Kind:
        fam = PolyFamily(first, 0.37, kind)
        np.testing.assert_allclose(np.array(zeros_mp(fam, 15, 30), dtype=float), zeros(fam, 15).zeros, atol=1e-12)


def test_w_is_p_at_zero(first, second):
    for p, z in ((first, 0.5), (first, 0.25), (second, 0.7), (second, 0.3)):
        mant, logs = eval_poly_sequence(PolyFamily(p, z, Kind.P), 200, np.array([0.0]))
        vals = mant[:, 0] * np.exp(logs[:, 0])
        meas = solve_w(p, z, 201)
        assert (np.abs(vals - meas.w) / meas.envelope(np.arange(201))).max() < 1e-10


def test_phat_at_chi_identity(first, second):
    for p in (first, second):
        for z in (0.5 * (p.rho1 + 1), 0.95):
            for n in (1, 2, 3, 10, 60):
                assert phat_at_chi_error(p, z, n, dps=60) < 1e-10


def test_phat_identity_float_drift(second):
    # the float64 recurrence drifts off the recessive solution; kept as a record of why mpmath is used
    z, n = 0.9, 60
    from tandemqbd.model import chi

    val = eval_poly(PolyFamily(second, z, Kind.PHAT), n, chi(second, z))
    ref = (1 - z) * second.rho1**n
    assert abs(val / ref - 1) > 1e-6


def test_zhat_m1(second):
    exact = (3 - math.sqrt(6)) / 2
    assert compute_zhat(second.with_capacity(1), 1) == pytest.approx(exact, abs=1e-12)
    # (z - 1)(4 z^2 - 12 z + 3) is det of the capped matrix times a nonzero factor
    z = compute_zhat(second.with_capacity(1), 1)
    assert abs(np.linalg.det(characteristic_matrix(second, z, 2, capped=True))) < 1e-12


@pytest.mark.parametrize("p", [TandemParams(1, 3, 2), TandemParams(1, 2, 3)])
@pytest.mark.parametrize("m", range(1, 6))
def test_zhat_equals_sp_R(p, m):
    pm = p.with_capacity(m)
    assert compute_zhat(pm, m) == pytest.approx(solve_R(build_blocks(pm), tol=1e-14).spectral_radius, abs=1e-8)


@pytest.mark.parametrize("m", [1, 3, 7])
def test_zero_eigenvalue_bridge(second, m):
    pm = second.with_capacity(m)
    z = compute_zhat(pm, m)
    assert abs(largest_zero(PolyFamily(second, z, Kind.PHAT), m + 1)) < 1e-10
    # the substochastic construction has Perron root z exactly there
    xi = xi_matrix(second, m, z)
    assert (xi >= -1e-15).all() and (xi.sum(axis=1) <= 1 + 1e-12).all()
    assert max(abs(np.linalg.eigvals(xi))) == pytest.approx(z, abs=1e-10)
    for dz in (-0.05, 0.05):
        assert (max(abs(np.linalg.eigvals(xi_matrix(second, m, z + dz)))) - (z + dz)) * dz < 0


def test_zhat_limit_study(first, second):
    s = zhat_limit_study(second, 40)
    assert s.limit == 0.5 and s.strictly_increasing
    assert (np.diff(s.gaps) < 0).all()
    s = zhat_limit_study(first, 40)
    assert s.limit_name == "eta" and s.limit == pytest.approx(0.312, abs=1e-3)
    assert s.strictly_increasing and (np.diff(s.gaps) < 0).all()
    assert s.diagnosis == "eta"


def test_zhat_unstable_rejected():
    from tandemqbd.model import InstabilityError

    with pytest.raises(InstabilityError):
        compute_zhat(TandemParams(1, 3, 0.5, 2), 2)


@given(stable_params(), st.floats(0.02, 0.98), st.integers(2, 50))
def test_interlacing(p, z, n):
    assert interlacing_violations(p, z, n) == 0


def test_interlacing_needs_high_precision():
    # largest zeros of P_36 and P_35 agree to ~5e-18 here
    p = TandemParams(1.1220117194479469, 3.927217028356669, 1.669401446595624)
    z = 0.8958066146212974
    a = zeros(PolyFamily(p, z), 36).zeros[-1]
    b = zeros(PolyFamily(p, z), 35).zeros[-1]
    assert abs(a - b) < 1e-14
    assert interlacing_violations(p, z, 36) == 0


@pytest.mark.parametrize("p", GRID)
@pytest.mark.parametrize("z", [0.2, 0.3, 0.5, 0.8])
def test_extreme_zero_limits(p, z):
    fam = PolyFamily(p, z)
    first_, second_last, last = [], [], []
    for n in range(2, 201):
        zs = zeros(fam, n).zeros
        first_.append(zs[0]), second_last.append(zs[-2]), last.append(zs[-1])
    scale = 1e-13 * abs(sigma(p, z))
    assert (np.diff(first_) < scale).all()
    assert (np.diff(second_last) > -scale).all()
    assert (np.diff(last) > -scale).all()
    assert first_[-1] - sigma(p, z) < 1e-3
    assert chi1(p, z) - last[-1] < 1e-3
    assert first_[-1] > sigma(p, z) and last[-1] <= chi1(p, z) + 1e-12
    # x_{n,n-1} reaches tau at rate 1/n^2; n = 500 is needed for the 1e-3 gap
    assert 0 < tau(p, z) - zeros(fam, 500).zeros[-2] < 1e-3


@pytest.mark.parametrize("p", GRID)
@pytest.mark.parametrize("z", [0.05, 0.2, 0.5, 0.8])
def test_positivity_boundary(p, z):
    c1 = chi1(p, z)
    mant, _ = eval_poly_sequence(PolyFamily(p, z), 1000, np.array([c1 + 1e-4, c1 - 1e-4]))
    assert (mant[:201, 0] > 0).all() and (mant[:, 0] > 0).all()
    horizon = 200 if z > p.rho1 else 1000
    assert (mant[: horizon + 1, 1] < 0).any()
