import mpmath
import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from tandemqbd.control import (
    BoundaryDesign,
    DesignKind,
    InfeasibleTarget,
    arrival_rates_recursion,
    build_modified_blocks,
    design_arrival_rates,
    design_removal_rates,
    removal_rates_recursion,
    verify_product_form,
)
from tandemqbd.invariant import ell1_sum, solve_w, w_recursion_oracle
from tandemqbd.model import ModelError, TandemParams, build_blocks, compute_eta, feasible_interval
from tandemqbd.qbd import solve_R

from strategies import stable_params


def _mp_w(p, z, n, dps):
    lam, mu1, mu2, z = (mpmath.mpf(v) for v in (p.lam, p.mu1, p.mu2, z))
    a = lam + mu1 + mu2 * (1 - z)
    w = [mpmath.mpf(1), (lam + mu2 * (1 - z)) * z / mu1]
    for _ in range(n):
        w.append((a * w[-1] - lam * w[-2]) * z / mu1)
    return w


def mp_arrival_recursion(p, z, n, dps=120):
    """Forward arrival recursion with ``w`` and the rates at ``dps`` digits."""
    with mpmath.workdps(dps):
        w = _mp_w(p, z, n + 1, dps)
        d = mpmath.mpf(p.mu2) * mpmath.mpf(z) - mpmath.mpf(p.mu1)
        out = [mpmath.mpf(p.mu2) * mpmath.mpf(z)]
        for i in range(1, n + 1):
            out.append(out[-1] * w[i - 1] / w[i] + d)
        return np.array([float(v) for v in out])


def mp_removal_recursion(p, z, n, dps=120):
    """Forward removal recursion (``nu_0 = 0``) at ``dps`` digits."""
    with mpmath.workdps(dps):
        w = _mp_w(p, z, n + 1, dps)
        lam, mu1, mu2, zz = (mpmath.mpf(v) for v in (p.lam, p.mu1, p.mu2, z))
        out = [mpmath.mpf(0), (lam - mu2 * zz) * w[0] / w[1]]
        for i in range(1, n):
            out.append(((out[i] + lam + mu1 - mu2 * zz) * w[i] - lam * w[i - 1]) / w[i + 1])
        return np.array([float(v) for v in out])


def proof_quadratic(p, z):
    return p.mu2 * z * z - (p.lam + p.mu1 + p.mu2) * z + p.mu1


def test_arrival_first_rates(second):
    d = design_arrival_rates(second, 0.7, 50)
    assert d.rates[0] == pytest.approx(1.4, rel=1e-14)
    w = w_recursion_oracle(second, 0.7, 2)
    assert d.rates[1] == pytest.approx(1.4 * w[0] / w[1] + 1.4 - 3.0, rel=1e-12)
    assert d.rates[1] == pytest.approx(2.15, rel=1e-12)
    assert (d.rates > 0).all()


def test_arrival_y_decreasing(second):
    d = design_arrival_rates(second, 0.7, 300)
    y = d.y
    assert (np.diff(y) < 0).all() and y[-1] < 1e-12 * y[0]


def test_arrival_matches_literal_recursion(second, first):
    for p, z in ((second, 0.7), (second, 0.55), (first, 0.5)):
        d = design_arrival_rates(p, z, 60)
        np.testing.assert_allclose(d.rates, mp_arrival_recursion(p, z, 60), rtol=1e-12)


def test_float_literal_recursion_drifts(second):
    # the float recursion is only good for a handful of terms
    d = design_arrival_rates(second, 0.7, 10)
    np.testing.assert_allclose(d.rates, arrival_rates_recursion(second, 0.7, 10), rtol=1e-9)
    ref = mp_removal_recursion(TandemParams(1, 2, 3), 0.32, 10)
    np.testing.assert_allclose(removal_rates_recursion(TandemParams(1, 2, 3), 0.32, 10), ref, rtol=1e-8)


def test_arrival_on_first_bottleneck_is_noted(first):
    d = design_arrival_rates(first, 0.5, 20)
    assert d.notes and (d.rates > 0).all()


def test_removal_examples(first):
    d = design_removal_rates(first, 0.32, 200)
    w1 = w_recursion_oracle(first, 0.32, 1)[1]
    assert d.rates[0] == 0
    assert d.rates[1] == pytest.approx((1 - 0.96) / w1, rel=1e-12)
    assert (d.rates[1:] > 0).all()
    y = d.y[1:]
    assert (np.diff(y) < 0).all() and y[-1] < 1e-10 * y[0]
    np.testing.assert_allclose(d.rates[:80], mp_removal_recursion(first, 0.32, 79), rtol=1e-11)


def test_removal_at_eta(first):
    d = design_removal_rates(first, compute_eta(first), 100)
    assert (d.rates[1:] > 0).all()


def test_removal_range(first, second):
    with pytest.raises(InfeasibleTarget):
        design_removal_rates(first, first.rho2, 20)
    with pytest.raises(InfeasibleTarget):
        design_removal_rates(first, 0.2, 20)
    with pytest.raises(InfeasibleTarget):
        design_removal_rates(second, 0.6, 20)
    with pytest.raises(InfeasibleTarget):
        design_arrival_rates(first, 0.7, 20)
    with pytest.raises(InfeasibleTarget):
        design_arrival_rates(second, 1.0, 20)


def test_modified_blocks(second, first):
    d = design_arrival_rates(second, 0.7, 10)
    b = build_modified_blocks(second, d)
    base = build_blocks(second, 10)
    for name in ("q0", "q1", "q2"):
        np.testing.assert_array_equal(getattr(b, name), getattr(base, name))
    np.testing.assert_allclose(np.diag(b.q1_boundary, 1), d.rates[:10])
    np.testing.assert_allclose((b.q1_boundary + b.q0).sum(axis=1), 0, atol=1e-13)

    d = design_removal_rates(first, 0.32, 10)
    b = build_modified_blocks(first, d)
    np.testing.assert_allclose(np.diag(b.q1_boundary, -1), d.rates[1:11])
    np.testing.assert_allclose(np.diag(b.q1_boundary, 1), first.lam)


def test_identity_design_reproduces_blocks(second):
    meas = solve_w(second, 0.7, 12)
    for kind, rates in ((DesignKind.ARRIVAL, np.full(11, second.lam)), (DesignKind.REMOVAL, np.zeros(11))):
        b = build_modified_blocks(second, BoundaryDesign(0.7, kind, rates, meas, 10, []))
        np.testing.assert_array_equal(b.q1_boundary, build_blocks(second, 10).q1_boundary)


def test_modified_blocks_short_rates(second):
    d = design_arrival_rates(second, 0.7, 10)
    with pytest.raises(ModelError):
        build_modified_blocks(second, d, phase_cap=20)


def test_unmodified_product_form(second):
    rep = verify_product_form(build_blocks(second, 60), second.rho2, second.rho1 ** np.arange(61), 120)
    assert rep.max_rel_deviation < 1e-6
    assert rep.measured_decay == pytest.approx(0.5, abs=1e-6)
    assert rep.fitted_c == pytest.approx((1 - second.rho1) * (1 - second.rho2), rel=1e-6)


@pytest.mark.slow
def test_designed_decay(second, first):
    for p, make, z in ((second, design_arrival_rates, 0.7), (first, design_removal_rates, 0.32)):
        d = make(p, z, 400)
        rep = verify_product_form(build_modified_blocks(p, d), z, d.w.w, 120)
        assert rep.measured_decay == pytest.approx(z, abs=1e-3)
        assert rep.max_rel_deviation < 1e-4


@pytest.mark.parametrize(
    "p,make,z,cap",
    [
        (TandemParams(1, 3, 2), design_arrival_rates, 0.55, 120),
        (TandemParams(1, 3, 2), design_arrival_rates, 0.7, 120),
        (TandemParams(1, 2, 3), design_removal_rates, 0.32, 80),
        (TandemParams(1, 2, 3), design_removal_rates, 0.33, 80),
    ],
)
def test_filtered_balance(p, make, z, cap):
    d = make(p, z, cap)
    b = build_modified_blocks(p, d)
    r = solve_R(b, tol=1e-14).r
    assert np.abs(d.w.w[: cap + 1] @ (b.q1_boundary + r @ b.q2)).max() < 1e-8


@given(stable_params(), st.floats(0.0, 1.0))
def test_arrival_positivity(p, t):
    lo, hi = feasible_interval(p)
    z = lo + 1e-3 + t * (hi - lo - 2e-3)
    assume(hi - lo > 3e-3)
    d = design_arrival_rates(p, z, 500)
    assert (d.rates > 0).all()


@given(stable_params(), st.floats(0.0, 1.0))
def test_removal_positivity(p, t):
    assume(p.mu1 < p.mu2)
    eta = compute_eta(p)
    assume(p.rho2 - eta > 3e-3)
    z = eta + 1e-3 + t * (p.rho2 - eta - 2e-3)
    d = design_removal_rates(p, z, 500)
    assert (d.rates[1:] > 0).all()


@given(stable_params(), st.floats(0.0, 1.0))
def test_removal_inequality_where_quadratic_positive(p, t):
    # (lam + mu1 - mu2 z) w_i < lam w_{i-1} for every i, provided
    # mu2 z^2 - (lam + mu1 + mu2) z + mu1 > 0
    assume(p.mu1 < p.mu2)
    eta = compute_eta(p)
    assume(p.rho2 - eta > 3e-3)
    z = eta + 1e-3 + t * (p.rho2 - eta - 2e-3)
    assume(proof_quadratic(p, z) > 1e-9)
    d = design_removal_rates(p, z, 500)
    w = d.w.w
    lhs = (p.lam + p.mu1 - p.mu2 * z) * w[1:]
    assert (lhs < p.lam * w[:-1]).all()
    assert (np.diff(d.y[1:]) < 0).all()


def test_removal_inequality_counterexample():
    # the quadratic's root (0.4069) lies below eta (0.4774): the inequality
    # fails at i = 1 over the whole removal range, yet every nu_i stays positive
    p = TandemParams(1, 1.5, 2)
    eta = compute_eta(p)
    for z in np.linspace(eta, p.rho2, 6)[:-1]:
        assert proof_quadratic(p, z) < 0
        d = design_removal_rates(p, z, 300)
        w = d.w.w
        bad = np.nonzero((p.lam + p.mu1 - p.mu2 * z) * w[1:301] >= p.lam * w[:300])[0] + 1
        assert bad.tolist() == [1]
        assert (d.rates[1:] > 0).all()
        assert d.y[2] > d.y[1]


@given(stable_params(), st.floats(0.0, 1.0))
def test_partial_sums_geometric(p, t):
    lo, hi = feasible_interval(p)
    assume(hi - lo > 3e-3)
    z = lo + 1e-3 + t * (hi - lo - 2e-3)
    meas = solve_w(p, z, 400)
    r = meas.tail_ratio
    assume(r < 0.9)
    target = ell1_sum(p, z)
    w = np.asarray(meas.w)
    # |w_k| <= C (k + 1) r^k covers the double-root case; the partial-sum
    # error is then at most C sum_{j > k} (j + 1) r^j
    k = np.arange(len(w))
    c = np.max(np.abs(w) / ((k + 1) * r ** k))
    err = np.abs(target - np.cumsum(w))
    kk = np.arange(60)
    bound = c * ((kk + 2) * r ** (kk + 1) / (1 - r) + r ** (kk + 2) / (1 - r) ** 2)
    assert (err[kk] <= bound * (1 + 1e-9) + 1e-13 * abs(target)).all()
    assert err[-1] < 1e-10 * abs(target)
