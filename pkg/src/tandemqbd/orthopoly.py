"""Orthogonal polynomials attached to the tandem network and the decay-rate root.

For fixed ``z > 0`` the family ``P_n(x; z)`` comes from the balance
equations of a z-invariant measure (``w_n = P_n(0; z)``); ``Phat_n`` is the
finite-capacity variant. Their zeros are the eigenvalues of the
tridiagonal characteristic matrices, which we compute by Sturm bisection
after a diagonal similarity makes them symmetric.
"""

import enum
import math
from dataclasses import dataclass

import mpmath
import numpy as np

from . import kernels
from .model import ModelError, characteristic_matrix, compute_eta, require_stable


class Kind(str, enum.Enum):
    P = "P"
    PHAT = "Phat"


@dataclass(frozen=True)
class PolyFamily:
    params: object
    z: float
    kind: Kind = Kind.P

    def __post_init__(self):
        if not self.z > 0:
            raise ModelError(f"z must be positive, got {self.z!r}")
        object.__setattr__(self, "kind", Kind(self.kind))

    def coefficients(self):
        """``(alpha1, alpha, b2, b, g)`` of the recurrence in ``kernels.scaled_recurrence``."""
        lam, mu1, mu2 = self.params.lam, self.params.mu1, self.params.mu2
        z = self.z
        alpha = lam + mu1 + mu2 * (1.0 - z)
        g = z / mu1
        if self.kind is Kind.P:
            return lam + mu2 * (1.0 - z), alpha, lam, lam, g
        return mu2 * (1.0 - z), alpha, lam * (1.0 - z), lam, g


def eval_poly_sequence(family, n, x, backend=None):
    """Values ``p_0(x), ..., p_n(x)`` as ``(mantissa, log_scale)`` arrays of shape ``(n+1, len(x))``."""
    if n < 0:
        raise ModelError("degree must be >= 0")
    return kernels.scaled_recurrence(x, n, *family.coefficients(), backend=backend)


def eval_poly(family, n, x, dps=None):
    """Evaluate ``P_n(x; z)`` or ``Phat_n(x; z)``.

    With ``dps`` set the recurrence runs in mpmath at that many decimal
    digits and returns an ``mpf``; ``x`` may then be an ``mpf`` as well.
    Evaluation near the largest zero is badly conditioned (the wanted
    solution is the recessive one), so identities there need ``dps``.
    """
    if n < 0:
        raise ModelError("degree must be >= 0")
    if dps is not None:
        return _eval_mp(family, n, x, dps)
    scalar = np.ndim(x) == 0
    mant, logs = eval_poly_sequence(family, n, np.atleast_1d(np.asarray(x, dtype=float)))
    with np.errstate(over="ignore"):
        out = mant[n] * np.exp(logs[n])
    return float(out[0]) if scalar else out


def _eval_mp(family, n, x, dps):
    p = family.params
    with mpmath.workdps(dps):
        lam, mu1, mu2 = mpmath.mpf(p.lam), mpmath.mpf(p.mu1), mpmath.mpf(p.mu2)
        z = mpmath.mpf(family.z)
        x = mpmath.mpf(x)
        g = z / mu1
        alpha = x + lam + mu1 + mu2 * (1 - z)
        if family.kind is Kind.P:
            first, b2 = x + lam + mu2 * (1 - z), lam
        else:
            first, b2 = x + mu2 * (1 - z), lam * (1 - z)
        prev, cur = mpmath.mpf(1), first * g
        if n == 0:
            return +prev
        for k in range(2, n + 1):
            prev, cur = cur, (alpha * cur - (b2 if k == 2 else lam) * prev) * g
        return +cur


def symmetric_tridiagonal(family, n):
    """Diagonal and off-diagonal of the symmetrised characteristic matrix of size ``n``."""
    p = family.params
    z = family.z
    a = characteristic_matrix(p, z, n, capped=family.kind is Kind.PHAT)
    d = np.diag(a).copy()
    # D^{-1} A D with off-diagonals lam and mu1/z -> both sqrt(lam mu1 / z)
    e = np.full(n - 1, math.sqrt(p.lam * p.mu1 / z))
    return d, e


@dataclass
class ZeroSet:
    n: int
    zeros: np.ndarray


def zeros(family, n, backend=None):
    """All ``n`` zeros of the degree-``n`` member, ascending."""
    if n < 1:
        raise ModelError("degree must be >= 1")
    d, e = symmetric_tridiagonal(family, n)
    return ZeroSet(n=n, zeros=kernels.tridiag_eigvalsh(d, e, backend=backend))


def largest_zero(family, n, backend=None):
    return float(zeros(family, n, backend=backend).zeros[-1])


def _all_negative(params, z, n, backend=None):
    d, e = symmetric_tridiagonal(PolyFamily(params, z, Kind.PHAT), n)
    return kernels.tridiag_count_below(d, e, 0.0, backend=backend) == n


def compute_zhat(params, m, tol=1e-14, eps=1e-12, upper=1.0 - 1e-9, backend=None):
    """Decay rate of the capacity-``m`` network: the ``z`` in ``(0, 1)`` where
    the largest zero of ``Phat_{m+1}(.; z)`` is 0.

    The largest zero is positive below the root and negative above it; the
    sign is read off a Sturm count at 0, so each bisection step is exact in
    sign up to rounding of the count itself.
    """
    if m < 1 or int(m) != m:
        raise ModelError("m must be an integer >= 1")
    require_stable(params.with_capacity(int(m)))
    n = int(m) + 1
    lo, hi = eps, upper
    if _all_negative(params, lo, n, backend) or not _all_negative(params, hi, n, backend):
        raise ModelError(f"no sign change of the largest zero on ({lo}, {hi})")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if _all_negative(params, mid, n, backend):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def xi_matrix(params, m, z):
    """Substochastic matrix whose Perron root equals ``z`` exactly at ``z = zhat_{m+1}``.

    Used only to cross-check :func:`compute_zhat`.
    """
    s = params.lam + params.mu1 + params.mu2
    q = characteristic_matrix(params, z, m + 1, capped=True)
    return z * (s * np.eye(m + 1) + q) / s


@dataclass
class ZhatStudy:
    ms: np.ndarray
    zhat: np.ndarray
    limit: float
    limit_name: str
    gaps: np.ndarray
    strictly_increasing: bool
    gap_to_eta: float
    gap_to_rho2: float

    @property
    def diagnosis(self):
        return "eta" if self.gap_to_eta < self.gap_to_rho2 else "rho2"


def zhat_limit_study(params, m_max, tol=1e-14):
    """``zhat_{m+1}`` for ``m = 1..m_max`` and its distance to the predicted limit.

    The limit is ``eta`` when ``mu1 <= mu2`` and ``rho2`` otherwise. When
    ``mu1 == mu2`` the two coincide.
    """
    if m_max < 1:
        raise ModelError("m_max must be >= 1")
    ms = np.arange(1, m_max + 1)
    zs = np.array([compute_zhat(params, int(m), tol=tol) for m in ms])
    eta = compute_eta(params)
    if params.mu1 <= params.mu2:
        limit, name = eta, "eta"
    else:
        limit, name = params.rho2, "rho2"
    return ZhatStudy(
        ms=ms,
        zhat=zs,
        limit=limit,
        limit_name=name,
        gaps=np.abs(zs - limit),
        strictly_increasing=bool(np.all(np.diff(zs) > 0)),
        gap_to_eta=abs(zs[-1] - eta),
        gap_to_rho2=abs(zs[-1] - params.rho2),
    )


def chi_mp(params, z, dps):
    """``chi(z)`` as an mpmath number at ``dps`` digits."""
    with mpmath.workdps(dps):
        z = mpmath.mpf(z)
        return (mpmath.mpf(params.lam) / z - mpmath.mpf(params.mu2)) * (1 - z)


def phat_at_chi_error(params, z, n, dps=60):
    """Relative deviation of ``Phat_n(chi(z); z)`` from ``(1 - z) rho1^n``.

    The polynomial sits on its recessive solution at ``x = chi(z)``, so
    the evaluation is carried out at ``dps`` digits throughout.
    """
    with mpmath.workdps(dps):
        x = chi_mp(params, z, dps)
        val = eval_poly(PolyFamily(params, z, Kind.PHAT), n, x, dps=dps)
        ref = (1 - mpmath.mpf(z)) * (mpmath.mpf(params.lam) / mpmath.mpf(params.mu1)) ** n
        return float(abs(val / ref - 1))


def zeros_mp(family, n, dps=50):
    """Zeros at ``dps`` digits from the symmetrised matrix, as a list of ``mpf``.

    The largest zeros of consecutive members can agree to far more than
    16 digits; this is the reference used when float64 cannot separate them.
    """
    if n < 1:
        raise ModelError("degree must be >= 1")
    p, z = family.params, family.z
    with mpmath.workdps(dps):
        mz = mpmath.mpf(z)
        lam, mu1, mu2 = mpmath.mpf(p.lam), mpmath.mpf(p.mu1), mpmath.mpf(p.mu2)
        off = mpmath.sqrt(lam * mu1 / mz)
        a = mpmath.zeros(n, n)
        for i in range(n):
            a[i, i] = -(lam + mu1 + mu2 * (1 - mz))
            if i + 1 < n:
                a[i, i + 1] = a[i + 1, i] = off
        a[0, 0] += mu1
        if family.kind is Kind.PHAT:
            a[n - 1, n - 1] += lam
        ev = mpmath.eigsy(a, eigvals_only=True)
        return sorted(ev[i] for i in range(n))


def _count_interlace(x_n, x_prev, xh):
    v = 0
    for i in range(len(x_prev)):
        v += not x_n[i] < x_prev[i] < x_n[i + 1]
    for i in range(len(xh) - 1):
        v += not x_n[i] < xh[i] < x_n[i + 1]
    v += not xh[-1] > x_n[-1]
    return int(v)


def interlacing_violations(params, z, n, backend=None, margin=1e-9, dps=60):
    """Number of failed strict inequalities among ``x_{n,i} < x_{n-1,i} < x_{n,i+1}``,
    ``x_{n,i} < xh_{n,i} < x_{n,i+1}`` and ``xh_{n,n} > x_{n,n}``.

    Float64 zeros decide every comparison whose gap exceeds ``margin`` times
    the spectral scale; if any gap is smaller, all zeros are recomputed at
    ``dps`` digits and the count is taken from those.
    """
    if n < 2:
        raise ModelError("interlacing needs n >= 2")
    fams = (PolyFamily(params, z, Kind.P), PolyFamily(params, z, Kind.P), PolyFamily(params, z, Kind.PHAT))
    x_n, x_prev, xh = (zeros(f, k, backend).zeros for f, k in zip(fams, (n, n - 1, n)))
    merged = np.sort(np.concatenate([x_n, x_prev])), np.sort(np.concatenate([x_n, xh]))
    scale = max(1.0, float(np.abs(x_n).max()))
    if min(np.diff(m).min() for m in merged) > margin * scale:
        return _count_interlace(x_n, x_prev, xh)
    with mpmath.workdps(dps):
        zs = [zeros_mp(f, k, dps) for f, k in zip(fams, (n, n - 1, n))]
        return _count_interlace(*zs)
