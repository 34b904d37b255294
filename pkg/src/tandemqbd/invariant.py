"""z^{-1}-invariant measures of the infinite-phase rate matrix.

A row vector ``w`` with ``w R = z w`` solves the second-order recursion

    w_1 = (lam + mu2 (1 - z)) z / mu1                      (w_0 = 1)
    lam z w_{k-1} - a z w_k + mu1 w_{k+1} = 0,   a = lam + mu1 + mu2 (1 - z)

whose characteristic roots are ``u = (a z +- sqrt(D)) / (2 mu1)`` with
``D = a^2 z^2 - 4 lam mu1 z``. Three closed forms follow from the sign of
``D``. Writing ``s = a z / (2 mu1)`` (mean of the roots), ``t = w_1`` and

    S_k = (u1^k + u2^k) / 2,    D_k = (u1^k - u2^k) / (u1 - u2),

every regime reduces to ``w_k = S_k + (t - s) D_k``. We evaluate ``S_k``
and ``D_k`` in forms that stay accurate as ``D -> 0`` (``expm1``/``log1p``
for real roots, ``sin(k phi) / sin(phi)`` for complex ones), so the
near-degenerate band needs no series expansion.
"""

import enum
import math
from dataclasses import dataclass, field

import mpmath
import numpy as np

from .model import ModelError, chi1, compute_z1

DEGENERATE_BAND = 1e-10


class WRegime(str, enum.Enum):
    REAL_ROOTS = "RealRoots"
    DEGENERATE = "Degenerate"
    OSCILLATING = "Oscillating"


def _check_z(z):
    if not (-1.0 < z < 1.0) or z == 0:
        raise ModelError(f"z must lie in (-1, 0) or (0, 1), got {z!r}")


def discriminant(params, z):
    lam, mu1, mu2 = params.lam, params.mu1, params.mu2
    a = lam + mu1 + mu2 * (1.0 - z)
    return a * a * z * z - 4.0 * lam * mu1 * z


@dataclass
class Classification:
    in_ell1: bool
    positive: bool

    @property
    def feasible(self):
        return self.in_ell1 and self.positive


def classify(params, z):
    """l1 membership (``z1 < z < mu1/mu2``) and positivity (``chi1(z) <= 0``).

    For ``z < 0`` the measure is never positive (``w_1 < 0``). ``chi1`` is
    compared against a few ulps of the rate scale so that ``z = eta`` as
    returned by :func:`compute_eta` counts as positive.
    """
    _check_z(z)
    in_ell1 = compute_z1(params) < z < params.mu1 / params.mu2
    slack = 8.0 * np.finfo(float).eps * (params.lam + params.mu1 + params.mu2)
    positive = z > 0 and chi1(params, z) <= slack
    return Classification(in_ell1=bool(in_ell1), positive=bool(positive))


@dataclass
class InvariantMeasure:
    """Closed-form ``w`` with ``w_0 = 1``.

    ``coefficients`` holds the regime's scalars: ``c1, c2, u1, u2`` for
    real roots, ``u, c`` for the double root (``w_k = u^k (1 + c k)``) and
    ``modulus, phi, c`` for complex roots
    (``w_k = |u|^k (cos k phi + c sin k phi)``).
    """

    params: object
    z: float
    regime: WRegime
    discriminant: float
    coefficients: dict
    in_ell1: bool
    positive: bool
    w: np.ndarray = field(repr=False)
    tail_ratio: float = float("nan")  # largest root modulus

    @property
    def feasible(self):
        return self.in_ell1 and self.positive

    def __call__(self, k):
        vals, _ = _evaluate(self.params, self.z, np.atleast_1d(np.asarray(k)))
        return vals if np.ndim(k) else float(vals[0])

    def envelope(self, k):
        """Magnitude scale of the closed form at ``k``, used for relative errors near sign changes."""
        _, env = _evaluate(self.params, self.z, np.atleast_1d(np.asarray(k)))
        return env if np.ndim(k) else float(env[0])


def _roots(params, z):
    """Characteristic roots ``(u1, u2)`` with ``u1`` taking the ``+sqrt`` branch (real case)."""
    lam, mu1, mu2 = params.lam, params.mu1, params.mu2
    a = lam + mu1 + mu2 * (1.0 - z)
    sq = math.sqrt(discriminant(params, z))
    q = 0.5 * (a * z + math.copysign(sq, a * z))
    big, small = q / mu1, lam * z / q
    return (big, small) if a * z >= 0 else (small, big)


def _real_coefficients(params, z):
    """``c1, c2`` from ``w_0 = 1`` and ``w_1``; the smaller one comes from the product

    ``c1 c2 = mu1 z (1 - z)(mu2 z - lam) / D`` to avoid cancellation.
    """
    lam, mu1, mu2 = params.lam, params.mu1, params.mu2
    d = discriminant(params, z)
    sq = math.sqrt(d)
    b = (lam - mu1 + mu2 * (1.0 - z)) * z
    prod = mu1 * z * (1.0 - z) * (mu2 * z - lam) / d
    if b >= 0:
        c1 = (sq + b) / (2.0 * sq)
        c2 = prod / c1
    else:
        c2 = (sq - b) / (2.0 * sq)
        c1 = prod / c2
    return c1, c2


def _evaluate(params, z, k):
    """Values and envelopes of ``w_k`` for an integer array ``k``; ``w_0`` is exactly 1."""
    vals, env = _evaluate_forms(params, z, k)
    first = np.asarray(k) == 0
    if first.any():
        vals = np.where(first, 1.0, vals)
        env = np.where(first, 1.0, env)
    return vals, env


def _evaluate_forms(params, z, k):
    lam, mu1, mu2 = params.lam, params.mu1, params.mu2
    k = np.asarray(k, dtype=float)
    if (k < 0).any():
        raise ModelError("k must be >= 0")
    a = lam + mu1 + mu2 * (1.0 - z)
    d = discriminant(params, z)
    s = a * z / (2.0 * mu1)
    gap = (lam - mu1 + mu2 * (1.0 - z)) * z / (2.0 * mu1)  # t - s
    if d > 0:
        c1, c2 = _real_coefficients(params, z)
        u1, u2 = _roots(params, z)
        t1, t2 = c1 * np.power(u1, k), c2 * np.power(u2, k)
        w_c, env_c = t1 + t2, np.abs(t1) + np.abs(t2)
        if z < 0:
            return w_c, env_c
        # unified form; wins near the double root where c1, c2 blow up
        half = math.sqrt(d) / (2.0 * mu1)
        lo = lam * z / (mu1 * (s + half))  # smaller root via the product, no cancellation
        growth = k * math.log1p(2.0 * half / lo)
        with np.errstate(over="ignore", invalid="ignore"):
            dk = np.where(
                growth < 1.0,
                np.power(lo, k) * np.expm1(np.minimum(growth, 1.0)) / (2.0 * half),
                (np.power(s + half, k) - np.power(lo, k)) / (2.0 * half),
            )
            sk = np.power(lo, k) + half * dk
        w_u, env_u = sk + gap * dk, np.abs(sk) + abs(gap) * np.abs(dk)
        pick = env_u < env_c
        return np.where(pick, w_u, w_c), np.where(pick, env_u, env_c)
    elif d < 0:
        e = math.sqrt(-d) / (2.0 * mu1)
        mod = math.hypot(s, e)
        phi = math.atan2(e, s)
        pw = np.power(mod, k)
        sk = pw * np.cos(k * phi)
        dk = np.power(mod, k - 1.0) * np.sin(k * phi) / math.sin(phi)
    else:
        sk = np.power(s, k)
        dk = k * np.power(s, k - 1.0)
    return sk + gap * dk, np.abs(sk) + abs(gap) * np.abs(dk)


def solve_w(params, z, n_terms=201):
    """Closed-form z^{-1}-invariant measure with ``w_0 = 1``, materialised for ``k < n_terms``."""
    _check_z(z)
    if n_terms < 2:
        raise ModelError("n_terms must be >= 2")
    lam, mu1 = params.lam, params.mu1
    a = lam + mu1 + params.mu2 * (1.0 - z)
    d = discriminant(params, z)
    scale = (lam + mu1 + params.mu2) ** 2
    s = a * z / (2.0 * mu1)
    t = (lam + params.mu2 * (1.0 - z)) * z / mu1
    if z > 0 and abs(d) < DEGENERATE_BAND * scale:
        regime = WRegime.DEGENERATE
        coeffs = {"u": s, "c": t / s - 1.0}
        modulus = s
    elif d > 0:
        regime = WRegime.REAL_ROOTS
        u1, u2 = _roots(params, z)
        c1, c2 = _real_coefficients(params, z)
        coeffs = {"c1": c1, "c2": c2, "u1": u1, "u2": u2}
        modulus = max(abs(u1), abs(u2))
    else:
        regime = WRegime.OSCILLATING
        e = math.sqrt(-d) / (2.0 * mu1)
        modulus = math.hypot(s, e)
        coeffs = {"modulus": modulus, "phi": math.atan2(e, s), "c": (t - s) / e}
    cls = classify(params, z)
    w, _ = _evaluate(params, z, np.arange(n_terms))
    return InvariantMeasure(
        params=params,
        z=z,
        regime=regime,
        discriminant=d,
        coefficients=coeffs,
        in_ell1=cls.in_ell1,
        positive=cls.positive,
        w=w,
        tail_ratio=modulus,
    )


def w_recursion_oracle(params, z, n, dps=None):
    """``w_0 .. w_n`` straight from the recursion.

    Forward recursion amplifies rounding by ``(|u_max| / |u_min|)^k`` when
    ``w`` is dominated by the smaller root, so pass ``dps`` to run it in
    mpmath at that precision (the result is still returned as floats).
    """
    if z == 0:
        raise ModelError("z must be nonzero")
    if n < 1:
        raise ModelError("n must be >= 1")
    if dps is None:
        lam, mu1, mu2 = float(params.lam), float(params.mu1), float(params.mu2)
        one = 1.0
        conv = float
        ctx = None
    else:
        ctx = mpmath.workdps(dps)
        ctx.__enter__()
        lam, mu1, mu2 = mpmath.mpf(params.lam), mpmath.mpf(params.mu1), mpmath.mpf(params.mu2)
        z = mpmath.mpf(z)
        one = mpmath.mpf(1)
        conv = float
    try:
        a = lam + mu1 + mu2 * (1 - z)
        w = [one, (lam + mu2 * (1 - z)) * z / mu1]
        for _ in range(1, n):
            w.append((a * z * w[-1] - lam * z * w[-2]) / mu1)
        return np.array([conv(v) for v in w])
    finally:
        if ctx is not None:
            ctx.__exit__(None, None, None)


def oracle_dps(params, z, n, digits=30):
    """Working precision that keeps ``n`` forward steps accurate to ``digits`` digits."""
    lam, mu1, mu2 = params.lam, params.mu1, params.mu2
    a = lam + mu1 + mu2 * (1.0 - z)
    # crude root-ratio bound from the coefficients alone
    ratio = (abs(a * z) + math.sqrt(abs(discriminant(params, z)))) ** 2 / (4.0 * mu1 * abs(lam * z)) + 1.0
    return int(digits + n * math.log10(ratio) + 10)


def ell1_sum(params, z):
    """``sum_k w_k = mu1 / (mu1 - mu2 z)`` for summable ``w``."""
    _check_z(z)
    if not params.mu1 - params.mu2 * z > 0:
        raise ModelError("sum diverges for z >= mu1/mu2")
    return params.mu1 / (params.mu1 - params.mu2 * z)
