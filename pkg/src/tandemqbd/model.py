"""Tandem network parameters, QBD generator blocks and scalar spectral functions.

Phase = number of customers at queue 1, level = number at queue 2.
"""

import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import bisect

log = logging.getLogger(__name__)


class ModelError(ValueError):
    """Invalid parameters or arguments."""


class InstabilityError(RuntimeError):
    """The requested stationary computation needs a stable network."""


class Capacity(enum.Enum):
    INFINITE = "inf"


class Regime(str, enum.Enum):
    FIRST_BOTTLENECK = "FirstBottleneck"  # mu1 <= mu2
    SECOND_BOTTLENECK = "SecondBottleneck"  # mu1 > mu2


@dataclass(frozen=True)
class TandemParams:
    """Two M/M/1 stations in series.

    ``capacity`` is the waiting room of queue 1: a positive int, or
    ``Capacity.INFINITE``.
    """

    lam: float
    mu1: float
    mu2: float
    capacity: object = Capacity.INFINITE

    def __post_init__(self):
        for name in ("lam", "mu1", "mu2"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ModelError(f"{name} must be a finite positive rate, got {v!r}")
        cap = self.capacity
        if cap is not Capacity.INFINITE:
            if isinstance(cap, bool) or not isinstance(cap, (int, np.integer)) or cap < 1:
                raise ModelError(f"capacity must be an integer >= 1 or Capacity.INFINITE, got {cap!r}")
            object.__setattr__(self, "capacity", int(cap))

    @property
    def rho1(self):
        return self.lam / self.mu1

    @property
    def rho2(self):
        return self.lam / self.mu2

    @property
    def is_infinite(self):
        return self.capacity is Capacity.INFINITE

    @property
    def regime(self):
        return Regime.FIRST_BOTTLENECK if self.mu1 <= self.mu2 else Regime.SECOND_BOTTLENECK

    def with_capacity(self, capacity):
        return TandemParams(self.lam, self.mu1, self.mu2, capacity)


@dataclass
class QbdBlocks:
    """Level-independent QBD blocks, ``Q = [[q1_boundary, q0], [q2, q1, q0], ...]``.

    ``q0`` moves one level up, ``q2`` one level down.
    """

    q0: np.ndarray
    q1: np.ndarray
    q2: np.ndarray
    q1_boundary: np.ndarray

    @property
    def phase_count(self):
        return self.q1.shape[0]

    def check(self, atol=1e-12):
        """Raise ``ModelError`` unless the blocks form a conservative generator."""
        n = self.phase_count
        for name in ("q0", "q1", "q2", "q1_boundary"):
            m = getattr(self, name)
            if m.shape != (n, n):
                raise ModelError(f"{name} has shape {m.shape}, expected {(n, n)}")
        if (self.q0 < 0).any() or (self.q2 < 0).any():
            raise ModelError("q0 and q2 must be nonnegative")
        off = ~np.eye(n, dtype=bool)
        for name in ("q1", "q1_boundary"):
            m = getattr(self, name)
            if (m[off] < 0).any():
                raise ModelError(f"{name} has negative off-diagonal entries")
            if (np.diag(m) >= 0).any():
                raise ModelError(f"{name} must have a strictly negative diagonal")
        scale = max(1.0, float(np.abs(self.q1).max()))
        if np.abs((self.q0 + self.q1 + self.q2).sum(axis=1)).max() > atol * scale:
            raise ModelError("rows of q0 + q1 + q2 must sum to zero")
        if np.abs((self.q1_boundary + self.q0).sum(axis=1)).max() > atol * scale:
            raise ModelError("rows of q1_boundary + q0 must sum to zero")
        return self


def build_blocks(params, phase_cap=None):
    """Generator blocks of the tandem network with phases ``0..phase_cap``.

    For finite capacity ``m`` the blocks are exact and ``phase_cap`` must be
    ``m`` (or omitted). For infinite capacity ``phase_cap`` selects a
    finite surrogate: queue 1 blocks arrivals once it holds ``phase_cap``
    customers.
    """
    if params.is_infinite:
        if phase_cap is None:
            raise ModelError("phase_cap is required for infinite capacity")
        log.info("truncating infinite waiting room to phase cap %d", phase_cap)
    else:
        if phase_cap is None:
            phase_cap = params.capacity
        if phase_cap != params.capacity:
            raise ModelError(f"phase_cap {phase_cap} must equal the finite capacity {params.capacity}")
    if int(phase_cap) != phase_cap or phase_cap < 1:
        raise ModelError(f"phase_cap must be an integer >= 1, got {phase_cap!r}")
    m = int(phase_cap)
    n = m + 1
    lam, mu1, mu2 = float(params.lam), float(params.mu1), float(params.mu2)

    q0 = np.diag(np.full(m, mu1), k=-1)
    q2 = mu2 * np.eye(n)
    up = np.diag(np.full(m, lam), k=1)
    leave = np.full(n, lam)
    leave[m] = 0.0
    serve1 = np.full(n, mu1)
    serve1[0] = 0.0
    q1 = up - np.diag(leave + serve1 + mu2)
    q1_boundary = up - np.diag(leave + serve1)
    return QbdBlocks(q0=q0, q1=q1, q2=q2, q1_boundary=q1_boundary)


@dataclass
class StabilityReport:
    stable: bool
    condition: str
    lhs: float
    rhs: float

    def __str__(self):
        rel = "<" if self.stable else ">="
        return f"{self.condition}: {self.lhs:.6g} {rel} {self.rhs:.6g}"


def stability_check(params):
    """Positive recurrence test for the tandem QBD.

    Finite ``m``: ``rho2 < (1 - rho1**(m+1)) / (1 - rho1**m)``, or
    ``rho2 < 1 + 1/m`` when ``rho1 == 1``. Infinite: ``lam < min(mu1, mu2)``.
    """
    if params.is_infinite:
        rhs = min(params.mu1, params.mu2)
        return StabilityReport(params.lam < rhs, "lambda < min(mu1, mu2)", params.lam, rhs)
    m = params.capacity
    r1, r2 = params.rho1, params.rho2
    if math.isclose(r1, 1.0, rel_tol=1e-12, abs_tol=0.0):
        rhs = 1.0 + 1.0 / m
        return StabilityReport(r2 < rhs, "rho2 < 1 + 1/m (rho1 = 1)", r2, rhs)
    rhs = (1.0 - r1 ** (m + 1)) / (1.0 - r1**m)
    return StabilityReport(r2 < rhs, "rho2 < (1 - rho1^(m+1)) / (1 - rho1^m)", r2, rhs)


def require_stable(params):
    rep = stability_check(params)
    if not rep.stable:
        raise InstabilityError(f"unstable network ({rep})")
    return rep


def characteristic_matrix(params, z, n, capped=False):
    """``(n x n)`` corner of ``(Q0 + z Q1 + z^2 Q2) / z`` for the tandem.

    ``capped=True`` gives the finite-capacity version whose last row has no
    arrival term; with ``n = m + 1`` it equals the matrix built from the
    exact finite-``m`` blocks.
    """
    if n < 1:
        raise ModelError("n must be >= 1")
    if z == 0:
        raise ModelError("z must be nonzero")
    lam, mu1, mu2 = params.lam, params.mu1, params.mu2
    diag = np.full(n, -lam - mu1 - mu2 * (1.0 - z))
    diag[0] += mu1
    if capped:
        diag[n - 1] += lam
    return np.diag(diag) + np.diag(np.full(n - 1, lam), 1) + np.diag(np.full(n - 1, mu1 / z), -1)


def _check_z(z):
    if not z > 0:
        raise ModelError(f"z must be positive, got {z!r}")


def tau(params, z):
    """Upper edge of the continuous spectrum of the polynomial family."""
    _check_z(z)
    lam, mu1, mu2 = params.lam, params.mu1, params.mu2
    return -lam - mu1 - mu2 * (1.0 - z) + 2.0 * math.sqrt(lam * mu1 / z)


def sigma(params, z):
    """Lower edge of the continuous spectrum."""
    _check_z(z)
    lam, mu1, mu2 = params.lam, params.mu1, params.mu2
    return -lam - mu1 - mu2 * (1.0 - z) - 2.0 * math.sqrt(lam * mu1 / z)


def chi(params, z):
    """Location of the isolated mass point, present for ``z > rho1``."""
    _check_z(z)
    return (params.lam / z - params.mu2) * (1.0 - z)


def chi1(params, z, rule="branch"):
    """Supremum of the orthogonality support.

    ``rule="branch"`` (default): ``tau`` for ``z <= rho1``, else ``chi``.
    The branches meet at ``z = rho1`` where both equal
    ``(mu1 - mu2)(1 - rho1)``.

    ``rule="max"``: ``max(tau, chi)``. Since
    ``chi - tau = (sqrt(lam/z) - sqrt(mu1))**2 >= 0`` this is just ``chi``
    and disagrees with the branch rule for every ``z < rho1``; it is kept
    for comparison only (see :func:`chi1_rule_gap`).
    """
    _check_z(z)
    if rule == "branch":
        return tau(params, z) if z <= params.rho1 else chi(params, z)
    if rule == "max":
        return max(tau(params, z), chi(params, z))
    raise ModelError(f"rule must be 'branch' or 'max', got {rule!r}")


def chi1_rule_gap(params, zs, atol=1e-12):
    """Grid points where the branch rule and ``max(tau, chi)`` differ by more than ``atol``.

    Returns a list of ``(z, branch_value, max_value)``.
    """
    out = []
    for z in np.asarray(zs, dtype=float):
        b, m = chi1(params, z, "branch"), chi1(params, z, "max")
        if abs(b - m) > atol:
            out.append((float(z), b, m))
    return out


def tau_minimizer(params):
    """Argmin of ``tau`` on ``(0, inf)``; ``tau`` is convex there."""
    return (math.sqrt(params.lam * params.mu1) / params.mu2) ** (2.0 / 3.0)


def compute_eta(params, tol=1e-14, eps=1e-12):
    """Unique root of ``tau`` in ``(0, 1)``.

    ``tau`` blows up at ``0+`` and is convex, so the root is bracketed by
    ``(eps, min(1 - eps, argmin tau))``.
    """
    if tol <= 0:
        raise ModelError("tol must be positive")
    hi = min(1.0 - eps, tau_minimizer(params))
    if not tau(params, hi) < 0:
        raise ModelError("tau has no root in (0, 1) (boundary case lambda = mu1 with mu2 <= lambda)")
    return bisect(lambda z: tau(params, z), eps, hi, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=500)


def compute_z1(params):
    """Lower end of the l1 range for z-invariant measures (negative, above -1)."""
    lam, mu1, mu2 = params.lam, params.mu1, params.mu2
    s = 2.0 * lam + mu1 + mu2
    # rationalised form of (s - sqrt(s^2 + 4 mu1 mu2)) / (2 mu2); no cancellation
    return -2.0 * mu1 / (s + math.sqrt(s * s + 4.0 * mu1 * mu2))


@dataclass
class SpectralReport:
    rho1: float
    rho2: float
    eta: float
    z1: float
    regime: Regime
    feasible_interval: tuple
    stability: StabilityReport
    zhat: float = None
    notes: list = field(default_factory=list)

    def to_dict(self):
        lo, hi = self.feasible_interval
        return {
            "rho1": self.rho1,
            "rho2": self.rho2,
            "eta": self.eta,
            "z1": self.z1,
            "regime": self.regime.value,
            "feasible_interval": {"lower": lo, "upper": hi, "lower_closed": True, "upper_closed": False},
            "stability": {"stable": self.stability.stable, "condition": self.stability.condition,
                          "lhs": self.stability.lhs, "rhs": self.stability.rhs},
            "zhat": self.zhat,
        }


def feasible_interval(params, eta=None):
    """Half-open range ``[lo, hi)`` of decay rates with positive l1 invariant measures."""
    if params.mu1 <= params.mu2:
        if eta is None:
            eta = compute_eta(params)
        return (eta, params.mu1 / params.mu2)
    return (params.rho2, 1.0)


def spectral_report(params, tol=1e-14):
    """Headline spectral quantities of the (infinite waiting room) tandem.

    For finite capacity the report also carries ``zhat``, the decay rate of
    that finite network.
    """
    stab = require_stable(params)
    if not params.is_infinite and not params.lam < min(params.mu1, params.mu2):
        raise InstabilityError("the infinite-room quantities need lambda < min(mu1, mu2)")
    eta = compute_eta(params, tol=tol)
    zhat = None
    if not params.is_infinite:
        from .orthopoly import compute_zhat

        zhat = compute_zhat(params, params.capacity)
    return SpectralReport(
        rho1=params.rho1,
        rho2=params.rho2,
        eta=eta,
        z1=compute_z1(params),
        regime=params.regime,
        feasible_interval=feasible_interval(params, eta),
        stability=stab,
        zhat=zhat,
    )
