"""Finite-phase QBD solvers: rate matrix R, stationary vector, spectra."""

import logging
from dataclasses import dataclass

import numpy as np

from .model import InstabilityError, ModelError

log = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    """An iteration did not meet its tolerance within the cap."""


@dataclass
class RSolution:
    r: np.ndarray
    spectral_radius: float
    iterations: int
    residual: float
    monotone: bool


def r_residual(blocks, r):
    """Max-abs of ``Q0 + R Q1 + R^2 Q2``."""
    return float(np.abs(blocks.q0 + r @ blocks.q1 + r @ r @ blocks.q2).max())


def solve_R(blocks, tol=1e-12, max_iter=1_000_000, check_every=10):
    """Minimal nonnegative solution of ``Q0 + R Q1 + R^2 Q2 = 0``.

    Natural fixed-point iteration ``R <- -(Q0 + R^2 Q2) Q1^{-1}`` from
    ``R = 0``. The iterates increase entrywise; ``monotone`` records
    whether that held at every checkpoint. Stops once both the step size
    and the residual are below ``tol``.
    """
    if tol <= 0:
        raise ModelError("tol must be positive")
    n = blocks.phase_count
    try:
        q1_inv = np.linalg.inv(blocks.q1)
    except np.linalg.LinAlgError as exc:
        raise ModelError("Q1 is singular") from exc
    q0, q2 = blocks.q0, blocks.q2
    r = np.zeros((n, n))
    checkpoint = r
    monotone = True
    for it in range(1, max_iter + 1):
        r_new = -(q0 + r @ r @ q2) @ q1_inv
        if not np.isfinite(r_new).all():
            raise ConvergenceError(f"R iteration diverged after {it} steps")
        step = float(np.abs(r_new - r).max())
        r = r_new
        if it % check_every == 0:
            if (r < checkpoint - 1e-15 * max(1.0, float(r.max()))).any():
                monotone = False
            checkpoint = r
        if step < tol:
            res = r_residual(blocks, r)
            if res < tol:
                break
    else:
        raise ConvergenceError(f"R iteration did not converge in {max_iter} steps")
    r = np.maximum(r, 0.0)
    sp = float(np.max(np.abs(np.linalg.eigvals(r))))
    return RSolution(r=r, spectral_radius=sp, iterations=it, residual=r_residual(blocks, r), monotone=monotone)


def left_null_vector(a, tol=1e-9):
    """Left null vector of a singular generator-like matrix, first entry 1.

    Fixes ``y[0] = 1``, drops the first balance equation and solves the
    remaining square system; the dropped equation is then checked.
    """
    n = a.shape[0]
    if n == 1:
        if abs(a[0, 0]) > tol:
            raise ModelError("1x1 matrix is not singular")
        return np.ones(1)
    sub = a[1:, 1:].T
    rhs = -a[0, 1:]
    try:
        y_rest = np.linalg.solve(sub, rhs)
    except np.linalg.LinAlgError as exc:
        raise ModelError("null space is not one-dimensional") from exc
    y = np.concatenate(([1.0], y_rest))
    res = float(np.abs(y @ a).max())
    scale = float(np.abs(a).max()) * float(np.abs(y).max())
    if res > tol * scale:
        raise ModelError(f"no left null vector (residual {res:.3g})")
    return y


@dataclass
class StationaryDistribution:
    pi: np.ndarray  # (level_cap + 1, phases)
    level_cap: int
    tail_mass: float
    normalization_error: float

    def level_marginals(self):
        return self.pi.sum(axis=1)


def stationary(blocks, r_solution, level_cap):
    """``pi_k = pi_0 R^k`` for ``k <= level_cap``.

    ``pi_0`` is the left null vector of ``Q~1 + R Q2``, normalised with
    ``nu = (I - R)^{-1} 1``. Mass above ``level_cap`` is
    ``pi_0 R^{L+1} nu`` and is reported as ``tail_mass``.
    """
    if r_solution.spectral_radius >= 1.0:
        raise InstabilityError(f"sp(R) = {r_solution.spectral_radius:.6g} >= 1")
    if level_cap < 0:
        raise ModelError("level_cap must be >= 0")
    r = r_solution.r
    n = blocks.phase_count
    y0 = left_null_vector(blocks.q1_boundary + r @ blocks.q2)
    nu = np.linalg.solve(np.eye(n) - r, np.ones(n))
    pi0 = y0 / (y0 @ nu)
    if (pi0 < -1e-12 * pi0.max()).any():
        raise ModelError("boundary vector has negative entries")
    pi0 = np.maximum(pi0, 0.0)
    pi = np.empty((level_cap + 1, n))
    pi[0] = pi0
    for k in range(1, level_cap + 1):
        pi[k] = pi[k - 1] @ r
    tail = float(pi[-1] @ r @ nu)
    err = abs(1.0 - (float(pi.sum()) + tail))
    return StationaryDistribution(pi=pi, level_cap=level_cap, tail_mass=tail, normalization_error=err)


def eigen_spectrum(matrix):
    """All eigenvalues, sorted by modulus (descending)."""
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ModelError("matrix must be square")
    try:
        ev = np.linalg.eigvals(a)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError("eigensolver failed") from exc
    order = np.lexsort((-ev.real, -np.abs(ev)))
    return ev[order]


def nonzero_eigenvalues(matrix, rtol=1e-10):
    """Eigenvalues of the non-nilpotent part, sorted like :func:`eigen_spectrum`.

    A defective zero eigenvalue with a Jordan block of size ``s`` comes back
    from a dense eigensolver as a ring of radius about ``eps**(1/s)``,
    which can reach 1e-3. Instead we restrict ``A`` to ``range(A^n)``, the
    invariant subspace that carries exactly the nonzero eigenvalues, and
    decide its dimension from the singular values of ``A^n`` (relative
    cut ``rtol``). Eigenvalues smaller than about ``rtol**(1/n)`` times
    the spectral radius are therefore reported as zero.
    """
    a = np.asarray(matrix, dtype=float)
    n = a.shape[0]
    p = np.eye(n)
    for _ in range(n):
        p = p @ a
        top = float(np.abs(p).max())
        if top == 0.0:
            return np.zeros(0, dtype=complex)
        p /= top
    u, sv, _ = np.linalg.svd(p)
    rank = int((sv > rtol * sv[0]).sum())
    basis = u[:, :rank]
    return eigen_spectrum(basis.T @ a @ basis)


def match_multisets(a, b):
    """Largest pairing distance after greedy nearest matching; inf if sizes differ."""
    a = list(np.asarray(a, dtype=complex))
    b = list(np.asarray(b, dtype=complex))
    if len(a) != len(b):
        return float("inf")
    worst = 0.0
    for x in a:
        d = [abs(x - y) for y in b]
        i = int(np.argmin(d))
        worst = max(worst, d[i])
        b.pop(i)
    return worst
