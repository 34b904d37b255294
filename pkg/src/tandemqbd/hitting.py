"""One-level-up hitting matrices ``H_k``, their limit ``H`` and exit products.

``H_k(i, j)`` is the probability that, started in ``(k, i)``, the chain
reaches level ``k + 1`` before level 0 and does so in phase ``j``. It
solves ``Q0 + Q1 H_k + Q2 H_{k-1} H_k = 0`` with ``H_0 = 0``, and the
products ``P_k^K = H_k ... H_{K-1}`` give exits through level ``K``.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components

from .model import ModelError, compute_eta
from .qbd import ConvergenceError

log = logging.getLogger(__name__)


@dataclass
class HittingLadder:
    h_seq: list  # H_1 .. H_k
    h_star: np.ndarray = None
    residual: float = float("nan")  # max |Q0 + Q1 H + Q2 H^2|
    iterations: int = 0
    monotone: bool = True


def _step(blocks, h_prev):
    a = blocks.q1 + blocks.q2 @ h_prev
    try:
        return -np.linalg.solve(a, blocks.q0)
    except np.linalg.LinAlgError as exc:
        raise ModelError("Q1 + Q2 H_{k-1} is singular") from exc


def h_residual(blocks, h):
    return float(np.abs(blocks.q0 + blocks.q1 @ h + blocks.q2 @ h @ h).max())


def h_sequence(blocks, k_max):
    """``H_1 .. H_{k_max}`` from ``H_k = -(Q1 + Q2 H_{k-1})^{-1} Q0``."""
    if k_max < 1:
        raise ModelError("k_max must be >= 1")
    n = blocks.phase_count
    h = np.zeros((n, n))
    seq = []
    monotone = True
    for _ in range(k_max):
        h_new = _step(blocks, h)
        if (h_new < h - 1e-15).any():
            monotone = False
        h = h_new
        seq.append(h)
    return HittingLadder(h_seq=seq, residual=h_residual(blocks, h), iterations=k_max, monotone=monotone)


def solve_H(blocks, tol=1e-12, max_iter=1_000_000, keep=50):
    """Minimal nonnegative solution ``H`` of ``Q0 + Q1 H + Q2 H^2 = 0`` as the limit of ``H_k``.

    Stops once the step is below ``tol`` and the residual is too. Only the
    first ``keep`` ladder matrices are stored.
    """
    if tol <= 0:
        raise ModelError("tol must be positive")
    n = blocks.phase_count
    h = np.zeros((n, n))
    seq = []
    monotone = True
    for it in range(1, max_iter + 1):
        h_new = _step(blocks, h)
        if (h_new < h - 1e-15).any():
            monotone = False
        step = float(np.abs(h_new - h).max())
        h = h_new
        if it <= keep:
            seq.append(h)
        if step < tol and h_residual(blocks, h) < tol:
            break
    else:
        raise ConvergenceError(f"H iteration did not converge in {max_iter} steps")
    return HittingLadder(h_seq=seq, h_star=h, residual=h_residual(blocks, h), iterations=it, monotone=monotone)


def exit_probabilities(blocks, k, K, ladder=None):
    """``P_k^K = H_k H_{k+1} ... H_{K-1}``."""
    if not 1 <= k < K:
        raise ModelError(f"need 1 <= k < K, got k={k}, K={K}")
    if ladder is None or len(ladder.h_seq) < K - 1:
        ladder = h_sequence(blocks, K - 1)
    out = ladder.h_seq[k - 1].copy()
    for idx in range(k, K - 1):
        out = out @ ladder.h_seq[idx]
    return out


def support(h, atol=0.0):
    """Phases through which level ``k+1`` can be entered: the nonzero columns of ``h``."""
    return np.nonzero(np.abs(h).max(axis=0) > atol)[0]


def is_irreducible_on_support(h):
    """Strong connectivity of the positive pattern of ``h`` restricted to :func:`support`."""
    sup = support(h)
    if sup.size == 0:
        return False
    sub = (h[np.ix_(sup, sup)] > 0).astype(int)
    n_comp, _ = connected_components(sub, directed=True, connection="strong")
    return n_comp == 1


@dataclass
class DecayEstimate:
    Ks: np.ndarray  # K = 2 .. K_max
    log_p: np.ndarray  # log P_1^K(i, j)
    ratios: np.ndarray  # P_1^{K+1} / P_1^K for K = 2 .. K_max - 1
    ratio_estimate: float
    slope_estimate: float  # exp(log P_1^{K_max} / K_max)
    reference: float = None
    reference_name: str = None
    row_sum_ratio: float = None  # decay of sum_j P_1^K(i, j), reported only
    notes: list = field(default_factory=list)

    @property
    def gap(self):
        return None if self.reference is None else abs(self.ratio_estimate - self.reference)


def hitting_decay_estimate(blocks, i, j, K_max, params=None):
    """Decay of ``P_1^K(i, j)`` in ``K`` by successive ratios and by ``log P / K``.

    The product is carried as a row vector with a running log scale so
    ``K_max`` in the thousands does not underflow. With ``params`` the
    reference limit is attached: ``zhat_{m+1}`` for exact finite-capacity
    blocks, ``eta`` (``mu1 <= mu2``) or ``rho2`` when the blocks are a
    phase-capped surrogate of the infinite network.
    """
    n = blocks.phase_count
    if not (0 <= i < n and 0 <= j < n):
        raise ModelError("phase index out of range")
    if K_max < 4:
        raise ModelError("K_max must be >= 4")
    v = np.zeros(n)
    v[i] = 1.0
    h = np.zeros((n, n))
    logscale = 0.0
    log_p = np.empty(K_max - 1)
    log_row = np.empty(K_max - 1)
    for K in range(2, K_max + 1):
        h = _step(blocks, h)  # H_{K-1}
        v = v @ h
        top = float(v.max())
        if top <= 0.0:
            raise ModelError(f"row {i} of P_1^{K} vanished")
        logscale += math.log(top)
        v /= top
        log_p[K - 2] = (math.log(v[j]) if v[j] > 0 else -math.inf) + logscale
        log_row[K - 2] = math.log(v.sum()) + logscale
    if not np.isfinite(log_p[-5:]).all():
        raise ModelError(f"P_1^K({i}, {j}) is identically zero (phase {j} is never entered from below)")
    ratios = np.exp(np.diff(log_p))
    est = DecayEstimate(
        Ks=np.arange(2, K_max + 1),
        log_p=log_p,
        ratios=ratios,
        ratio_estimate=float(ratios[-1]),
        slope_estimate=float(math.exp(log_p[-1] / K_max)),
        row_sum_ratio=float(math.exp(log_row[-1] - log_row[-2])),
    )
    if params is not None:
        if not params.is_infinite:
            from .orthopoly import compute_zhat

            est.reference, est.reference_name = compute_zhat(params, params.capacity), "zhat"
        elif params.mu1 <= params.mu2:
            est.reference, est.reference_name = compute_eta(params), "eta"
        else:
            est.reference, est.reference_name = params.rho2, "rho2"
    return est
