"""Brute-force references: truncated 2-D chain, direct stationary solve, simulation.

States are ``(level, phase)`` = (queue 2, queue 1), indexed level-major as
``level * (phase_cap + 1) + phase``. With that ordering the tandem
generator is banded with half-width ``phase_cap + 1``; ordered phase-major
the half-width is ``level_cap + 1``. The direct solver uses whichever is
narrower.
"""

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import kernels
from .model import ModelError

log = logging.getLogger(__name__)


@dataclass
class TruncatedChain:
    """Finite generator on ``{0..level_cap} x {0..phase_cap}``.

    By default transitions that would leave the box are dropped and the
    diagonal is recomputed, so the generator stays conservative
    (reflecting truncation).
    """

    level_cap: int
    phase_cap: int
    generator: sp.csr_matrix

    @property
    def n_states(self):
        return (self.level_cap + 1) * (self.phase_cap + 1)

    def index(self, level, phase):
        return level * (self.phase_cap + 1) + phase

    def ordering(self, phase_major=False):
        """Permutation of state indices: level-major (identity) or phase-major."""
        if not phase_major:
            return np.arange(self.n_states)
        lv, ph = np.meshgrid(np.arange(self.level_cap + 1), np.arange(self.phase_cap + 1), indexing="ij")
        return np.lexsort((lv.ravel(), ph.ravel()))

    def bandwidth(self, perm=None):
        coo = self.generator.tocoo()
        off = coo.row != coo.col
        if not off.any():
            return 0
        if perm is None:
            return int(np.abs(coo.row[off] - coo.col[off]).max())
        pos = np.empty_like(perm)
        pos[perm] = np.arange(perm.size)
        return int(np.abs(pos[coo.row[off]] - pos[coo.col[off]]).max())

    @classmethod
    def tandem(cls, params, level_cap, phase_cap, boundary="reflect"):
        """The tandem network's transitions, written out from the rates directly.

        ``phase_cap`` is clipped to a finite capacity if that is smaller.

        ``boundary="reflect"`` drops every transition that would leave the
        box. ``boundary="jackson"`` instead lets a queue-1 completion that
        finds queue 2 at ``level_cap`` leave the network, and sends an
        arrival that finds queue 1 at ``phase_cap`` straight to queue 2.
        Both redirections carry exactly the probability flow of the missing
        neighbour under the product form, so for the infinite-room network
        that form solves the truncated balance equations exactly and only
        rounding separates the two.
        """
        _check_caps(level_cap, phase_cap)
        if boundary not in ("reflect", "jackson"):
            raise ModelError(f"boundary must be 'reflect' or 'jackson', got {boundary!r}")
        if not params.is_infinite:
            phase_cap = min(phase_cap, params.capacity)
        jackson = boundary == "jackson"
        lam, mu1, mu2 = float(params.lam), float(params.mu1), float(params.mu2)
        rows, cols, vals = [], [], []

        def add(a, b, rate):
            rows.append(a), cols.append(b), vals.append(rate)

        width = phase_cap + 1
        for k in range(level_cap + 1):
            for j in range(phase_cap + 1):
                s = k * width + j
                if j < phase_cap:  # arrival to queue 1
                    add(s, s + 1, lam)
                elif jackson and k < level_cap:
                    add(s, s + width, lam)
                if j > 0 and k < level_cap:  # queue 1 -> queue 2
                    add(s, s + width - 1, mu1)
                elif j > 0 and jackson:
                    add(s, s - 1, mu1)
                if k > 0:  # departure from queue 2
                    add(s, s - width, mu2)
        return cls(level_cap, phase_cap, _assemble(rows, cols, vals, (level_cap + 1) * width))

    @classmethod
    def from_blocks(cls, blocks, level_cap):
        """Level-independent QBD from its blocks, cut at ``level_cap``.

        Level 0 uses ``q1_boundary``; ``q0`` is dropped at the top level.
        Diagonals are recomputed from the retained off-diagonal rates.
        """
        n = blocks.phase_count
        _check_caps(level_cap, n - 1)
        rows, cols, vals = [], [], []

        def add(mat, k_from, k_to, skip_diag):
            r, c = np.nonzero(mat)
            for i, j in zip(r, c):
                if skip_diag and i == j:
                    continue
                rows.append(k_from * n + i), cols.append(k_to * n + j), vals.append(float(mat[i, j]))

        for k in range(level_cap + 1):
            add(blocks.q1_boundary if k == 0 else blocks.q1, k, k, True)
            if k < level_cap:
                add(blocks.q0, k, k + 1, False)
            if k > 0:
                add(blocks.q2, k, k - 1, False)
        return cls(level_cap, n - 1, _assemble(rows, cols, vals, (level_cap + 1) * n))


def _check_caps(level_cap, phase_cap):
    if level_cap < 0 or phase_cap < 0 or int(level_cap) != level_cap or int(phase_cap) != phase_cap:
        raise ModelError("caps must be nonnegative integers")


def _assemble(rows, cols, vals, n):
    q = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    q.sum_duplicates()
    out = np.asarray(q.sum(axis=1)).ravel()
    return (q - sp.diags(out)).tocsr()


@dataclass
class DirectSolution:
    pi: np.ndarray  # (level_cap + 1, phase_cap + 1)
    residual: float  # max |pi Q| / max |Q|
    method: str

    def level_marginals(self):
        return self.pi.sum(axis=1)


def solve_stationary_direct(chain, method="gth", backend=None):
    """Stationary vector of a truncated chain.

    ``method="gth"`` (default) runs banded Grassmann-Taksar-Heyman state
    reduction: subtraction-free, so probabilities many orders of magnitude
    below the largest keep full relative accuracy. ``method="spsolve"``
    replaces one balance equation by the normalisation and calls SuperLU;
    it is kept as a cross-check and loses relative accuracy on tiny
    states.
    """
    q = chain.generator
    n = chain.n_states
    if n == 1:
        pi = np.ones(1)
    elif method == "gth":
        # level-major has half-width ~ phase_cap, phase-major ~ level_cap
        perms = [chain.ordering(False), chain.ordering(True)]
        widths = [chain.bandwidth(p) for p in perms]
        perm, b = min(zip(perms, widths), key=lambda t: t[1])
        pos = np.empty_like(perm)
        pos[perm] = np.arange(n)
        coo = q.tocoo()
        off = coo.row != coo.col
        r, c = pos[coo.row[off]], pos[coo.col[off]]
        band = np.zeros((n, 2 * b + 1))
        band[r, b + c - r] = coo.data[off]
        try:
            pi_perm = kernels.gth_banded(band, b, backend=backend)
        except ValueError as exc:
            raise ModelError(str(exc)) from exc
        pi = np.empty(n)
        pi[perm] = pi_perm
    elif method == "spsolve":
        a = q.T.tolil()
        a[0, :] = 1.0
        rhs = np.zeros(n)
        rhs[0] = 1.0
        pi = spla.spsolve(a.tocsc(), rhs)
        if not np.isfinite(pi).all():
            raise ModelError("singular system: chain is not irreducible")
    else:
        raise ModelError(f"unknown method {method!r}")
    scale = max(1.0, float(abs(q).max())) if n > 1 else 1.0
    residual = float(np.abs(q.T @ pi).max()) / scale
    return DirectSolution(pi=pi.reshape(chain.level_cap + 1, chain.phase_cap + 1), residual=residual, method=method)


def estimate_decay(pi, window):
    """Median of successive ratios ``m_{k+1} / m_k`` of level marginals over ``window = (lo, hi)``.

    ``pi`` is either a ``(levels, phases)`` array or the marginals
    themselves. The window must stay strictly below the top level.
    """
    pi = np.asarray(pi, dtype=float)
    marg = pi.sum(axis=1) if pi.ndim == 2 else pi
    lo, hi = (int(v) for v in window)
    top = marg.shape[0] - 1
    if not 0 <= lo < hi < top:
        raise ModelError(f"window {window} must satisfy 0 <= lo < hi < {top} (top level excluded)")
    seg = marg[lo : hi + 1]
    if (seg <= 0).any():
        raise ModelError("nonpositive marginal inside the window")
    return float(np.median(seg[1:] / seg[:-1]))


@dataclass
class HittingEstimate:
    p: np.ndarray  # P(level K hit before level 0, in phase j)
    se: np.ndarray  # binomial standard errors
    hits: np.ndarray
    replications: int
    seed: int


def jump_table(blocks):
    """Embedded jump chain of the interior levels as padded move tables.

    Returns ``(dlevel, dest, cum, nmoves)``; unused slots of ``cum`` are
    ``inf`` so both simulator back ends pick the same move.
    """
    n = blocks.phase_count
    moves = []
    for i in range(n):
        row = []
        for dl, mat in ((0, blocks.q1), (1, blocks.q0), (-1, blocks.q2)):
            for j in np.nonzero(mat[i])[0]:
                if dl == 0 and j == i:
                    continue
                row.append((dl, int(j), float(mat[i, j])))
        if not row:
            raise ModelError(f"phase {i} is absorbing in the interior")
        moves.append(row)
    width = max(len(r) for r in moves)
    dlevel = np.zeros((n, width), dtype=np.int64)
    dest = np.zeros((n, width), dtype=np.int64)
    cum = np.full((n, width), np.inf)
    nmoves = np.zeros(n, dtype=np.int64)
    for i, row in enumerate(moves):
        rates = np.array([r for _, _, r in row])
        c = np.cumsum(rates) / rates.sum()
        c[-1] = 1.0
        nmoves[i] = len(row)
        dlevel[i, : len(row)] = [d for d, _, _ in row]
        dest[i, : len(row)] = [j for _, j, _ in row]
        cum[i, : len(row)] = c
    return dlevel, dest, cum, nmoves


def simulate_hitting(blocks, start, K, replications, seed, backend=None):
    """Monte Carlo estimate of the row ``P_{level}^K(phase, .)``.

    Runs the embedded jump chain from ``start = (level, phase)`` until
    level 0 or level ``K`` is reached and records the phase at level
    ``K``. Replication ``r`` uses a counter-based stream keyed by
    ``(seed, r)``, so the result is bitwise reproducible and identical
    across back ends.
    """
    level, phase = (int(v) for v in start)
    if K < 2:
        raise ModelError("K must be >= 2")
    if replications < 1:
        raise ModelError("replications must be >= 1")
    if not 0 <= phase < blocks.phase_count:
        raise ModelError(f"phase {phase} out of range")
    if not 0 <= level <= K:
        raise ModelError(f"start level must lie in [0, {K}]")
    n = blocks.phase_count
    if level == 0:
        hits = np.zeros(n, dtype=np.int64)
    elif level == K:
        hits = np.zeros(n, dtype=np.int64)
        hits[phase] = replications
    else:
        hits = kernels.simulate_level_hits(*jump_table(blocks), level, phase, K, replications, seed, backend=backend)
    p = hits / replications
    se = np.sqrt(p * (1.0 - p) / replications)
    return HittingEstimate(p=p, se=se, hits=hits, replications=int(replications), seed=int(seed))
