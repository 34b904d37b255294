"""Level-0 boundary designs that give the tandem a prescribed decay rate ``z``.

Both designs keep ``Q~1`` tridiagonal and make the invariant measure
``w(z)`` satisfy ``w (Q~1' + R Q2) = 0``, so that ``pi_n = c z^n w``.

* ``ArrivalMod`` replaces the arrival rate ``lam`` in phase ``i`` of level 0
  by ``lt_i``. With ``y_i = lt_i w_i`` the defining recursion telescopes to
  ``y_i = (mu1 - mu2 z) sum_{k > i} w_k``.
* ``RemovalMod`` adds a rate ``nu_i`` from ``(0, i)`` to ``(0, i - 1)``. Here
  ``nu_i w_i = lam w_{i-1} - (mu1 - mu2 z) sum_{k >= i} w_k``.

The tail sums are evaluated from the closed form of ``w`` with a running
log scale, which avoids the loss of accuracy of the literal forward
recursions (kept as :func:`arrival_rates_recursion` and
:func:`removal_rates_recursion` for cross-checks).
"""

import enum
import logging
import math
from dataclasses import dataclass

import numpy as np

from .model import ModelError, build_blocks, compute_eta
from .invariant import WRegime, _evaluate, classify, solve_w

log = logging.getLogger(__name__)


class DesignKind(str, enum.Enum):
    ARRIVAL = "ArrivalMod"
    REMOVAL = "RemovalMod"


class InfeasibleTarget(ModelError):
    """The requested decay rate cannot be produced by the chosen design."""


@dataclass
class BoundaryDesign:
    target_z: float
    kind: DesignKind
    rates: np.ndarray  # lt_0..lt_cap (ArrivalMod) or nu_0..nu_cap with nu_0 = 0 (RemovalMod)
    w: object  # InvariantMeasure
    phase_cap: int
    notes: list

    @property
    def y(self):
        """``rate_i * w_i``, the telescoped sequence of the positivity proofs."""
        return self.rates * self.w.w[: self.phase_cap + 1]


def _ratios(meas, n):
    """``T_i / w_i`` and ``w_{i-1} / w_i`` for ``i = 0..n``, where ``T_i = sum_{k > i} w_k``.

    ``w_{-1}`` is taken as 0.
    """
    idx = np.arange(n + 1, dtype=float)
    if meas.regime is WRegime.REAL_ROOTS:
        c = meas.coefficients
        c1, c2, u1, u2 = c["c1"], c["c2"], c["u1"], c["u2"]
        with np.errstate(divide="ignore"):
            la = math.log(abs(c1)) + idx * math.log(u1) if c1 != 0 else np.full(n + 1, -np.inf)
            lb = math.log(abs(c2)) + idx * math.log(u2) if c2 != 0 else np.full(n + 1, -np.inf)
        top = np.maximum(la, lb)
        a = math.copysign(1.0, c1) * np.exp(la - top)
        b = math.copysign(1.0, c2) * np.exp(lb - top)
        w_i = a + b
        tail = a * u1 / (1.0 - u1) + b * u2 / (1.0 - u2)
        prev = a / u1 + b / u2
        back = prev / w_i
    elif meas.regime is WRegime.DEGENERATE:
        # w_k is positive here, so a reverse cumulative sum is accurate
        u = meas.coefficients["u"]
        extra = int(math.ceil(60.0 / -math.log10(u))) + 50
        w_all, _ = _evaluate(meas.params, meas.z, np.arange(n + 2 + extra))
        if (w_all <= 0).any():
            raise ModelError("w underflows or is not positive over the design range")
        tails = np.cumsum(w_all[::-1])[::-1]  # tails[k] = sum_{j >= k} w_j
        w_i = w_all[: n + 1]
        tail = tails[1 : n + 2]
        back = np.concatenate(([0.0], w_all[:n] / w_i[1:]))
        return tail / w_i, back
    else:
        raise ModelError("w oscillates in sign for this z; no positive design exists")
    back[0] = 0.0
    return tail / w_i, back


def _check_positive_measure(params, z):
    if not 0 < z < 1:
        raise InfeasibleTarget(f"target z must lie in (0, 1), got {z!r}")
    cls = classify(params, z)
    if not cls.feasible:
        why = "not in l1" if not cls.in_ell1 else "not positive"
        raise InfeasibleTarget(f"z = {z:.6g} is infeasible: invariant measure {why}")


def design_arrival_rates(params, z, phase_cap):
    """Phase-dependent level-0 arrival rates ``lt_0..lt_cap`` forcing decay rate ``z``.

    Enabled whenever ``w(z)`` is positive and summable; the positivity
    argument does not use ``mu1 > mu2``.
    """
    _check_positive_measure(params, z)
    if phase_cap < 1:
        raise ModelError("phase_cap must be >= 1")
    notes = []
    if params.mu1 <= params.mu2:
        notes.append("mu1 <= mu2: relies on the positivity argument not needing mu1 > mu2")
    meas = solve_w(params, z, phase_cap + 2)
    tail_over_w, _ = _ratios(meas, phase_cap)
    rates = (params.mu1 - params.mu2 * z) * tail_over_w
    if not (rates > 0).all() or not np.isfinite(rates).all():
        raise ModelError("non-positive designed arrival rate (w materialisation error)")
    log.info("arrival design for z=%.6g: rates beyond phase %d frozen at %.6g", z, phase_cap, rates[-1])
    return BoundaryDesign(z, DesignKind.ARRIVAL, rates, meas, int(phase_cap), notes)


def design_removal_rates(params, z, phase_cap):
    """Extra level-0 removal rates ``nu_1..nu_cap`` forcing decay rate ``z``.

    Requires ``mu1 < mu2`` and ``eta <= z < rho2``. At ``z = rho2`` the
    first rate vanishes; the unmodified network already has that decay
    rate, so the endpoint is rejected here.
    """
    if not params.mu1 < params.mu2:
        raise InfeasibleTarget("removal design needs mu1 < mu2")
    _check_positive_measure(params, z)
    if z >= params.rho2:
        raise InfeasibleTarget(f"removal design needs z < rho2 = {params.rho2:.6g}")
    eta = compute_eta(params)
    if z < eta:
        raise InfeasibleTarget(f"removal design needs z >= eta = {eta:.6g}")
    if phase_cap < 1:
        raise ModelError("phase_cap must be >= 1")
    meas = solve_w(params, z, phase_cap + 2)
    tail_over_w, back = _ratios(meas, phase_cap)
    lt = (params.mu1 - params.mu2 * z) * tail_over_w
    rates = np.zeros(phase_cap + 1)
    rates[1:] = back[1:] * (params.lam - lt[:-1])
    if not (rates[1:] > 0).all() or not np.isfinite(rates).all():
        raise ModelError("non-positive designed removal rate (w materialisation error)")
    log.info("removal design for z=%.6g: rates beyond phase %d frozen at %.6g", z, phase_cap, rates[-1])
    return BoundaryDesign(z, DesignKind.REMOVAL, rates, meas, int(phase_cap), [])


def arrival_rates_recursion(params, z, n, w=None):
    """Literal forward recursion ``lt_i = lt_{i-1} w_{i-1} / w_i + mu2 z - mu1``."""
    w = solve_w(params, z, n + 1).w if w is None else w
    out = np.empty(n + 1)
    out[0] = params.mu2 * z
    for i in range(1, n + 1):
        out[i] = out[i - 1] * w[i - 1] / w[i] + params.mu2 * z - params.mu1
    return out


def removal_rates_recursion(params, z, n, w=None):
    """Literal forward recursion for ``nu_1..nu_n`` (``nu_0 = 0``)."""
    w = solve_w(params, z, n + 1).w if w is None else w
    lam, mu1, mu2 = params.lam, params.mu1, params.mu2
    out = np.zeros(n + 1)
    out[1] = (lam - mu2 * z) * w[0] / w[1]
    for i in range(1, n):
        out[i + 1] = ((out[i] + lam + mu1 - mu2 * z) * w[i] - lam * w[i - 1]) / w[i + 1]
    return out


def build_modified_blocks(params, design, phase_cap=None):
    """Tandem blocks with the design's level-0 rates; only ``q1_boundary`` changes."""
    base = build_blocks(params, phase_cap if phase_cap is not None else design.phase_cap)
    n = base.phase_count
    rates = np.asarray(design.rates, dtype=float)
    if rates.shape[0] < n:
        raise ModelError(f"design has {rates.shape[0]} rates, blocks need {n}")
    qb = base.q1_boundary.copy()
    np.fill_diagonal(qb, 0.0)
    if design.kind is DesignKind.ARRIVAL:
        idx = np.arange(n - 1)
        qb[idx, idx + 1] = rates[: n - 1]
    elif design.kind is DesignKind.REMOVAL:
        idx = np.arange(1, n)
        qb[idx, idx - 1] = rates[1:n]
    else:
        raise ModelError(f"unknown design kind {design.kind!r}")
    # level-0 outflow: in-level moves plus the q0 moves up a level
    np.fill_diagonal(qb, -(qb.sum(axis=1) + base.q0.sum(axis=1)))
    base.q1_boundary = qb
    return base.check()


@dataclass
class ProductFormReport:
    fitted_c: float
    max_rel_deviation: float
    measured_decay: float
    level_window: tuple
    phase_window: tuple
    residual: float


def verify_product_form(blocks, z, w, level_cap, level_window=None, phase_window=None, backend=None):
    """Solve the truncated chain directly and compare ``pi_{kj}`` with ``c z^k w_j``.

    ``c`` is fitted by least squares on ``log pi`` over the bulk window
    (levels ``[L/4, 3L/4]``, phases ``[0, P/4]`` by default). The measured
    decay is the median successive ratio of level marginals on the same
    level window.
    """
    from .oracle import TruncatedChain, estimate_decay, solve_stationary_direct

    chain = TruncatedChain.from_blocks(blocks, level_cap)
    sol = solve_stationary_direct(chain, backend=backend)
    pi = sol.pi
    if level_window is None:
        level_window = (level_cap // 4, (3 * level_cap) // 4)
    if phase_window is None:
        phase_window = (0, chain.phase_cap // 4)
    (k0, k1), (j0, j1) = level_window, phase_window
    w = np.asarray(w, dtype=float)
    if w.shape[0] <= j1:
        raise ModelError("w is shorter than the phase window")
    ks = np.arange(k0, k1 + 1)
    model = (z ** ks)[:, None] * w[None, j0 : j1 + 1]
    block = pi[k0 : k1 + 1, j0 : j1 + 1]
    if (block <= 0).any() or (model <= 0).any():
        raise ModelError("non-positive entries in the bulk window")
    logc = float(np.mean(np.log(block) - np.log(model)))
    dev = float(np.abs(block / (math.exp(logc) * model) - 1.0).max())
    return ProductFormReport(
        fitted_c=math.exp(logc),
        max_rel_deviation=dev,
        measured_decay=estimate_decay(pi, level_window),
        level_window=(k0, k1),
        phase_window=(j0, j1),
        residual=sol.residual,
    )
