"""Spectral objects of the two-station tandem Jackson network viewed as a QBD process."""

from ._accel import BACKEND
from .model import (
    Capacity,
    InstabilityError,
    ModelError,
    QbdBlocks,
    Regime,
    SpectralReport,
    TandemParams,
    build_blocks,
    chi,
    chi1,
    compute_eta,
    compute_z1,
    sigma,
    spectral_report,
    stability_check,
    tau,
)
from .qbd import ConvergenceError, eigen_spectrum, solve_R, stationary
from .orthopoly import Kind, PolyFamily, compute_zhat, eval_poly, zeros, zhat_limit_study
from .invariant import InvariantMeasure, WRegime, classify, solve_w, w_recursion_oracle
from .control import (
    DesignKind,
    InfeasibleTarget,
    build_modified_blocks,
    design_arrival_rates,
    design_removal_rates,
    verify_product_form,
)
from .hitting import exit_probabilities, h_sequence, hitting_decay_estimate, solve_H
from .oracle import TruncatedChain, estimate_decay, simulate_hitting, solve_stationary_direct

__version__ = "0.1.0"
