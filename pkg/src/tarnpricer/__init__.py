"""Pricing of FX target accumulation redemption notes.

A lattice engine tracks one PDE solution per accrued-amount node and
applies spline-interpolated jump conditions at the fixing dates; a Monte
Carlo engine with a vanilla-strip control variate serves as the reference.
"""

from .contract import (
    CashFlowOutcome,
    KnockoutType,
    TarnContract,
    batch_present_value,
    fixing_outcome,
    path_present_value,
    raw_cash_flow,
)
from .fd import (
    BoundaryKind,
    ConvergenceStudy,
    ErrorEstimate,
    FdConfig,
    FdGrid,
    FdState,
    PinPolicy,
    PriceResult,
    apply_jump,
    apply_jump_backward,
    build_grid,
    convergence_order,
    estimate_error,
    fd_price,
    natural_cubic_spline,
    theta_step,
    tridiagonal_solve,
)
from .market import (
    ConstantVol,
    ExactTransitionUnavailable,
    LocalVolSurface,
    MarketModel,
    RateCurve,
    TermStructureVol,
    discount_factor,
    integrated_variance,
    local_vol_at,
    vanilla_price,
)
from .mc import (
    McConfig,
    McResult,
    mc_price,
    simulate_fixing_path,
    simulate_fixing_paths,
    standard_error,
)

__version__ = "0.1.0"
