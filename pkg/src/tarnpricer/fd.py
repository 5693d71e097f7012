"""Finite difference engine for the accumulating knockout note.

The solver tracks one one-dimensional PDE solution per node of an auxiliary
grid in the accrued payment amount.  Between fixing dates each tracked
solution obeys the usual log-spot pricing PDE and is marched backward with
a theta scheme.  At a fixing date the tracked solutions exchange
information through a jump condition: for every spot node, the post-fixing
values across the accumulation grid are interpolated with a natural cubic
spline at the amount the fixing shifts the state to, giving the
continuation value, and the fixing's cash flow is added on top.  After the
first fixing only the zero-accrual solution remains relevant and is marched
down to the valuation date.

The direction of the jump matters.  The shift must be applied forward, from
the pre-fixing amount at a grid node to the (generally off-grid) post-fixing
amount: the shifted amount can then exceed the target, which is precisely
how the knockout enters the lattice.  Applying the shift the other way
round, intuitive as it looks for backward marching, keeps every amount at
or below the target and can also push amounts negative; it cannot price any
knockout variant correctly.  That direction is retained here only as a
diagnostic (``jump_direction="backward"``) so the failure can be asserted
in tests.
"""

from __future__ import annotations

import enum
import math
import os
import time
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg
from scipy.interpolate import CubicSpline

from .contract import KnockoutType, TarnContract
from .market import LocalVolSurface, MarketModel

__all__ = [
    "PinPolicy",
    "BoundaryKind",
    "FdConfig",
    "FdGrid",
    "FdState",
    "PriceResult",
    "ErrorEstimate",
    "ConvergenceStudy",
    "StepCoefficients",
    "ZeroPivotError",
    "tridiagonal_solve",
    "natural_cubic_spline",
    "build_grid",
    "coefficients_at",
    "theta_step",
    "apply_jump",
    "apply_jump_backward",
    "fd_price",
    "estimate_error",
    "convergence_order",
]


class PinPolicy(enum.Enum):
    """Which critical prices are forced onto spot-grid nodes."""

    STRIKE_AND_SPOT = "strike_and_spot"
    STRIKE_ONLY_THEN_INTERPOLATE = "strike_only_then_interpolate"


class BoundaryKind(enum.Enum):
    """Boundary closure of the spatial operator.

    ZERO_GAMMA imposes a vanishing second difference of the solution at both
    ends, which is contract independent as long as the payoff is at most
    linear in the underlying far out.  DIRICHLET_NEUMANN_BY_DIRECTION uses
    the classic call conditions (zero value below, unit slope in the spot
    above) for ``beta = +1`` and the mirrored put conditions for
    ``beta = -1``.
    """

    ZERO_GAMMA = "zero_gamma"
    DIRICHLET_NEUMANN_BY_DIRECTION = "dirichlet_neumann_by_direction"


@dataclass(frozen=True)
class FdConfig:
    """Resolution and scheme settings for one pricing run."""

    spot_nodes: int = 500
    accumulation_nodes: int = 100
    time_steps: int = 500
    theta: float = 0.5
    domain_width_sigmas: float = 3.5
    pin_policy: PinPolicy = PinPolicy.STRIKE_AND_SPOT
    boundary: BoundaryKind = BoundaryKind.ZERO_GAMMA
    implicit_startup_steps: int = 0

    def validate(self) -> None:
        if self.spot_nodes < 3:
            raise ValueError("spot_nodes must be at least 3")
        if self.accumulation_nodes < 4:
            raise ValueError("accumulation_nodes must be at least 4")
        if self.time_steps < 1:
            raise ValueError("time_steps must be at least 1")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")
        if not self.domain_width_sigmas > 0.0:
            raise ValueError("domain_width_sigmas must be positive")
        if self.implicit_startup_steps < 0:
            raise ValueError("implicit_startup_steps must be nonnegative")


@dataclass(frozen=True, eq=False)
class FdGrid:
    """Realized grids for one pricing run.

    ``spot_index`` is the node of the initial spot, or None when the spot is
    off-grid and the price is read by a one-off spline interpolation in the
    log-spot.  The strike is always a node.
    """

    log_spots: np.ndarray
    spots: np.ndarray
    dx: float
    strike_index: int
    spot_index: int | None
    accum_nodes: np.ndarray
    h: float
    steps_per_interval: tuple[int, ...]
    fixing_times: tuple[float, ...]

    def __post_init__(self) -> None:
        self.log_spots.setflags(write=False)
        self.spots.setflags(write=False)
        self.accum_nodes.setflags(write=False)


@dataclass
class FdState:
    """Tracked solution values, one row per accumulation node, at one time."""

    values: np.ndarray
    time: float


@dataclass(frozen=True)
class PriceResult:
    """Price per unit notional plus run diagnostics."""

    price: float
    wall_time: float
    grid_shape: tuple[int, int, int]


@dataclass(frozen=True)
class ErrorEstimate:
    """Relative error proxy from doubling every grid dimension."""

    relative_error: float
    coarse: PriceResult
    refined: PriceResult


@dataclass(frozen=True)
class ConvergenceStudy:
    """Observed order from three nested grids (1x, 2x, 4x)."""

    order: float
    results: tuple[PriceResult, PriceResult, PriceResult]


class ZeroPivotError(ValueError):
    """A linear solve hit a zero pivot; the message names the row."""


def tridiagonal_solve(lower, diag, upper, rhs):
    """Solve a tridiagonal system in O(n).

    All band arguments have length n; ``lower[i]`` multiplies ``x[i-1]`` in
    row i (``lower[0]`` unused) and ``upper[i]`` multiplies ``x[i+1]``
    (``upper[-1]`` unused).  ``rhs`` may be (n,) or (n, k) for several
    right-hand sides sharing the matrix.  Backed by the LAPACK banded
    solver; a singular system raises :class:`ZeroPivotError` naming the row.
    """
    lower = np.asarray(lower, dtype=float)
    diag = np.asarray(diag, dtype=float)
    upper = np.asarray(upper, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    n = diag.size
    if lower.size != n or upper.size != n:
        raise ValueError("lower, diag and upper must have equal length")
    ab = np.zeros((3, n))
    ab[0, 1:] = upper[:-1]
    ab[1, :] = diag
    ab[2, :-1] = lower[1:]
    try:
        return scipy.linalg.solve_banded((1, 1), ab, rhs)
    except np.linalg.LinAlgError:
        raise ZeroPivotError(
            f"zero pivot at row {_locate_zero_pivot(lower, diag, upper)} "
            "of the tridiagonal system"
        ) from None


def _locate_zero_pivot(lower, diag, upper) -> int:
    """First row where unpivoted elimination breaks down (error path only)."""
    pivot = diag[0]
    if pivot == 0.0:
        return 0
    for i in range(1, diag.size):
        pivot = diag[i] - lower[i] * upper[i - 1] / pivot
        if pivot == 0.0:
            return i
    return diag.size - 1


def _spline_second_derivs(values: np.ndarray, h: float) -> np.ndarray:
    """Second derivatives of natural cubic splines, one per column.

    ``values`` has shape (J, M): each column holds the data of one spline on
    a uniform grid of spacing ``h``.  Natural end conditions set the second
    derivative to zero at both ends; one tridiagonal solve covers all
    columns.
    """
    j_nodes = values.shape[0]
    rhs = np.zeros_like(values)
    rhs[1:-1] = 6.0 * (values[2:] - 2.0 * values[1:-1] + values[:-2]) / (h * h)
    lower = np.ones(j_nodes)
    upper = np.ones(j_nodes)
    diag = np.full(j_nodes, 4.0)
    diag[0] = diag[-1] = 1.0
    upper[0] = 0.0
    lower[-1] = 0.0
    return tridiagonal_solve(lower, diag, upper, rhs)


def _spline_eval(values, second_derivs, x0, h, queries):
    """Evaluate per-column splines at per-column query points.

    ``queries`` has shape (Q, M) matching the columns of ``values`` (J, M);
    entry (q, m) is evaluated on column m's spline.  Callers guarantee the
    queries lie inside the node range.
    """
    j_nodes = values.shape[0]
    u = (queries - x0) / h
    seg = np.clip(np.floor(u).astype(np.int64), 0, j_nodes - 2)
    t = u - seg
    s = 1.0 - t
    y_lo = np.take_along_axis(values, seg, axis=0)
    y_hi = np.take_along_axis(values, seg + 1, axis=0)
    m_lo = np.take_along_axis(second_derivs, seg, axis=0)
    m_hi = np.take_along_axis(second_derivs, seg + 1, axis=0)
    cubic = (s ** 3 - s) * m_lo + (t ** 3 - t) * m_hi
    return s * y_lo + t * y_hi + (h * h / 6.0) * cubic


def natural_cubic_spline(nodes, values, queries):
    """Natural cubic spline through uniformly spaced nodes.

    Zero second derivative is imposed at both ends; the coefficients come
    from a single tridiagonal solve.  Interior accuracy is fourth order in
    the spacing for smooth data.  Queries outside the node range are a hard
    error, because every caller must decide on knockout/continuation
    semantics before asking for a value.
    """
    nodes = np.asarray(nodes, dtype=float)
    values = np.asarray(values, dtype=float)
    if nodes.ndim != 1 or nodes.size < 3:
        raise ValueError("need at least three spline nodes")
    if values.shape != nodes.shape:
        raise ValueError("values must match nodes in shape")
    gaps = np.diff(nodes)
    h = gaps[0]
    if h <= 0.0 or not np.allclose(gaps, h, rtol=1e-9, atol=0.0):
        raise ValueError("spline nodes must be uniformly spaced and increasing")
    q = np.asarray(queries, dtype=float)
    pad = 1e-12 * (nodes[-1] - nodes[0])
    if np.any(q < nodes[0] - pad) or np.any(q > nodes[-1] + pad):
        raise ValueError("spline query outside the node range")
    q_col = np.clip(q, nodes[0], nodes[-1]).reshape(-1, 1)
    col = values.reshape(-1, 1)
    m2 = _spline_second_derivs(col, h)
    out = _spline_eval(col, m2, nodes[0], h, q_col)
    return out.reshape(q.shape)


def _allocate_steps(total: int, durations) -> tuple[int, ...]:
    """Split ``total`` time steps across intervals, proportional to length.

    Every interval gets at least one step; leftovers go to the largest
    fractional entitlements.
    """
    k = len(durations)
    if total < k:
        raise ValueError(f"need at least {k} time steps, one per fixing interval")
    horizon = sum(durations)
    raw = [total * d / horizon for d in durations]
    counts = [max(1, int(math.floor(r))) for r in raw]
    while sum(counts) > total:
        i = max(range(k), key=lambda j: counts[j])
        counts[i] -= 1
    spare = total - sum(counts)
    by_fraction = sorted(range(k), key=lambda j: raw[j] - math.floor(raw[j]), reverse=True)
    for i in by_fraction[:spare]:
        counts[i] += 1
    return tuple(counts)


def _build_log_grid(ln_spot, ln_strike, half_width, m_nodes, policy):
    """Uniform log-spot nodes with the strike (and maybe the spot) pinned.

    Returns (nodes, spacing, strike index, spot index or None).  The domain
    starts as [ln_spot - half_width, ln_spot + half_width], is extended to
    contain the strike, and is then widened as little as the node budget
    allows so the pinned points land exactly on nodes.
    """
    lo = min(ln_spot - half_width, ln_strike)
    hi = max(ln_spot + half_width, ln_strike)
    gap = abs(ln_spot - ln_strike)
    if policy is PinPolicy.STRIKE_AND_SPOT and gap > 0.0:
        # Most cells between the two pins that still lets m_nodes cover
        # [lo, hi]; more cells means finer spacing, hence least widening.
        q_start = min(m_nodes - 1, int(math.floor((m_nodes - 1) * gap / (hi - lo))) + 1)
        for q in range(max(q_start, 1), 0, -1):
            dx = gap / q
            n_lo = max(int(math.ceil((ln_strike - lo) / dx - 1e-9)), 0)
            n_hi = max(int(math.ceil((hi - ln_strike) / dx - 1e-9)), 0)
            if n_lo + n_hi <= m_nodes - 1:
                spare = (m_nodes - 1) - (n_lo + n_hi)
                n_lo += spare // 2
                x = ln_strike + dx * (np.arange(m_nodes) - n_lo)
                offset = q if ln_spot > ln_strike else -q
                return x, dx, n_lo, n_lo + offset
        # Spot and strike too close for this node budget: pin the strike
        # only and interpolate the price at the spot afterwards.
    span = hi - lo
    frac = (ln_strike - lo) / span
    min_lo = 1 if ln_strike > lo else 0
    min_hi = 1 if hi > ln_strike else 0
    n_lo = min(max(int(round(frac * (m_nodes - 1))), min_lo), m_nodes - 1 - min_hi)
    n_hi = m_nodes - 1 - n_lo
    dx_lo = (ln_strike - lo) / n_lo if n_lo > 0 else 0.0
    dx_hi = (hi - ln_strike) / n_hi if n_hi > 0 else 0.0
    dx = max(dx_lo, dx_hi)
    x = ln_strike + dx * (np.arange(m_nodes) - n_lo)
    spot_index = n_lo if ln_spot == ln_strike else None
    return x, dx, n_lo, spot_index


def build_grid(
    contract: TarnContract,
    model: MarketModel,
    config: FdConfig,
    spot: float,
) -> FdGrid:
    """Construct the log-spot grid, accumulation grid and step allocation.

    The log-spot domain spans ``domain_width_sigmas`` representative
    standard deviations either side of the spot (representative volatility:
    the largest level the specification can reach over the note's life).
    The accumulation grid runs uniformly from zero to the target.
    """
    if spot <= 0.0:
        raise ValueError("spot must be positive")
    config.validate()
    horizon = contract.maturity
    sigma_bar = model.vol.max_sigma(horizon)
    half_width = config.domain_width_sigmas * sigma_bar * math.sqrt(horizon)
    x, dx, strike_index, spot_index = _build_log_grid(
        math.log(spot), math.log(contract.strike), half_width,
        config.spot_nodes, config.pin_policy,
    )
    spots = np.exp(x)
    spots[strike_index] = contract.strike  # remove round-trip noise at the pins
    if spot_index is not None:
        spots[spot_index] = spot
    accum = np.linspace(0.0, contract.target, config.accumulation_nodes)
    h = contract.target / (config.accumulation_nodes - 1)
    times = (0.0,) + contract.fixing_times
    durations = [b - a for a, b in zip(times, times[1:])]
    steps = _allocate_steps(config.time_steps, durations)
    return FdGrid(
        log_spots=x,
        spots=spots,
        dx=dx,
        strike_index=strike_index,
        spot_index=spot_index,
        accum_nodes=accum,
        h=h,
        steps_per_interval=steps,
        fixing_times=contract.fixing_times,
    )


@dataclass(frozen=True)
class StepCoefficients:
    """PDE coefficients sampled at one time level.

    ``variance`` is sigma^2 and ``drift`` is r_d - r_f - sigma^2/2, either
    scalars or per-node arrays (local volatility); ``rate`` is r_d.
    """

    variance: float | np.ndarray
    drift: float | np.ndarray
    rate: float


def coefficients_at(model: MarketModel, spots: np.ndarray, t: float) -> StepCoefficients:
    """Coefficients of the log-spot PDE at time ``t`` on the given nodes."""
    if isinstance(model.vol, LocalVolSurface):
        sig = model.vol.interpolate(spots, t)
    else:
        sig = model.vol.sigma_at(t)
    variance = sig * sig
    r_d = model.domestic.rate_at(t)
    r_f = model.foreign.rate_at(t)
    return StepCoefficients(variance=variance, drift=r_d - r_f - 0.5 * variance, rate=r_d)


def _operator_bands(coef: StepCoefficients, dx: float, m: int):
    """Tridiagonal representation of the spatial operator on the interior."""
    v = np.broadcast_to(np.asarray(coef.variance, dtype=float), (m,))
    d = np.broadcast_to(np.asarray(coef.drift, dtype=float), (m,))
    half = 0.5 * v / (dx * dx)
    adv = d / (2.0 * dx)
    lower = half - adv
    diag = -2.0 * half - coef.rate
    upper = half + adv
    return lower, diag, upper


def theta_step(
    rows,
    dt: float,
    dx: float,
    theta: float,
    coef_from: StepCoefficients,
    coef_to: StepCoefficients,
    boundary: BoundaryKind = BoundaryKind.ZERO_GAMMA,
    spots: np.ndarray | None = None,
    beta: int = 1,
):
    """One backward time step of the theta scheme on the log-spot PDE.

    ``rows`` is (M,) or (J, M); every row is stepped independently with the
    same matrix.  ``coef_from`` holds the coefficients at the level being
    left (explicit side, weight 1 - theta) and ``coef_to`` those at the
    level being solved for (implicit side, weight theta).  Boundary rows of
    the solve impose the selected closure exactly at the new level; the
    Dirichlet/Neumann variant needs ``spots`` for the slope condition.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    rows = np.asarray(rows, dtype=float)
    single = rows.ndim == 1
    work = rows[None, :] if single else rows
    m = work.shape[1]

    lo_f, di_f, up_f = _operator_bands(coef_from, dx, m)
    w = (1.0 - theta) * dt
    rhs = work.copy()
    rhs[:, 1:-1] += w * (
        lo_f[1:-1] * work[:, :-2]
        + di_f[1:-1] * work[:, 1:-1]
        + up_f[1:-1] * work[:, 2:]
    )

    lo_t, di_t, up_t = _operator_bands(coef_to, dx, m)
    ab = np.zeros((5, m))
    ab[1, 2:] = -theta * dt * up_t[1:-1]
    ab[2, 1:-1] = 1.0 - theta * dt * di_t[1:-1]
    ab[3, : m - 2] = -theta * dt * lo_t[1:-1]

    if boundary is BoundaryKind.ZERO_GAMMA:
        ab[2, 0] = 1.0
        ab[1, 1] = -2.0
        ab[0, 2] = 1.0
        ab[2, m - 1] = 1.0
        ab[3, m - 2] = -2.0
        ab[4, m - 3] = 1.0
        rhs[:, 0] = 0.0
        rhs[:, -1] = 0.0
    else:
        if spots is None:
            raise ValueError("directional boundary conditions need the spot nodes")
        if beta == 1:
            ab[2, 0] = 1.0
            rhs[:, 0] = 0.0
            ab[2, m - 1] = 1.0
            ab[3, m - 2] = -1.0
            rhs[:, -1] = dx * spots[-1]
        else:
            ab[2, 0] = -1.0
            ab[1, 1] = 1.0
            rhs[:, 0] = -dx * spots[0]
            ab[2, m - 1] = 1.0
            rhs[:, -1] = 0.0

    try:
        out = scipy.linalg.solve_banded((2, 2), ab, rhs.T).T
    except np.linalg.LinAlgError as exc:  # cannot occur for theta in [0,1], sigma > 0
        raise ZeroPivotError(f"singular step system: {exc}") from None
    return out[0] if single else out


def _jump_cash_flows(spots, accum, fixing_index, contract):
    """Vectorized fixing cash flows on the (accumulation x spot) lattice.

    Returns (payment, extra, dead) broadcastable to (J, M).  Element (j, m)
    is the outcome of the fixing seen from accrued amount ``accum[j]`` at
    spot ``spots[m]``; the top accumulation node sits exactly at the target
    and is treated as the limit of a live state from below, where a breach
    fires only for a strictly positive gross amount.
    """
    target = contract.target
    gross = np.maximum(contract.beta * (spots - contract.strike), 0.0)[None, :]
    level = accum[:, None]
    breach = (level + gross >= target) & (gross > 0.0)
    extra_flat = contract.extra_payment_at(fixing_index)
    kind = contract.knockout
    if kind is KnockoutType.FULL_GAIN:
        payment = np.broadcast_to(gross, breach.shape)
        extra = np.broadcast_to(np.float64(extra_flat), breach.shape)
        dead = breach
    elif kind is KnockoutType.NO_GAIN:
        payment = np.where(breach, 0.0, gross)
        extra = np.where(breach, 0.0, extra_flat)
        dead = breach
    else:  # PART_GAIN
        shortfall = target - level
        payment = np.where(breach, shortfall, gross)
        safe_gross = np.where(gross > 0.0, gross, 1.0)
        extra = np.where(breach, (shortfall / safe_gross) * extra_flat, extra_flat)
        dead = breach
    return payment, extra, dead


def apply_jump(state: FdState, fixing_index: int, contract: TarnContract,
               grid: FdGrid) -> FdState:
    """Fixing-date update of all tracked solutions (the forward shift).

    For each spot node, one natural cubic spline is built over the tracked
    values across the accumulation grid and read at the shifted amounts
    ``A + payment``.  A fixing that kills the note has zero continuation;
    otherwise the shifted amount of a live state never exceeds the target,
    so the spline is only ever read inside its node range.  The new value is
    continuation plus the fixing's payment and extra payment.  The last
    fixing runs through the same code on an all-zero lattice, which is
    exactly the worthless-after-expiry final condition.
    """
    values = state.values
    payment, extra, dead = _jump_cash_flows(
        grid.spots, grid.accum_nodes, fixing_index, contract
    )
    shifted = grid.accum_nodes[:, None] + payment
    second = _spline_second_derivs(values, grid.h)
    queries = np.minimum(shifted, contract.target)
    continuation = _spline_eval(values, second, 0.0, grid.h, queries)
    continuation = np.where(dead, 0.0, continuation)
    return FdState(values=continuation + payment + extra, time=state.time)


def apply_jump_backward(state: FdState, fixing_index: int, contract: TarnContract,
                        grid: FdGrid) -> FdState:
    """Fixing-date update with the shift applied backward.  Known wrong.

    The backward relation moves a grid amount down by the payment, and the
    payment itself depends on the (unknown) shifted amount.  Solving that
    relation self-consistently, the shifted amount plus the gross flow
    lands back on the grid amount, which is at most the target, so the
    breach indicator can never fire: the knockout is unreachable from this
    direction and every fixing pays its gross amount in full.  The shifted
    amounts can also go negative, and reading the node values back requires
    extrapolating above them.  All of this is this direction's documented
    failure; the routine is kept solely so tests can demonstrate it and is
    never used for pricing.
    """
    values = state.values
    gross = np.maximum(
        contract.beta * (grid.spots - contract.strike), 0.0
    )[None, :]
    extra = contract.extra_payment_at(fixing_index)
    shifted = grid.accum_nodes[:, None] - gross
    jumped = values + gross + extra
    out = np.empty_like(values)
    for m in range(values.shape[1]):
        interp = CubicSpline(shifted[:, m], jumped[:, m], bc_type="natural",
                             extrapolate=True)
        out[:, m] = interp(grid.accum_nodes)
    return FdState(values=out, time=state.time)


def fd_price(
    contract: TarnContract,
    model: MarketModel,
    config: FdConfig,
    spot: float,
    jump_direction: str = "forward",
    dump_dir: str | None = None,
) -> PriceResult:
    """Price the note by backward induction on the tracked lattice.

    Starts from a zero lattice at the last fixing, alternates fixing-date
    jumps with theta-scheme marching over each interval, and after the first
    fixing marches only the zero-accrual solution down to the valuation
    date.  The price is the value at the spot node, or a one-off spline
    interpolation in the log-spot when the spot is off-grid.  Optional
    ``dump_dir`` writes the post-jump lattice at each fixing date as a plain
    text matrix for debugging.
    """
    started = time.perf_counter()
    if jump_direction == "forward":
        jump = apply_jump
    elif jump_direction == "backward":
        jump = apply_jump_backward
    else:
        raise ValueError("jump_direction must be 'forward' or 'backward'")
    grid = build_grid(contract, model, config, spot)
    k_total = contract.num_fixings
    times = (0.0,) + contract.fixing_times
    state = FdState(
        values=np.zeros((config.accumulation_nodes, config.spot_nodes)),
        time=contract.maturity,
    )
    if dump_dir is not None:
        os.makedirs(dump_dir, exist_ok=True)
    for k in range(k_total, 0, -1):
        state = jump(state, k, contract, grid)
        if dump_dir is not None:
            np.savetxt(os.path.join(dump_dir, f"lattice_fixing_{k:03d}.txt"),
                       state.values)
        values = state.values if k > 1 else state.values[:1]
        t_hi, t_lo = times[k], times[k - 1]
        n_steps = grid.steps_per_interval[k - 1]
        dt = (t_hi - t_lo) / n_steps
        for s in range(n_steps):
            t_from = t_hi - s * dt
            t_to = t_lo if s == n_steps - 1 else t_hi - (s + 1) * dt
            th = 1.0 if s < config.implicit_startup_steps else config.theta
            values = theta_step(
                values, t_from - t_to, grid.dx, th,
                coefficients_at(model, grid.spots, t_from),
                coefficients_at(model, grid.spots, t_to),
                config.boundary, spots=grid.spots, beta=contract.beta,
            )
        state = FdState(values=values, time=t_lo)
    row = state.values[0]
    if grid.spot_index is not None:
        price = float(row[grid.spot_index])
    else:
        price = float(natural_cubic_spline(grid.log_spots, row, math.log(spot)))
    return PriceResult(
        price=price,
        wall_time=time.perf_counter() - started,
        grid_shape=(config.spot_nodes, config.accumulation_nodes, config.time_steps),
    )


def estimate_error(
    contract: TarnContract,
    model: MarketModel,
    config: FdConfig,
    spot: float,
    pricer=fd_price,
) -> ErrorEstimate:
    """Relative error proxy: rerun with every dimension doubled.

    With a second-order scheme the doubled grid's own error is a small
    fraction of the coarse grid's, so the relative gap between the two
    prices closely tracks the coarse grid's true relative error.
    """
    coarse = pricer(contract, model, config, spot)
    refined_config = replace(
        config,
        spot_nodes=2 * config.spot_nodes,
        accumulation_nodes=2 * config.accumulation_nodes,
        time_steps=2 * config.time_steps,
    )
    refined = pricer(contract, model, refined_config, spot)
    if refined.price == 0.0:
        raise ValueError("relative error undefined: refined price is zero")
    rel = abs(coarse.price - refined.price) / abs(refined.price)
    return ErrorEstimate(relative_error=rel, coarse=coarse, refined=refined)


def convergence_order(
    contract: TarnContract,
    model: MarketModel,
    config: FdConfig,
    spot: float,
    pricer=fd_price,
) -> ConvergenceStudy:
    """Observed order from three grids nested by simultaneous doubling."""
    results = []
    for factor in (1, 2, 4):
        cfg = replace(
            config,
            spot_nodes=factor * config.spot_nodes,
            accumulation_nodes=factor * config.accumulation_nodes,
            time_steps=factor * config.time_steps,
        )
        results.append(pricer(contract, model, cfg, spot))
    v1, v2, v3 = (r.price for r in results)
    denom = abs(v2 - v3)
    if denom == 0.0:
        raise ValueError("converged below measurable difference")
    return ConvergenceStudy(
        order=math.log2(abs(v1 - v2) / denom),
        results=tuple(results),
    )
