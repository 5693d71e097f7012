"""Monte Carlo reference pricer with a vanilla-strip control variate.

Paths are sampled only at the fixing dates whenever the volatility is flat
or a term structure, using the exact lognormal transition between fixings.
A local volatility surface has no closed-form transition, so those models
are stepped with a log-Euler scheme using a configurable number of substeps
per fixing interval.

Randomness comes from the counter-based Philox generator: batch ``b`` of a
run draws from an independent stream obtained by jumping the seeded base
generator ``b`` times, so every path is a pure function of (seed, batch,
row) and results are reproducible bit for bit regardless of how batches
might be dispatched.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .contract import TarnContract, batch_present_value
from .market import (
    MarketModel,
    discount_factor,
    integrated_variance,
    vanilla_price,
)

__all__ = [
    "BATCH_SIZE",
    "McConfig",
    "McResult",
    "standard_error",
    "simulate_fixing_paths",
    "simulate_fixing_path",
    "mc_price",
]

# Fixed batch size; part of the reproducibility contract, never tune per run.
BATCH_SIZE = 16384


@dataclass(frozen=True)
class McConfig:
    """Simulation settings for one pricing run.

    ``cv_coefficient`` pins the control-variate coefficient (1.0 gives the
    plain subtract-the-control estimator); when None the coefficient is
    estimated from a pilot tranche of the first tenth of the paths and the
    price is estimated from the remaining paths only, which keeps the
    estimator unbiased.
    """

    n_paths: int = 200_000
    seed: int = 12345
    substeps_per_interval: int = 1
    control_variate: bool = True
    cv_coefficient: float | None = None

    def validate(self) -> None:
        if self.n_paths < 2:
            raise ValueError("n_paths must be at least 2")
        if self.substeps_per_interval < 1:
            raise ValueError("substeps_per_interval must be at least 1")


@dataclass(frozen=True)
class McResult:
    """Estimate, its standard error and control-variate diagnostics."""

    price: float
    stderr: float
    cv_coefficient: float | None
    wall_time: float
    control_variate_used: bool
    cv_downgraded: bool = False


def standard_error(samples) -> float:
    """Standard error of the mean: population standard deviation over sqrt(n).

    Single-pass streaming accumulation, stable for large and offset samples.
    """
    n = 0
    mean = 0.0
    m2 = 0.0
    for x in np.asarray(samples, dtype=float).ravel():
        n += 1
        delta = x - mean
        mean += delta / n
        m2 += delta * (x - mean)
    if n < 2:
        raise ValueError("standard error needs at least two samples")
    return math.sqrt(m2 / n) / math.sqrt(n)


def simulate_fixing_paths(
    model: MarketModel,
    spot: float,
    fixing_times,
    n_paths: int,
    rng: np.random.Generator,
    substeps_per_interval: int = 1,
) -> np.ndarray:
    """Sample ``n_paths`` joint fixing-date values of the FX rate.

    Exact lognormal transitions when the model admits them; otherwise
    log-Euler with ``substeps_per_interval`` steps per fixing interval,
    the volatility frozen at each substep's start state.
    Returns an array of shape (n_paths, len(fixing_times)).
    """
    fixing_times = tuple(float(t) for t in fixing_times)
    k_total = len(fixing_times)
    out = np.empty((n_paths, k_total))
    log_s = np.full(n_paths, math.log(spot))
    t_prev = 0.0
    exact = model.has_exact_transition
    for k, t in enumerate(fixing_times):
        if exact:
            var = integrated_variance(model.vol, t_prev, t)
            drift = (
                model.domestic.integral(t_prev, t)
                - model.foreign.integral(t_prev, t)
                - 0.5 * var
            )
            log_s = log_s + drift + math.sqrt(var) * rng.standard_normal(n_paths)
        else:
            dt = (t - t_prev) / substeps_per_interval
            for s in range(substeps_per_interval):
                t_s = t_prev + s * dt
                sig = model.vol.interpolate(np.exp(log_s), t_s)
                nu = (
                    model.domestic.rate_at(t_s)
                    - model.foreign.rate_at(t_s)
                    - 0.5 * sig * sig
                )
                log_s = log_s + nu * dt + sig * math.sqrt(dt) * rng.standard_normal(n_paths)
        out[:, k] = log_s
        t_prev = t
    return np.exp(out)


def simulate_fixing_path(
    model: MarketModel,
    spot: float,
    fixing_times,
    rng: np.random.Generator,
    substeps_per_interval: int = 1,
) -> np.ndarray:
    """Single-path convenience wrapper; returns shape (len(fixing_times),)."""
    return simulate_fixing_paths(
        model, spot, fixing_times, 1, rng, substeps_per_interval
    )[0]


def _control_values(paths, contract, discounts):
    """Discounted uncapped vanilla strip along each path (the control)."""
    gross = np.maximum(contract.beta * (paths - contract.strike), 0.0)
    return gross @ discounts


def mc_price(
    contract: TarnContract,
    model: MarketModel,
    config: McConfig,
    spot: float,
) -> McResult:
    """Estimate the note value by simulation.

    The control variate is the sum of the single-fixing vanilla flows, whose
    mean is known in closed form; it is only available under exact
    transitions and is silently downgraded (with a flag on the result) for
    local volatility models.
    """
    started = time.perf_counter()
    config.validate()
    times = contract.fixing_times
    discounts = np.array(
        [discount_factor(model.domestic, 0.0, t) for t in times]
    )
    exact = model.has_exact_transition
    use_cv = config.control_variate and exact
    downgraded = config.control_variate and not exact

    n = config.n_paths
    payoffs = np.empty(n)
    controls = np.empty(n) if use_cv else None
    base = np.random.Philox(config.seed)
    n_batches = (n + BATCH_SIZE - 1) // BATCH_SIZE
    for b in range(n_batches):
        start = b * BATCH_SIZE
        stop = min(start + BATCH_SIZE, n)
        rng = np.random.Generator(base.jumped(b))
        paths = simulate_fixing_paths(
            model, spot, times, stop - start, rng, config.substeps_per_interval
        )
        payoffs[start:stop] = batch_present_value(paths, contract, discounts)
        if use_cv:
            controls[start:stop] = _control_values(paths, contract, discounts)

    if use_cv:
        control_mean = sum(
            vanilla_price(spot, contract.strike, contract.beta, t,
                          model.domestic, model.foreign, model.vol)
            for t in times
        )
        if config.cv_coefficient is not None:
            lam = float(config.cv_coefficient)
            samples = payoffs - lam * (controls - control_mean)
        else:
            n_pilot = max(2, n // 10)
            pilot_p = payoffs[:n_pilot]
            pilot_c = controls[:n_pilot]
            var_c = float(np.var(pilot_c))
            if var_c > 0.0:
                lam = float(np.cov(pilot_p, pilot_c)[0, 1]) / var_c
            else:
                lam = 0.0
            samples = payoffs[n_pilot:] - lam * (controls[n_pilot:] - control_mean)
    else:
        lam = None
        samples = payoffs

    return McResult(
        price=float(samples.mean()),
        stderr=standard_error(samples),
        cv_coefficient=lam if use_cv else None,
        wall_time=time.perf_counter() - started,
        control_variate_used=use_cv,
        cv_downgraded=downgraded,
    )
