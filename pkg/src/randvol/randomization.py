"""Discretized randomized pricing surfaces: the mixture step.

A randomized slice mixes Black-Scholes prices across quadrature nodes,
either by moving one parameter of the base parametrization (parameter
randomization) or by moving the spot itself while the base volatility
stays pinned at the true spot (spot randomization).
"""
from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ExpansionRangeError, ParameterDomainError
from .parametrizations import (
    BaseParams,
    SliceParams,
    eval_vol,
    eval_vol_curve,
)
from .pricing import (
    MarketContext,
    OptionKey,
    OptionType,
    bs_call_values,
    implied_vol_brent,
    log_moneyness,
)
from .quadrature import DiscreteGiven, QuadratureRule, quadrature_for

logger = logging.getLogger("randvol")

#: Log-moneyness radius beyond which the expansion engine hands over to
#: the root finder; Taylor polynomials around m = 0 degrade in the wings.
DEFAULT_M_MAX = 0.5

_SPOT_CENTER_RTOL = 1e-8
_MIN_DENSITY_GRID = 50


def parse_engine(engine: str) -> tuple[str, Optional[int]]:
    """Parse an engine string: 'brent' or 'expansion:N'."""
    text = engine.strip().lower()
    if text == "brent":
        return "brent", None
    if text.startswith("expansion"):
        _, _, tail = text.partition(":")
        return "expansion", int(tail) if tail else None
    raise ValueError(f"unknown engine {engine!r}; expected 'brent' or 'expansion:N'")


@dataclass(frozen=True)
class RandomizedSlice:
    """A slice with its quadrature rule resolved and invariants checked."""

    params: SliceParams
    rule: QuadratureRule
    ctx: MarketContext

    @property
    def target(self) -> str:
        return self.params.randomizer.target

    @property
    def expansion_kind(self) -> str:
        return "spot" if self.target == "spot" else "parameter"

    def call_price(self, expiry: float, strike: float) -> float:
        return randomized_price(self, OptionKey(expiry, strike, OptionType.CALL))

    def implied_vol(self, expiry: float, strike: float, engine: str = "brent") -> float:
        return randomized_iv(self, OptionKey(expiry, strike), engine=engine)


@dataclass(frozen=True)
class DeterministicSlice:
    """Plain (non-randomized) base parametrization behind the same interface."""

    base: BaseParams
    ctx: MarketContext

    def call_price(self, expiry: float, strike: float) -> float:
        key = OptionKey(expiry, strike, OptionType.CALL)
        from .pricing import bs_price

        return bs_price(self.ctx, key, eval_vol(self.base, self.ctx, key))

    def implied_vol(self, expiry: float, strike: float, engine: str = "brent") -> float:
        return eval_vol(self.base, self.ctx, OptionKey(expiry, strike))


def randomize(
    params: SliceParams, ctx: MarketContext, recenter_spot: bool = False
) -> RandomizedSlice:
    """Build the quadrature rule for a slice and validate the mixing invariants.

    Spot randomization requires the rule mean to sit on the market spot;
    an off-center explicit discrete rule is rejected unless
    ``recenter_spot`` asks for its nodes to be rescaled onto the spot.
    """
    rnd = params.randomizer
    if rnd is None:
        raise ValueError("slice has no randomizer; use DeterministicSlice instead")
    rule = quadrature_for(rnd.dist, rnd.n_q)
    if rnd.target == "spot":
        mean = rule.mean()
        if abs(mean - ctx.s0) > _SPOT_CENTER_RTOL * ctx.s0:
            if recenter_spot and isinstance(rnd.dist, DiscreteGiven):
                rule = rule.scaled(ctx.s0 / mean)
            else:
                raise ParameterDomainError(
                    f"spot randomizer mean {mean!r} is not centered at the spot {ctx.s0!r}"
                )
        if np.any(rule.nodes <= 0):
            raise ParameterDomainError("spot nodes must be strictly positive")
    elif np.any(rule.nodes < 0):
        raise ParameterDomainError(f"{rnd.target} nodes must be nonnegative")
    return RandomizedSlice(params, rule, ctx)


def _node_vol_matrix(rs: RandomizedSlice, expiry: float, strikes: np.ndarray) -> np.ndarray:
    """Node volatilities on a strike grid, shape (n_strikes, n_q)."""
    rnd = rs.params.randomizer
    nodes = rs.rule.nodes
    if rnd.target == "sigma":
        return np.broadcast_to(nodes, (strikes.size, nodes.size))
    if rnd.target == "gamma":
        base = rs.params.base
        from .parametrizations import hagan_vol

        tau = expiry - rs.ctx.t0
        fwd = rs.ctx.forward(expiry)
        cols = [
            np.atleast_1d(hagan_vol(fwd, strikes, tau, base.alpha, base.beta, base.rho, g))
            for g in nodes
        ]
        return np.column_stack(cols)
    eta = eval_vol_curve(rs.params.base, rs.ctx, expiry, strikes)
    return np.broadcast_to(eta[:, None], (strikes.size, nodes.size))


def randomized_prices(rs: RandomizedSlice, expiry: float, strikes) -> np.ndarray:
    """Mixture call prices on a strike grid (vectorized)."""
    strikes = np.atleast_1d(np.asarray(strikes, dtype=float))
    tau = expiry - rs.ctx.t0
    if tau <= 0:
        raise ValueError(f"expiry {expiry} must exceed the reference time {rs.ctx.t0}")
    vols = _node_vol_matrix(rs, expiry, strikes)
    if rs.target == "spot":
        values = bs_call_values(rs.rule.nodes, rs.ctx.r, tau, strikes[:, None], vols)
    else:
        values = bs_call_values(rs.ctx.s0, rs.ctx.r, tau, strikes[:, None], vols)
    return values @ rs.rule.weights


def randomized_price(rs: RandomizedSlice, key: OptionKey) -> float:
    """Mixture price of a single option; puts via put-call parity.

    Parity commutes with the mixture: for parameter randomization the
    spot is common to all nodes, and for spot randomization the node
    mean is pinned at the spot.
    """
    call = float(randomized_prices(rs, key.expiry, key.strike)[0])
    if key.kind is OptionType.CALL:
        return call
    tau = key.expiry - rs.ctx.t0
    return call - (rs.ctx.s0 - key.strike * math.exp(-rs.ctx.r * tau))


def randomized_iv(
    rs: RandomizedSlice,
    key: OptionKey,
    engine: str = "brent",
    m_max: float = DEFAULT_M_MAX,
    warm_start: Optional[float] = None,
) -> float:
    """Implied volatility of the randomized price at one (T, K)."""
    method, order = parse_engine(engine)
    call_key = OptionKey(key.expiry, key.strike, OptionType.CALL)
    if method == "brent":
        price = randomized_price(rs, call_key)
        return implied_vol_brent(rs.ctx, call_key, price, warm_start=warm_start)

    from .expansion import eval_expansion, expand_parameter, expand_spot

    m = log_moneyness(rs.ctx, call_key)
    if abs(m) <= m_max:
        if rs.expansion_kind == "parameter":
            terms = expand_parameter(rs, call_key, order=6 if order is None else order)
        else:
            terms = expand_spot(rs, call_key, order=4 if order is None else order)
        try:
            return eval_expansion(terms, m)
        except ExpansionRangeError:
            pass
    logger.warning(
        "expansion guard tripped at (T=%s, K=%s, m=%.4f); falling back to Brent",
        key.expiry,
        key.strike,
        m,
    )
    price = randomized_price(rs, call_key)
    return implied_vol_brent(rs.ctx, call_key, price, warm_start=warm_start)


def implied_vol_grid(
    rs: RandomizedSlice,
    expiry: float,
    strikes,
    engine: str = "brent",
    m_max: float = DEFAULT_M_MAX,
    quiet: bool = False,
) -> np.ndarray:
    """Implied vols on a strike grid; the expansion path is fully vectorized.

    Points outside the expansion validity region (|m| > m_max or a
    nonpositive polynomial value) escalate to the root finder; ``quiet``
    demotes the escalation log to debug level (used by the calibrator,
    whose exploratory evaluations trip the guard routinely).
    """
    strikes = np.atleast_1d(np.asarray(strikes, dtype=float))
    method, order = parse_engine(engine)
    tau = expiry - rs.ctx.t0
    m = np.log(rs.ctx.s0 / strikes) + rs.ctx.r * tau

    if method == "brent":
        return _brent_grid(rs, expiry, strikes)

    from .expansion import evaluate_polynomial, parameter_coefficients, spot_coefficients

    if rs.expansion_kind == "parameter":
        order = 6 if order is None else order
        vols = _node_vol_matrix(rs, expiry, strikes)
        coeffs, _ = parameter_coefficients(rs.rule.weights, vols, np.full(strikes.size, tau), order)
    else:
        order = 4 if order is None else order
        eta = eval_vol_curve(rs.params.base, rs.ctx, expiry, strikes)
        coeffs, _ = spot_coefficients(
            rs.rule.weights, rs.rule.nodes, rs.ctx.s0, eta, np.full(strikes.size, tau), order
        )
    values = evaluate_polynomial(rs.expansion_kind, coeffs, m, order)

    escalate = (np.abs(m) > m_max) | (values <= 0.0)
    if np.any(escalate):
        logger.log(
            logging.DEBUG if quiet else logging.WARNING,
            "expansion guard tripped at %d of %d grid points; falling back to Brent",
            int(escalate.sum()),
            strikes.size,
        )
        values[escalate] = _brent_grid(rs, expiry, strikes[escalate])
    return values


def _brent_grid(rs: RandomizedSlice, expiry: float, strikes: np.ndarray) -> np.ndarray:
    prices = randomized_prices(rs, expiry, strikes)
    out = np.empty(strikes.size)
    warm = None
    for i, (k, price) in enumerate(zip(strikes, prices)):
        key = OptionKey(expiry, float(k), OptionType.CALL)
        out[i] = implied_vol_brent(rs.ctx, key, float(price), warm_start=warm)
        warm = out[i]
    return out


@dataclass(frozen=True)
class DensityCurve:
    """Risk-neutral density on a strike grid with mass/mean diagnostics."""

    strikes: np.ndarray
    values: np.ndarray
    mass: float
    mean: float

    def to_csv(self, target) -> None:
        """Write 'strike,density' rows; target is a path or a text stream."""
        if isinstance(target, (str, bytes)) or hasattr(target, "__fspath__"):
            with open(target, "w", encoding="utf-8") as handle:
                self._write(handle)
        else:
            self._write(target)

    def _write(self, handle: io.TextIOBase) -> None:
        handle.write("strike,density\n")
        for k, p in zip(self.strikes, self.values):
            handle.write(f"{k:.10g},{p:.12g}\n")


def density(rs: RandomizedSlice, expiry: float, grid) -> DensityCurve:
    """Risk-neutral density via second differences of the mixture call prices.

    Uses the grid-native non-uniform three-point stencil; the grid should
    be wide enough (roughly [0.3 F, 3 F] or more) for the mass and mean
    diagnostics to be meaningful.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size < _MIN_DENSITY_GRID:
        raise ValueError(f"density grid too coarse: need >= {_MIN_DENSITY_GRID} strikes")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("density grid must be strictly increasing")
    tau = expiry - rs.ctx.t0
    prices = randomized_prices(rs, expiry, grid)
    h1 = grid[1:-1] - grid[:-2]
    h2 = grid[2:] - grid[1:-1]
    second = 2.0 * (prices[:-2] * h2 - prices[1:-1] * (h1 + h2) + prices[2:] * h1) / (
        h1 * h2 * (h1 + h2)
    )
    values = math.exp(rs.ctx.r * tau) * second
    strikes = grid[1:-1]
    mass = float(np.trapezoid(values, strikes))
    mean = float(np.trapezoid(strikes * values, strikes) / mass)
    return DensityCurve(strikes=strikes, values=values, mass=mass, mean=mean)


def count_local_maxima(values, rel_floor: float = 1e-8) -> int:
    """Strict local maxima above a floor relative to the global peak.

    The floor suppresses float-level ripples in regions where the curve
    is numerically zero (e.g. far density wings).
    """
    v = np.asarray(values, dtype=float)
    if v.size < 3:
        return 0
    floor = v.max() * rel_floor
    mid = v[1:-1]
    return int(np.sum((mid > v[:-2]) & (mid > v[2:]) & (mid > floor)))
