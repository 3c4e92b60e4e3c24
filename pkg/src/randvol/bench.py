"""Timing harness comparing the expansion engines against the root finder.

The workload mirrors a realistic surface build: a fixed set of expiries,
each carrying an equal share of strikes.  The expansion engines build
one set of coefficients per expiry and evaluate the polynomial across
that expiry's strikes; the root finder inverts every point, warm-started
from its neighbor.
"""
from __future__ import annotations

import math
import time
from typing import NamedTuple, Sequence

import numpy as np

from .expansion import evaluate_polynomial, parameter_coefficients
from .parametrizations import FlatParams, RandomizerSpec, SliceParams
from .pricing import MarketContext, OptionKey, OptionType, implied_vol_brent
from .quadrature import LogNormal
from .randomization import RandomizedSlice, randomized_prices, randomize

DEFAULT_COUNTS = (1_000, 10_000, 50_000, 100_000)
DEFAULT_ORDERS = (2, 4, 6)
_N_EXPIRIES = 10
_M_SPAN = 0.3


class BenchRow(NamedTuple):
    method: str
    count: int
    seconds: float


def reference_slice(n_q: int = 4) -> RandomizedSlice:
    """Flat base with a lognormal volatility randomizer (mean level 0.2)."""
    ctx = MarketContext(s0=100.0, r=0.02)
    nu = 0.2
    params = SliceParams(
        FlatParams(0.2),
        RandomizerSpec("sigma", LogNormal(math.log(0.2) - 0.5 * nu**2, nu), n_q),
    )
    return randomize(params, ctx)


def _point_grid(rs: RandomizedSlice, count: int):
    """(expiry, strikes, log-moneyness) triples: count points over a fixed expiry set.

    The moneyness transform is input preparation shared by both engines,
    so it lives outside the timed sections.
    """
    expiries = np.linspace(0.5, 2.5, _N_EXPIRIES)
    per = max(count // _N_EXPIRIES, 1)
    out = []
    for expiry in expiries:
        m = np.linspace(-_M_SPAN, _M_SPAN, per)
        strikes = rs.ctx.s0 * np.exp(rs.ctx.r * expiry - m)
        out.append((float(expiry), strikes, m))
    return out


def time_expansion(rs: RandomizedSlice, count: int, order: int) -> float:
    """Seconds to produce implied vols for `count` points with the expansion.

    Coefficients are built once per expiry and the polynomial is
    evaluated in one vectorized pass per expiry.
    """
    grid = _point_grid(rs, count)
    weights = rs.rule.weights
    node_vols = rs.rule.nodes
    start = time.perf_counter()
    for expiry, _, m in grid:
        tau = expiry - rs.ctx.t0
        coeffs, _ = parameter_coefficients(weights, node_vols, tau, order=order)
        evaluate_polynomial("parameter", coeffs, m, order)
    return time.perf_counter() - start


def time_brent(rs: RandomizedSlice, count: int) -> float:
    """Seconds to invert `count` randomized prices with warm-started Brent."""
    grid = _point_grid(rs, count)
    start = time.perf_counter()
    for expiry, strikes, _ in grid:
        prices = randomized_prices(rs, expiry, strikes)
        warm = None
        for strike, price in zip(strikes, prices):
            key = OptionKey(expiry, float(strike), OptionType.CALL)
            warm = implied_vol_brent(rs.ctx, key, float(price), warm_start=warm)
    return time.perf_counter() - start


def run_benchmark(
    counts: Sequence[int] = DEFAULT_COUNTS,
    orders: Sequence[int] = DEFAULT_ORDERS,
    include_brent: bool = True,
) -> list[BenchRow]:
    rs = reference_slice()
    rows: list[BenchRow] = []
    for count in counts:
        if include_brent:
            rows.append(BenchRow("brent", count, time_brent(rs, count)))
        for order in orders:
            rows.append(BenchRow(f"expansion:{order}", count, time_expansion(rs, count, order)))
    return rows


def rows_to_csv(rows: Sequence[BenchRow]) -> str:
    lines = ["method,count,seconds"]
    lines += [f"{r.method},{r.count},{r.seconds:.6f}" for r in rows]
    return "\n".join(lines) + "\n"
