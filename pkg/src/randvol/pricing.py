"""Black-Scholes pricing, log-moneyness, and the implied-vol root-finding oracle."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr, ndtri

from .errors import NoImpliedVolError, RootFindError

_SQRT_2PI = math.sqrt(2.0 * math.pi)
_BRACKET_LO = 1e-9
_BRACKET_HI = 5.0
_BRACKET_EXPANSIONS = 3


class OptionType(str, Enum):
    CALL = "call"
    PUT = "put"

    @classmethod
    def parse(cls, text: str) -> "OptionType":
        t = str(text).strip().lower()
        if t in ("c", "call"):
            return cls.CALL
        if t in ("p", "put"):
            return cls.PUT
        raise ValueError(f"unknown option type {text!r}")


@dataclass(frozen=True)
class MarketContext:
    """Spot, continuously compounded flat rate, and the reference time."""

    s0: float
    r: float = 0.0
    t0: float = 0.0

    def __post_init__(self):
        if not self.s0 > 0.0:
            raise ValueError(f"spot must be positive, got {self.s0}")

    def forward(self, expiry: float) -> float:
        return self.s0 * math.exp(self.r * (expiry - self.t0))


@dataclass(frozen=True)
class OptionKey:
    expiry: float
    strike: float
    kind: OptionType = OptionType.CALL

    def __post_init__(self):
        if not self.strike > 0.0:
            raise ValueError(f"strike must be positive, got {self.strike}")


def norm_cdf(x):
    return ndtr(x)


def norm_ppf(x):
    return ndtri(x)


def norm_pdf(x):
    return np.exp(-0.5 * np.square(x)) / _SQRT_2PI


def log_moneyness(ctx: MarketContext, key: OptionKey) -> float:
    """m = log(s0/K) + r*(T - t0); zero exactly at the forward strike."""
    _check_expiry(ctx, key.expiry)
    return math.log(ctx.s0 / key.strike) + ctx.r * (key.expiry - ctx.t0)


def bs_price(ctx: MarketContext, key: OptionKey, sigma: float) -> float:
    """Black-Scholes value of a European option.

    sigma = 0 returns the discounted intrinsic value.
    """
    if sigma < 0:
        raise ValueError(f"volatility must be >= 0, got {sigma}")
    tau = _check_expiry(ctx, key.expiry)
    df = math.exp(-ctx.r * tau)
    fwd_gap = ctx.s0 - key.strike * df
    st = sigma * math.sqrt(tau)
    if st <= 0:
        call = max(fwd_gap, 0.0)
    else:
        d1 = (math.log(ctx.s0 / key.strike) + ctx.r * tau) / st + 0.5 * st
        call = ctx.s0 * _scalar_cdf(d1) - key.strike * df * _scalar_cdf(d1 - st)
    if key.kind is OptionType.CALL:
        return call
    return call - fwd_gap  # put-call parity


def bs_call_values(s0, r: float, tau: float, strikes, sigmas) -> np.ndarray:
    """Vectorized Black-Scholes call values; broadcasts over its array inputs.

    Entries with sigma*sqrt(tau) <= 0 fall back to discounted intrinsic.
    """
    s0 = np.asarray(s0, dtype=float)
    k = np.asarray(strikes, dtype=float)
    sig = np.asarray(sigmas, dtype=float)
    df = math.exp(-r * tau)
    st = sig * math.sqrt(tau)
    with np.errstate(divide="ignore", invalid="ignore"):
        d1 = (np.log(s0 / k) + r * tau) / st + 0.5 * st
        d2 = d1 - st
        values = s0 * ndtr(d1) - k * df * ndtr(d2)
    intrinsic = np.maximum(s0 - k * df, 0.0)
    return np.where(st > 0, values, intrinsic)


def implied_vol_brent(
    ctx: MarketContext,
    key: OptionKey,
    price: float,
    warm_start: float | None = None,
    rtol: float = 1e-8,
    max_iter: int = 200,
) -> float:
    """Invert Black-Scholes for the volatility using Brent's method.

    Terminates when the relative difference between successive iterates
    drops below ``rtol``.  ``warm_start`` narrows the initial bracket
    around a previously solved neighboring volatility.
    """
    tau = _check_expiry(ctx, key.expiry)
    df = math.exp(-ctx.r * tau)
    if key.kind is OptionType.CALL:
        lower, upper = max(ctx.s0 - key.strike * df, 0.0), ctx.s0
    else:
        lower, upper = max(key.strike * df - ctx.s0, 0.0), key.strike * df
    if not (lower < price < upper):
        raise NoImpliedVolError(
            f"no implied volatility exists: price {price!r} outside ({lower!r}, {upper!r})"
        )

    def objective(sigma: float) -> float:
        return bs_price(ctx, key, sigma) - price

    lo, hi = _bracket(objective, warm_start)
    try:
        return float(brentq(objective, lo, hi, rtol=max(rtol, 9e-16), xtol=1e-15, maxiter=max_iter))
    except RuntimeError as exc:  # pragma: no cover - brentq convergence failure
        raise RootFindError(f"Brent iteration did not converge: {exc}") from exc


def _bracket(objective, warm_start):
    if warm_start is not None and warm_start > 0:
        lo = max(warm_start / 1.5, _BRACKET_LO)
        hi = warm_start * 1.5
        if objective(lo) < 0 < objective(hi):
            return lo, hi
    lo, hi = _BRACKET_LO, _BRACKET_HI
    if objective(lo) > 0:
        raise RootFindError("price below the zero-volatility limit")
    for _ in range(_BRACKET_EXPANSIONS + 1):
        if objective(hi) > 0:
            return lo, hi
        hi *= 2.0
    raise RootFindError(f"could not bracket the implied volatility below {hi / 2.0}")


def _scalar_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def _check_expiry(ctx: MarketContext, expiry: float) -> float:
    tau = expiry - ctx.t0
    if tau <= 0:
        raise ValueError(f"expiry {expiry} must exceed the reference time {ctx.t0}")
    return tau
