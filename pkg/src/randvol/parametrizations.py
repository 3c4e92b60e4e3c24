"""Base implied-volatility parametrizations: flat level and the SABR formula.

Both are exposed behind a single evaluation interface together with the
slice-level parameter container (base parameters plus an optional
randomizer specification).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Optional, Union

import numpy as np

from .errors import ParameterDomainError
from .pricing import MarketContext, OptionKey
from .quadrature import (
    DiscreteGiven,
    DistributionSpec,
    Gamma,
    LogNormal,
    QuadratureRule,
    SpotLogNormal,
)

#: correlation clamp used by the calibrator; the type itself only
#: requires the open interval (-1, 1)
RHO_MAX = 0.999
_Z_SERIES_CUTOFF = 1e-6


@dataclass(frozen=True)
class FlatParams:
    """Constant implied volatility across all expiries and strikes."""

    sigma: float

    def __post_init__(self):
        if not self.sigma >= 0.0:
            raise ParameterDomainError(f"flat sigma must be >= 0, got {self.sigma}")


@dataclass(frozen=True)
class SabrParams:
    """SABR parameters on [0,1] x [0,inf) x (-1,1) x [0,inf) for (beta, alpha, rho, gamma)."""

    alpha: float
    beta: float
    rho: float
    gamma: float

    def __post_init__(self):
        if not self.alpha >= 0.0:
            raise ParameterDomainError(f"alpha must be >= 0, got {self.alpha}")
        if not 0.0 <= self.beta <= 1.0:
            raise ParameterDomainError(f"beta must lie in [0, 1], got {self.beta}")
        if not -1.0 < self.rho < 1.0:
            raise ParameterDomainError(f"rho must lie in (-1, 1), got {self.rho}")
        if not self.gamma >= 0.0:
            raise ParameterDomainError(f"gamma must be >= 0, got {self.gamma}")


BaseParams = Union[FlatParams, SabrParams]
RandomizerTarget = Literal["sigma", "gamma", "spot"]


@dataclass(frozen=True)
class RandomizerSpec:
    """Which parameter is randomized, with what distribution, at what size."""

    target: RandomizerTarget
    dist: DistributionSpec
    n_q: int

    def __post_init__(self):
        if self.target not in ("sigma", "gamma", "spot"):
            raise ValueError(f"unknown randomizer target {self.target!r}")
        if self.n_q < 1:
            raise ValueError(f"n_q must be >= 1, got {self.n_q}")


@dataclass(frozen=True)
class SliceParams:
    """Base parametrization plus an optional randomizer (the extended vector)."""

    base: BaseParams
    randomizer: Optional[RandomizerSpec] = None

    def __post_init__(self):
        rnd = self.randomizer
        if rnd is None:
            return
        if rnd.target == "sigma" and not isinstance(self.base, FlatParams):
            raise ParameterDomainError("sigma randomization applies to the flat base only")
        if rnd.target == "gamma" and not isinstance(self.base, SabrParams):
            raise ParameterDomainError("gamma randomization applies to the SABR base only")
        if rnd.target == "spot" and not isinstance(rnd.dist, (SpotLogNormal, DiscreteGiven)):
            raise ParameterDomainError(
                "spot randomization requires a spot-lognormal or explicit discrete distribution"
            )


def hagan_vol(forward, strikes, tau: float, alpha: float, beta: float, rho: float, gamma: float):
    """SABR implied volatility; vectorized over strikes.

    The ratio z/x(z) switches to its Taylor series below |z| = 1e-6,
    where direct evaluation of log(.)/z loses all precision; the series
    limit at the forward strike is exactly 1.
    """
    k = np.asarray(strikes, dtype=float)
    scalar = k.ndim == 0
    k = np.atleast_1d(k)
    if np.any(k <= 0):
        raise ParameterDomainError("strikes must be positive")
    if alpha == 0.0:
        out = np.zeros_like(k)
        return float(out[0]) if scalar else out

    log_fk = np.log(forward / k)
    fk_pow = (forward * k) ** ((1.0 - beta) / 2.0)
    z = (gamma / alpha) * fk_pow * log_fk
    small = np.abs(z) < _Z_SERIES_CUTOFF
    z_safe = np.where(small, 1.0, z)
    with np.errstate(divide="ignore", invalid="ignore"):
        x_of_z = np.log((np.sqrt(1.0 - 2.0 * rho * z_safe + z_safe**2) + z_safe - rho) / (1.0 - rho))
        ratio = np.where(
            small,
            1.0 - 0.5 * rho * z + (2.0 - 3.0 * rho**2) / 12.0 * z**2,
            z_safe / x_of_z,
        )
    one_m_beta = 1.0 - beta
    denom = fk_pow * (
        1.0 + one_m_beta**2 / 24.0 * log_fk**2 + one_m_beta**4 / 1920.0 * log_fk**4
    )
    correction = 1.0 + (
        one_m_beta**2 / 24.0 * alpha**2 / (forward * k) ** one_m_beta
        + 0.25 * rho * beta * gamma * alpha / fk_pow
        + (2.0 - 3.0 * rho**2) / 24.0 * gamma**2
    ) * tau
    vol = alpha / denom * ratio * correction
    return float(vol[0]) if scalar else vol


def eval_vol(base: BaseParams, ctx: MarketContext, key: OptionKey) -> float:
    """Implied volatility of the base (non-randomized) parametrization."""
    if isinstance(base, FlatParams):
        return base.sigma
    tau = key.expiry - ctx.t0
    fwd = ctx.forward(key.expiry)
    return float(hagan_vol(fwd, key.strike, tau, base.alpha, base.beta, base.rho, base.gamma))


def eval_vol_curve(base: BaseParams, ctx: MarketContext, expiry: float, strikes) -> np.ndarray:
    """Vectorized eval_vol over a strike array at one expiry."""
    strikes = np.asarray(strikes, dtype=float)
    if isinstance(base, FlatParams):
        return np.full(strikes.shape, base.sigma)
    tau = expiry - ctx.t0
    fwd = ctx.forward(expiry)
    return np.atleast_1d(hagan_vol(fwd, strikes, tau, base.alpha, base.beta, base.rho, base.gamma))


def eval_vol_at_nodes(
    params: SliceParams, ctx: MarketContext, key: OptionKey, rule: QuadratureRule
) -> np.ndarray:
    """Node volatilities: the base evaluated with the randomized parameter at each node.

    For spot randomization the parametrization does not move with the
    nodes, so every node carries the single base volatility.
    """
    rnd = params.randomizer
    if rnd is None:
        raise ValueError("slice has no randomizer")
    nodes = rule.nodes
    if rnd.target == "sigma":
        if np.any(nodes < 0):
            raise ParameterDomainError("sigma nodes must be nonnegative")
        return np.array(nodes, dtype=float)
    if rnd.target == "gamma":
        base = params.base
        if np.any(nodes < 0):
            raise ParameterDomainError("gamma nodes must be nonnegative")
        tau = key.expiry - ctx.t0
        fwd = ctx.forward(key.expiry)
        return np.array(
            [
                float(hagan_vol(fwd, key.strike, tau, base.alpha, base.beta, base.rho, g))
                for g in nodes
            ]
        )
    return np.full(nodes.shape, eval_vol(params.base, ctx, key))


# ---------------------------------------------------------------------------
# JSON (de)serialization of slice parameters
# ---------------------------------------------------------------------------

def dist_to_json(dist: DistributionSpec) -> dict:
    if isinstance(dist, LogNormal):
        return {"family": "lognormal", "mu": dist.mu, "nu": dist.nu}
    if isinstance(dist, Gamma):
        return {"family": "gamma", "k": dist.k, "theta": dist.theta}
    if isinstance(dist, SpotLogNormal):
        return {"family": "spot-lognormal", "s0": dist.s0, "nu": dist.nu}
    if isinstance(dist, DiscreteGiven):
        return {"family": "discrete", "points": [list(p) for p in dist.points]}
    raise TypeError(f"unsupported distribution spec: {dist!r}")


def dist_from_json(data: dict, spot: Optional[float] = None) -> DistributionSpec:
    family = data.get("family")
    if family == "lognormal":
        return LogNormal(float(data["mu"]), float(data["nu"]))
    if family == "gamma":
        return Gamma(float(data["k"]), float(data["theta"]))
    if family == "spot-lognormal":
        s0 = data.get("s0", spot)
        if s0 is None:
            raise ValueError("spot-lognormal distribution needs 's0' (or a market spot)")
        return SpotLogNormal(float(s0), float(data["nu"]))
    if family == "discrete":
        return DiscreteGiven(tuple((float(w), float(x)) for w, x in data["points"]))
    raise ValueError(f"unknown distribution family {family!r}")


def params_to_json(params: SliceParams) -> dict:
    if isinstance(params.base, FlatParams):
        out = {"type": "flat", "sigma": params.base.sigma}
    else:
        base = params.base
        out = {
            "type": "sabr",
            "alpha": base.alpha,
            "beta": base.beta,
            "rho": base.rho,
            "gamma": base.gamma,
        }
    if params.randomizer is not None:
        rnd = params.randomizer
        out["randomizer"] = {
            "target": rnd.target,
            "dist": dist_to_json(rnd.dist),
            "n_q": rnd.n_q,
        }
    return out


def params_from_json(data: dict, spot: Optional[float] = None) -> SliceParams:
    kind = data.get("type")
    if kind == "flat":
        base: BaseParams = FlatParams(float(data["sigma"]))
    elif kind == "sabr":
        base = SabrParams(
            alpha=float(data["alpha"]),
            beta=float(data["beta"]),
            rho=float(data["rho"]),
            gamma=float(data["gamma"]),
        )
    else:
        raise ValueError(f"unknown parametrization type {kind!r}")
    rnd = data.get("randomizer")
    if rnd is None:
        return SliceParams(base)
    spec = RandomizerSpec(
        target=rnd["target"],
        dist=dist_from_json(rnd["dist"], spot=spot),
        n_q=int(rnd.get("n_q", 2)),
    )
    return SliceParams(base, spec)
