"""Slice-wise least-squares calibration of plain and randomized parametrizations.

The objective is the unweighted sum of squared implied-vol differences
against the retained market quotes.  Free parameters are optimized
unconstrained through bound-respecting transforms (log for positives,
scaled tanh for correlation and the exponent), with a multistart
derivative-free simplex search.  Randomized fits additionally seed from
a plain prefit embedded at the degenerate boundary of the randomizer,
which makes the randomized family dominate its nested plain model by
construction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Literal, Optional

import numpy as np
from scipy.optimize import minimize

from .errors import CalibrationError, RandvolError
from .parametrizations import (
    RHO_MAX,
    FlatParams,
    RandomizerSpec,
    SabrParams,
    SliceParams,
    eval_vol_curve,
)
from .pricing import MarketContext, OptionType
from .quadrature import DiscreteGiven, DistributionSpec, Gamma, LogNormal, SpotLogNormal
from .randomization import implied_vol_grid, randomize

ModelName = Literal["flat", "sabr"]
RandomizerName = Literal["none", "sigma-lognormal", "gamma-gamma", "spot-lognormal"]


@dataclass(frozen=True)
class Quote:
    expiry: float
    strike: float
    iv: float
    kind: OptionType
    open_interest: int = 0

    def __post_init__(self):
        if not self.iv > 0:
            raise ValueError(f"quoted implied vol must be positive, got {self.iv}")
        if not self.strike > 0:
            raise ValueError(f"strike must be positive, got {self.strike}")
        if self.open_interest < 0:
            raise ValueError("open interest must be nonnegative")


@dataclass(frozen=True)
class QuoteSet:
    quotes: tuple
    ctx: MarketContext

    def __post_init__(self):
        object.__setattr__(self, "quotes", tuple(self.quotes))

    def expiries(self) -> list[float]:
        return sorted({q.expiry for q in self.quotes})

    def at_expiry(self, expiry: float) -> "QuoteSet":
        return QuoteSet(tuple(q for q in self.quotes if q.expiry == expiry), self.ctx)

    def __len__(self) -> int:
        return len(self.quotes)


def select_liquid(raw: QuoteSet) -> QuoteSet:
    """Keep one quote per (T, K): the larger open interest, OTM side on ties."""
    grouped: dict[tuple[float, float], list[Quote]] = {}
    for q in raw.quotes:
        grouped.setdefault((q.expiry, q.strike), []).append(q)
    kept = []
    for (expiry, strike), quotes in grouped.items():
        if len(quotes) == 1:
            kept.append(quotes[0])
            continue
        best_oi = max(q.open_interest for q in quotes)
        finalists = [q for q in quotes if q.open_interest == best_oi]
        if len(finalists) > 1:
            otm_kind = OptionType.CALL if strike >= raw.ctx.forward(expiry) else OptionType.PUT
            otm = [q for q in finalists if q.kind is otm_kind]
            finalists = otm or finalists
        kept.append(finalists[0])
    kept.sort(key=lambda q: (q.expiry, q.strike))
    return QuoteSet(tuple(kept), raw.ctx)


@dataclass(frozen=True)
class FitConfig:
    model: ModelName = "sabr"
    randomizer: RandomizerName = "gamma-gamma"
    n_q: int = 2
    fixed: dict = field(default_factory=lambda: {"beta": 0.9})
    engine: Optional[str] = None
    budget: int = 2000
    multistart: int = 8
    seed: int = 0

    def resolved_engine(self) -> str:
        if self.engine is not None:
            return self.engine
        return "expansion:4" if self.randomizer == "spot-lognormal" else "expansion:6"


@dataclass
class FitResult:
    params: SliceParams
    expiry: float
    sse: float
    mse: float
    residuals: list
    randomizer_variance: float
    converged: bool

    def to_json(self) -> dict:
        from .parametrizations import params_to_json

        out = {
            "expiry": self.expiry,
            "params": params_to_json(self.params),
            "sse": self.sse,
            "mse": self.mse,
            "converged": self.converged,
            "randomizer_variance": self.randomizer_variance,
        }
        rnd = self.params.randomizer
        if rnd is not None and isinstance(rnd.dist, Gamma) and isinstance(self.params.base, SabrParams):
            base = self.params.base
            out["table"] = {
                "beta": base.beta,
                "alpha": base.alpha,
                "rho": base.rho,
                "k": rnd.dist.k,
                "theta": rnd.dist.theta,
                "var_gamma": self.randomizer_variance,
            }
        return out


def variance_of_randomizer(spec: DistributionSpec) -> float:
    """Closed-form variance of a randomizer distribution."""
    if isinstance(spec, Gamma):
        return spec.k * spec.theta**2
    if isinstance(spec, LogNormal):
        return (math.exp(spec.nu**2) - 1.0) * math.exp(2.0 * spec.mu + spec.nu**2)
    if isinstance(spec, SpotLogNormal):
        return (math.exp(spec.nu**2) - 1.0) * spec.s0**2
    if isinstance(spec, DiscreteGiven):
        w = np.array([p[0] for p in spec.points])
        x = np.array([p[1] for p in spec.points])
        return float(np.dot(w, x**2) - np.dot(w, x) ** 2)
    raise TypeError(f"unsupported distribution spec: {spec!r}")


# ---------------------------------------------------------------------------
# free-parameter layout and transforms
# ---------------------------------------------------------------------------

def _to_log(x: float) -> float:
    return math.log(x)


def _from_log(y: float) -> float:
    return math.exp(y)


def _to_tanh(bound: float) -> Callable[[float], float]:
    return lambda x: math.atanh(min(max(x / bound, -0.999999), 0.999999))


def _from_tanh(bound: float) -> Callable[[float], float]:
    return lambda y: bound * math.tanh(y)


@dataclass(frozen=True)
class _FreeParam:
    name: str
    to_internal: Callable[[float], float]
    from_internal: Callable[[float], float]
    start_range: tuple[float, float]  # in transformed space


def _free_parameters(cfg: FitConfig) -> list[_FreeParam]:
    log_vol = (math.log(0.03), math.log(1.2))
    params: list[_FreeParam] = []
    if cfg.model == "flat":
        if cfg.randomizer in ("none", "spot-lognormal"):
            params.append(_FreeParam("sigma", _to_log, _from_log, log_vol))
        elif cfg.randomizer == "sigma-lognormal":
            params.append(_FreeParam("mu", lambda x: x, lambda y: y, log_vol))
            params.append(_FreeParam("nu", _to_log, _from_log, (math.log(0.01), math.log(0.8))))
        else:
            raise ValueError(f"randomizer {cfg.randomizer!r} incompatible with the flat model")
    elif cfg.model == "sabr":
        if cfg.randomizer == "sigma-lognormal":
            raise ValueError("sigma randomization applies to the flat model only")
        params.append(_FreeParam("alpha", _to_log, _from_log, (math.log(0.05), math.log(1.0))))
        if "beta" not in cfg.fixed:
            params.append(
                _FreeParam(
                    "beta",
                    lambda x: math.atanh(min(max(2.0 * x - 1.0, -0.999999), 0.999999)),
                    lambda y: 0.5 * (1.0 + math.tanh(y)),
                    (-1.0, 1.0),
                )
            )
        params.append(_FreeParam("rho", _to_tanh(RHO_MAX), _from_tanh(RHO_MAX), (-1.2, 1.2)))
        if cfg.randomizer == "gamma-gamma":
            params.append(_FreeParam("k", _to_log, _from_log, (math.log(0.5), math.log(8.0))))
            params.append(_FreeParam("theta", _to_log, _from_log, (math.log(0.02), math.log(2.0))))
        else:
            params.append(_FreeParam("gamma", _to_log, _from_log, (math.log(0.05), math.log(4.0))))
    else:
        raise ValueError(f"unknown model {cfg.model!r}")
    if cfg.randomizer == "spot-lognormal":
        params.append(_FreeParam("nu", _to_log, _from_log, (math.log(5e-3), math.log(0.4))))
    return [p for p in params if p.name not in cfg.fixed]


def _values_from_vector(cfg: FitConfig, free: list[_FreeParam], vector) -> dict:
    values = {p.name: p.from_internal(float(v)) for p, v in zip(free, vector)}
    values.update(cfg.fixed)
    return values


def build_slice_params(cfg: FitConfig, values: dict, ctx: MarketContext) -> SliceParams:
    """Assemble SliceParams from a named parameter mapping per the fit config."""
    if cfg.model == "flat":
        if cfg.randomizer == "sigma-lognormal":
            dist = LogNormal(values["mu"], values["nu"])
            base = FlatParams(math.exp(values["mu"] + 0.5 * values["nu"] ** 2))
            return SliceParams(base, RandomizerSpec("sigma", dist, cfg.n_q))
        base = FlatParams(values["sigma"])
    else:
        gamma_mean = values.get("gamma", values.get("k", 0.0) * values.get("theta", 0.0))
        base = SabrParams(
            alpha=values["alpha"],
            beta=values.get("beta", 0.9),
            rho=values["rho"],
            gamma=gamma_mean,
        )
    if cfg.randomizer == "none":
        return SliceParams(base)
    if cfg.randomizer == "gamma-gamma":
        return SliceParams(base, RandomizerSpec("gamma", Gamma(values["k"], values["theta"]), cfg.n_q))
    if cfg.randomizer == "spot-lognormal":
        return SliceParams(base, RandomizerSpec("spot", SpotLogNormal(ctx.s0, values["nu"]), cfg.n_q))
    raise ValueError(f"unsupported randomizer {cfg.randomizer!r}")


def model_vols(
    params: SliceParams, ctx: MarketContext, expiry: float, strikes, engine: str,
    quiet: bool = False,
) -> np.ndarray:
    """Model implied vols on a strike grid for plain or randomized parameters."""
    if params.randomizer is None:
        return eval_vol_curve(params.base, ctx, expiry, strikes)
    rs = randomize(params, ctx)
    return implied_vol_grid(rs, expiry, strikes, engine=engine, quiet=quiet)


def fit_slice(quotes: QuoteSet, cfg: FitConfig) -> FitResult:
    """Fit one expiry slice, minimizing the sum of squared vol differences.

    Runs ``cfg.multistart`` simplex searches from a Latin grid over the
    transformed parameter space (plus a degenerate embedding of a plain
    prefit for randomized configurations) and returns the best result.
    """
    expiries = quotes.expiries()
    if len(expiries) != 1:
        raise ValueError(f"fit_slice expects quotes at exactly one expiry, got {expiries}")
    expiry = expiries[0]
    free = _free_parameters(cfg)
    if len(quotes) < len(free):
        raise CalibrationError(
            f"need at least {len(free)} quotes to fit {len(free)} free parameters, "
            f"got {len(quotes)}"
        )
    strikes = np.array([q.strike for q in quotes.quotes])
    market = np.array([q.iv for q in quotes.quotes])
    engine = cfg.resolved_engine()
    ctx = quotes.ctx

    def objective(vector) -> float:
        try:
            values = _values_from_vector(cfg, free, vector)
            params = build_slice_params(cfg, values, ctx)
            model = model_vols(params, ctx, expiry, strikes, engine, quiet=True)
        except (RandvolError, ValueError, OverflowError):
            return float("inf")
        if not np.all(np.isfinite(model)):
            return float("inf")
        return float(np.sum((model - market) ** 2))

    rng = np.random.default_rng(cfg.seed)
    starts = _latin_starts(rng, [p.start_range for p in free], cfg.multistart)
    candidates: list[tuple[float, np.ndarray, bool]] = []

    if cfg.randomizer != "none":
        try:
            plain = fit_slice(quotes, _plain_config(cfg))
        except CalibrationError as exc:
            plain = exc.best
        embedded = _degenerate_embedding(cfg, free, plain) if plain is not None else None
        if embedded is not None:
            starts = np.vstack([starts, embedded])
            candidates.append((objective(embedded), np.asarray(embedded), False))

    for start in starts:
        if not math.isfinite(objective(start)):
            continue
        result = minimize(
            objective,
            start,
            method="Nelder-Mead",
            options={"maxfev": cfg.budget, "xatol": 1e-10, "fatol": 1e-14},
        )
        candidates.append((float(result.fun), np.asarray(result.x), bool(result.success)))

    finite = [c for c in candidates if math.isfinite(c[0])]
    if not finite:
        raise CalibrationError("no multistart point produced a finite objective")
    best_sse, best_x, _ = min(finite, key=lambda c: c[0])
    best = _result_from_vector(cfg, free, best_x, quotes, expiry, strikes, market, engine, best_sse)
    if not any(ok for _, _, ok in finite):
        raise CalibrationError(
            f"optimizer did not converge within budget {cfg.budget}", best=best
        )
    return best


def _result_from_vector(cfg, free, vector, quotes, expiry, strikes, market, engine, sse) -> FitResult:
    values = _values_from_vector(cfg, free, vector)
    params = build_slice_params(cfg, values, quotes.ctx)
    model = model_vols(params, quotes.ctx, expiry, strikes, engine)
    residuals = [
        (expiry, float(k), float(m - q)) for k, m, q in zip(strikes, model, market)
    ]
    variance = 0.0 if params.randomizer is None else variance_of_randomizer(params.randomizer.dist)
    return FitResult(
        params=params,
        expiry=expiry,
        sse=float(sse),
        mse=float(sse) / len(strikes),
        residuals=residuals,
        randomizer_variance=variance,
        converged=True,
    )


def _plain_config(cfg: FitConfig) -> FitConfig:
    return replace(cfg, randomizer="none", engine=None, multistart=max(cfg.multistart // 2, 4))


def _degenerate_embedding(cfg: FitConfig, free, plain: FitResult):
    """Transformed-space point where the randomized model collapses to the plain fit."""
    base = plain.params.base
    if cfg.model == "flat":
        if base.sigma <= 0:
            return None
        values = {"mu": math.log(base.sigma), "nu": 1e-8, "sigma": base.sigma}
    else:
        values = {"alpha": base.alpha, "beta": base.beta, "rho": base.rho, "gamma": base.gamma}
        if cfg.randomizer == "gamma-gamma":
            gamma = max(base.gamma, 1e-6)
            theta = 1e-8
            values.update({"k": gamma / theta, "theta": theta})
        if base.alpha <= 0:
            return None
    if cfg.randomizer == "spot-lognormal":
        values["nu"] = 1e-8
    try:
        return np.array([p.to_internal(values[p.name]) for p in free])
    except (KeyError, ValueError):
        return None


def _latin_starts(rng: np.random.Generator, ranges, count: int) -> np.ndarray:
    """Coarse Latin grid: per-dimension stratum centers, independently permuted."""
    out = np.empty((count, len(ranges)))
    for dim, (lo, hi) in enumerate(ranges):
        edges = np.linspace(lo, hi, count + 1)
        centers = 0.5 * (edges[:-1] + edges[1:])
        out[:, dim] = rng.permutation(centers)
    return out
