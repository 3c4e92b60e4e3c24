"""Analytic Taylor expansions of the randomized implied-volatility function.

Both expansions describe the implied volatility of a discretized
randomized price as a polynomial in log-moneyness m around m = 0 (the
forward strike).  Parameter randomization admits only even powers
(orders 0/2/4/6); spot randomization breaks the symmetry and carries all
powers through order 4.

The coefficients follow from implicit differentiation of

    bs_call(m, P(m)) = mixture_call(m)

and every closed form below is pinned by finite-difference tests against
a root-finding oracle on that implicit function.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Literal, Optional

import numpy as np

from .errors import ExpansionRangeError
from .pricing import norm_cdf, norm_pdf, norm_ppf

PARAMETER_ORDERS = (0, 2, 4, 6)
SPOT_ORDERS = (0, 1, 2, 3, 4)


@dataclass(frozen=True)
class ParameterExpansionAux:
    """Auxiliary quantities of the even-order (parameter) expansion."""

    sigma0: float
    sigma2: float
    sigma4: float
    h: tuple[float, ...]
    e: tuple[float, ...]
    node_vols: tuple[float, ...]


@dataclass(frozen=True)
class SpotExpansionAux:
    """Auxiliary quantities of the spot expansion."""

    eta: float
    beta_n: tuple[float, ...]
    d_plus: tuple[float, ...]
    d_minus: tuple[float, ...]
    d0_plus: float
    d0_minus: float
    sigma_n: tuple[float, ...]
    sigma_prime_n: tuple[float, ...]
    sigma_prime_0: float
    sigma_tilde_n: tuple[float, ...]


@dataclass(frozen=True)
class ExpansionTerms:
    """Taylor coefficients of the randomized implied vol at one (T, K)."""

    kind: Literal["parameter", "spot"]
    expiry: float
    strike: float
    order: int
    coefficients: tuple[float, ...]
    aux: Optional[object] = None

    def to_json(self) -> dict:
        out = {
            "kind": self.kind,
            "expiry": self.expiry,
            "strike": self.strike,
            "order": self.order,
            "coefficients": list(self.coefficients),
        }
        if self.aux is not None:
            out["aux"] = asdict(self.aux)
        return out


def parameter_coefficients(weights, node_vols, tau, order: int = 6):
    """Even-order expansion coefficients for parameter randomization.

    ``node_vols`` has the quadrature axis last and broadcasts against
    ``tau``; a batch of points is a (points, n_q) array against a
    (points,) tau.  Returns (coeffs, aux) where coeffs stacks
    (P0, P2, P4, P6) along the leading axis.
    """
    if order not in PARAMETER_ORDERS:
        raise ValueError(f"parameter expansion supports orders {PARAMETER_ORDERS}, got {order}")
    lam = np.asarray(weights, dtype=float)
    eta = np.asarray(node_vols, dtype=float)
    tau = np.asarray(tau, dtype=float)
    if np.any(eta <= 0):
        raise ExpansionRangeError("parameter expansion requires strictly positive node vols")
    sqrt_tau = np.sqrt(tau)

    h = 0.5 * eta * sqrt_tau[..., None]
    big_a = np.sum(lam * norm_cdf(h), axis=-1)
    if np.any(big_a >= 1.0):
        raise ExpansionRangeError("weighted normal CDF sum reached 1; precision exhausted")
    p0 = 2.0 / sqrt_tau * norm_ppf(big_a)

    sig0 = 0.5 * p0 * sqrt_tau
    e = np.exp(0.5 * (sig0[..., None] ** 2 - h**2))
    p2 = (-1.0 / sig0 + np.sum(lam * e / h, axis=-1)) / (2.0 * sqrt_tau)

    sig2 = p0 * p2 * tau
    p4 = (
        (1.0 + 6.0 * sig2 + sig0**2 * (-7.0 - 6.0 * sig2 + 3.0 * sig2**2)) / sig0**3
        + np.sum(lam * e / h**3 * (-1.0 + 7.0 * h**2), axis=-1)
    ) / (8.0 * sqrt_tau)

    sig4 = p0 * p4 * tau
    p6 = (
        (
            -3.0
            - 45.0 * sig2
            + sig0**2 * (90.0 * sig2 + 60.0 * sig4)
            + sig0**4 * sig2 * (45.0 * sig2 + 60.0 * sig4 - 15.0 * sig2**2)
            + 16.0 * sig0**2
            - 90.0 * sig2**2
            - 31.0 * sig0**4
            - 45.0 * sig0**2 * sig2**2
            - sig0**4 * (15.0 * sig2 + 60.0 * sig4)
            + 15.0 * sig0**2 * sig2**3
        )
        / sig0**5
        + np.sum(lam * e / h**5 * (3.0 - 16.0 * h**2 + 31.0 * h**4), axis=-1)
    ) / (32.0 * sqrt_tau)

    coeffs = np.stack([p0, p2, p4, p6])
    aux = {"sigma0": sig0, "sigma2": sig2, "sigma4": sig4, "h": h, "e": e}
    return coeffs, aux


# Hermite-polynomial derivatives of the standard normal density:
# phi^(n)(x) = (-1)^n He_n(x) phi(x).
def _phi_deriv(n: int, x):
    ph = norm_pdf(x)
    if n == 0:
        return ph
    if n == 1:
        return -x * ph
    if n == 2:
        return (x * x - 1.0) * ph
    if n == 3:
        return -(x**3 - 3.0 * x) * ph
    raise ValueError(f"unsupported derivative order {n}")


def _bs_call_partials(s_total):
    """Partial derivatives of the normalized BS call C(m, s) at m = 0.

    ``s_total`` is the total volatility P0*sqrt(tau).  Keys are (i, j)
    for d^{i+j} C / dm^i ds^j; values broadcast with s_total.
    """
    s = s_total
    ph = norm_pdf(0.5 * s)
    cdf_m = norm_cdf(-0.5 * s)
    return {
        (1, 0): cdf_m,
        (0, 1): ph,
        (2, 0): -cdf_m + ph / s,
        (1, 1): -0.5 * ph,
        (0, 2): -0.25 * s * ph,
        (3, 0): cdf_m - 1.5 * ph / s,
        (2, 1): ph * (0.25 - 1.0 / s**2),
        (1, 2): 0.125 * s * ph,
        (0, 3): (s**2 - 4.0) / 16.0 * ph,
        (4, 0): -cdf_m + ph * (1.75 / s - 1.0 / s**3),
        (3, 1): ph * (1.5 / s**2 - 0.125),
        (2, 2): ph * (-s / 16.0 + 0.25 / s + 2.0 / s**3),
        (1, 3): (4.0 - s**2) / 32.0 * ph,
        (0, 4): s * (12.0 - s**2) / 64.0 * ph,
    }


def spot_coefficients(weights, nodes, s0, base_vol, tau, order: int = 4):
    """Expansion coefficients (orders 0..4) for spot randomization.

    ``base_vol`` and ``tau`` broadcast against each other (batch of
    points); the quadrature nodes are shared across the batch.  Returns
    (coeffs, aux) with coeffs stacking (P0, P1, P2, P3, P4).
    """
    if order not in SPOT_ORDERS:
        raise ValueError(f"spot expansion supports orders {SPOT_ORDERS}, got {order}")
    lam = np.asarray(weights, dtype=float)
    eta = np.asarray(base_vol, dtype=float)
    tau = np.asarray(tau, dtype=float)
    if np.any(eta <= 0):
        raise ExpansionRangeError("spot expansion requires a strictly positive base vol")
    a = np.asarray(nodes, dtype=float) / float(s0)
    if np.any(a <= 0):
        raise ExpansionRangeError("spot nodes must be strictly positive")

    sqrt_tau = np.sqrt(tau)
    s = (eta * sqrt_tau)[..., None]
    beta = np.log(a)
    d_plus = beta / s + 0.5 * s
    d_minus = beta / s - 0.5 * s

    sig_n = a * norm_cdf(d_plus) - norm_cdf(d_minus)
    big_a = 0.5 * (1.0 + np.sum(lam * sig_n, axis=-1))
    if np.any(big_a >= 1.0):
        raise ExpansionRangeError("weighted normal CDF sum reached 1; precision exhausted")
    p0 = 2.0 / sqrt_tau * norm_ppf(big_a)

    # m-derivatives of the mixture at m = 0 (all divided by the spot)
    def g_deriv(k: int):
        term = a * _phi_deriv(k - 1, d_plus) / s**k
        inner = (-1.0) ** k * norm_cdf(d_minus)
        for j in range(1, k + 1):
            inner = inner + math.comb(k, j) * (-1.0) ** (k - j) * _phi_deriv(j - 1, d_minus) / s**j
        return np.sum(lam * (term - inner), axis=-1)

    part = _bs_call_partials(p0 * sqrt_tau)

    def f_partial(i: int, j: int):
        return tau ** (j / 2.0) * part[(i, j)]

    f_y = f_partial(0, 1)
    p1 = (g_deriv(1) - f_partial(1, 0)) / f_y
    p2 = (
        g_deriv(2) - f_partial(2, 0) - 2.0 * f_partial(1, 1) * p1 - f_partial(0, 2) * p1**2
    ) / f_y
    p3 = (
        g_deriv(3)
        - f_partial(3, 0)
        - 3.0 * f_partial(2, 1) * p1
        - 3.0 * f_partial(1, 2) * p1**2
        - f_partial(0, 3) * p1**3
        - 3.0 * f_partial(1, 1) * p2
        - 3.0 * f_partial(0, 2) * p1 * p2
    ) / f_y
    p4 = (
        g_deriv(4)
        - f_partial(4, 0)
        - 4.0 * f_partial(3, 1) * p1
        - 6.0 * f_partial(2, 2) * p1**2
        - 4.0 * f_partial(1, 3) * p1**3
        - f_partial(0, 4) * p1**4
        - 6.0 * f_partial(2, 1) * p2
        - 12.0 * f_partial(1, 2) * p1 * p2
        - 6.0 * f_partial(0, 3) * p1**2 * p2
        - 3.0 * f_partial(0, 2) * p2**2
        - 4.0 * f_partial(1, 1) * p3
        - 4.0 * f_partial(0, 2) * p1 * p3
    ) / f_y

    coeffs = np.stack([p0, p1, p2, p3, p4])
    aux = {
        "beta_n": beta,
        "d_plus": d_plus,
        "d_minus": d_minus,
        "d0": 0.5 * p0 * sqrt_tau,
        "sigma_n": sig_n,
        "sigma_prime_n": -norm_pdf(d_minus),
        "sigma_prime_0": -norm_cdf(-0.5 * p0 * sqrt_tau)
        + norm_pdf(0.5 * p0 * sqrt_tau)
        * (1.0 / (p0 * sqrt_tau) - sqrt_tau * p1 - 0.25 * p0 * p1**2 * tau**1.5),
        "sigma_tilde_n": np.exp(-(beta**2) / (2.0 * tau[..., None] * eta[..., None] ** 2)),
    }
    return coeffs, aux


def evaluate_polynomial(kind: str, coefficients, m, order: int):
    """Taylor polynomial value(s) at log-moneyness m; no validity guard.

    Horner evaluation with in-place accumulation; coefficients may be
    scalars or per-point arrays (leading coefficient axis).
    """
    c = np.asarray(coefficients, dtype=float)
    m = np.asarray(m, dtype=float)
    if kind == "parameter":
        arg = m * m
        terms = [(c[p // 2] / f, p) for p, f in ((6, 720.0), (4, 24.0), (2, 2.0)) if order >= p]
    else:
        arg = m
        terms = [(c[p] / math.factorial(p), p) for p in range(order, 0, -1)]
    if not terms:
        return np.broadcast_to(c[0], m.shape).copy() if m.shape else c[0] * np.ones_like(m)
    acc = np.empty_like(arg)
    acc[...] = terms[0][0]
    for coef, _ in terms[1:]:
        acc *= arg
        acc += coef
    acc *= arg
    acc += c[0]
    return acc


def eval_expansion(terms: ExpansionTerms, m: float) -> float:
    """Evaluate the Taylor polynomial; a nonpositive result is out of range."""
    value = float(evaluate_polynomial(terms.kind, terms.coefficients, m, terms.order))
    if value <= 0.0:
        raise ExpansionRangeError(
            f"expansion value {value!r} at m={m!r} left the validity region"
        )
    return value


def expand_parameter(randomized_slice, key, order: int = 6) -> ExpansionTerms:
    """Expansion terms of a parameter-randomized slice at one (T, K)."""
    from .parametrizations import eval_vol_at_nodes

    rs = randomized_slice
    tau = key.expiry - rs.ctx.t0
    eta = eval_vol_at_nodes(rs.params, rs.ctx, key, rs.rule)
    coeffs, aux = parameter_coefficients(rs.rule.weights, eta, tau, order=order)
    return ExpansionTerms(
        kind="parameter",
        expiry=key.expiry,
        strike=key.strike,
        order=order,
        coefficients=tuple(float(c) for c in coeffs),
        aux=ParameterExpansionAux(
            sigma0=float(aux["sigma0"]),
            sigma2=float(aux["sigma2"]),
            sigma4=float(aux["sigma4"]),
            h=tuple(aux["h"].tolist()),
            e=tuple(aux["e"].tolist()),
            node_vols=tuple(eta.tolist()),
        ),
    )


def expand_spot(randomized_slice, key, order: int = 4) -> ExpansionTerms:
    """Expansion terms of a spot-randomized slice at one (T, K)."""
    from .parametrizations import eval_vol

    rs = randomized_slice
    tau = key.expiry - rs.ctx.t0
    eta = eval_vol(rs.params.base, rs.ctx, key)
    coeffs, aux = spot_coefficients(
        rs.rule.weights, rs.rule.nodes, rs.ctx.s0, eta, tau, order=order
    )
    d0 = float(aux["d0"])
    return ExpansionTerms(
        kind="spot",
        expiry=key.expiry,
        strike=key.strike,
        order=order,
        coefficients=tuple(float(c) for c in coeffs),
        aux=SpotExpansionAux(
            eta=eta,
            beta_n=tuple(aux["beta_n"].tolist()),
            d_plus=tuple(np.atleast_1d(aux["d_plus"]).tolist()),
            d_minus=tuple(np.atleast_1d(aux["d_minus"]).tolist()),
            d0_plus=d0,
            d0_minus=-d0,
            sigma_n=tuple(np.atleast_1d(aux["sigma_n"]).tolist()),
            sigma_prime_n=tuple(np.atleast_1d(aux["sigma_prime_n"]).tolist()),
            sigma_prime_0=float(aux["sigma_prime_0"]),
            sigma_tilde_n=tuple(np.atleast_1d(aux["sigma_tilde_n"]).tolist()),
        ),
    )
