"""Gaussian quadrature rules built from the moments of a randomizer distribution.

The construction follows the classical moment route: assemble the Gram
(Hankel) matrix of raw moments, Cholesky-factor it, read off the
three-term recurrence coefficients of the orthonormal polynomials, and
diagonalize the resulting symmetric tridiagonal (Jacobi) matrix.  Nodes
are its eigenvalues; weights are the squared first components of the
normalized eigenvectors.

Parametric distributions are standardized to unit scale before the
factorization (nodes are mapped back by the exact affine scaling), which
keeps the Gram matrix well conditioned far longer than the raw moments
would allow.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import EigenConvergenceError, GramMatrixError, MomentOverflowError

#: Hard cap on the number of quadrature points.  Moment matrices of the
#: supported families become numerically singular in double precision not
#: far beyond this; we refuse rather than regularize.
MAX_NQ = 10

_WEIGHT_SUM_TOL = 1e-12
_MOMENT_REPRODUCTION_RTOL = 1e-8
_PIVOT_RTOL = 1e-13
_LOG_FLOAT_MAX = math.log(np.finfo(float).max)


@dataclass(frozen=True)
class LogNormal:
    """log(X) ~ N(mu, nu^2).  nu = 0 degenerates to a point mass at exp(mu)."""

    mu: float
    nu: float

    def __post_init__(self):
        if not self.nu >= 0.0:
            raise ValueError(f"lognormal nu must be >= 0, got {self.nu}")


@dataclass(frozen=True)
class Gamma:
    """Gamma distribution with shape k > 0 and scale theta > 0."""

    k: float
    theta: float

    def __post_init__(self):
        if not self.k > 0.0:
            raise ValueError(f"gamma shape must be > 0, got {self.k}")
        if not self.theta > 0.0:
            raise ValueError(f"gamma scale must be > 0, got {self.theta}")


@dataclass(frozen=True)
class SpotLogNormal:
    """Lognormal spot randomizer with the mean pinned at s0.

    log(X) ~ N(log s0 - nu^2/2, nu^2), so E[X] = s0 by construction.
    """

    s0: float
    nu: float

    def __post_init__(self):
        if not self.s0 > 0.0:
            raise ValueError(f"spot must be > 0, got {self.s0}")
        if not self.nu >= 0.0:
            raise ValueError(f"spot-lognormal nu must be >= 0, got {self.nu}")


@dataclass(frozen=True)
class DiscreteGiven:
    """An explicitly supplied discrete rule: (weight, node) pairs."""

    points: tuple[tuple[float, float], ...]

    def __post_init__(self):
        object.__setattr__(self, "points", tuple((float(w), float(x)) for w, x in self.points))
        w = np.array([p[0] for p in self.points])
        x = np.array([p[1] for p in self.points])
        if w.size == 0:
            raise ValueError("discrete rule needs at least one point")
        if np.any(w < 0):
            raise ValueError("discrete weights must be nonnegative")
        if abs(w.sum() - 1.0) > _WEIGHT_SUM_TOL:
            raise ValueError(f"discrete weights must sum to 1, got {w.sum()!r}")
        if np.any(np.diff(x) <= 0):
            raise ValueError("discrete nodes must be strictly increasing")


DistributionSpec = Union[LogNormal, Gamma, SpotLogNormal, DiscreteGiven]


@dataclass(frozen=True)
class QuadratureRule:
    """Paired weights/nodes discretizing a randomizer distribution."""

    weights: np.ndarray
    nodes: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        x = np.array(self.nodes, dtype=float)
        if w.shape != x.shape or w.ndim != 1:
            raise ValueError("weights and nodes must be 1-d arrays of equal length")
        if abs(w.sum() - 1.0) > _WEIGHT_SUM_TOL:
            raise ValueError(f"quadrature weights must sum to 1, got {w.sum()!r}")
        if np.any(w < 0):
            raise ValueError("quadrature weights must be nonnegative")
        if x.size > 1 and np.any(np.diff(x) <= 0):
            raise ValueError("quadrature nodes must be strictly increasing")
        w.setflags(write=False)
        x.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "nodes", x)

    @property
    def size(self) -> int:
        return self.nodes.size

    def mean(self) -> float:
        return float(np.dot(self.weights, self.nodes))

    def moment(self, order: int) -> float:
        return float(np.dot(self.weights, self.nodes**order))

    def scaled(self, factor: float) -> "QuadratureRule":
        """Rule for the scaled variable factor * X (weights unchanged)."""
        return QuadratureRule(self.weights, self.nodes * factor)

    def to_json(self) -> dict:
        return {"weights": self.weights.tolist(), "nodes": self.nodes.tolist()}

    @classmethod
    def from_json(cls, data) -> "QuadratureRule":
        if isinstance(data, str):
            data = json.loads(data)
        return cls(np.asarray(data["weights"], dtype=float), np.asarray(data["nodes"], dtype=float))


@dataclass(frozen=True)
class QuadratureWorkspace:
    """Intermediates of the moment factorization, exposed for validation."""

    gram: np.ndarray
    cholesky: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    jacobi: np.ndarray


def moments(spec: DistributionSpec, order: int) -> np.ndarray:
    """Raw moments E[X^i] for i = 0..order of the given distribution."""
    if order < 0:
        raise ValueError("moment order must be >= 0")
    i = np.arange(order + 1, dtype=float)
    if isinstance(spec, LogNormal):
        exponents = i * spec.mu + 0.5 * i**2 * spec.nu**2
        _check_moment_overflow(exponents)
        return np.exp(exponents)
    if isinstance(spec, SpotLogNormal):
        mu = math.log(spec.s0) - 0.5 * spec.nu**2
        exponents = i * mu + 0.5 * i**2 * spec.nu**2
        _check_moment_overflow(exponents)
        return np.exp(exponents)
    if isinstance(spec, Gamma):
        exponents = i * math.log(spec.theta) + _lgamma_ratio(spec.k, i)
        _check_moment_overflow(exponents)
        return np.exp(exponents)
    if isinstance(spec, DiscreteGiven):
        w = np.array([p[0] for p in spec.points])
        x = np.array([p[1] for p in spec.points])
        return np.array([float(np.dot(w, x**n)) for n in range(order + 1)])
    raise TypeError(f"unsupported distribution spec: {spec!r}")


def _lgamma_ratio(k: float, i: np.ndarray) -> np.ndarray:
    lg = math.lgamma(k)
    return np.array([math.lgamma(k + n) - lg for n in i])


def _check_moment_overflow(exponents: np.ndarray) -> None:
    if np.any(exponents > _LOG_FLOAT_MAX):
        raise MomentOverflowError(
            "moment overflow: the requested order is not representable; lower n_q"
        )


def build_workspace(moment_values: np.ndarray, n_q: int) -> QuadratureWorkspace:
    """Gram matrix, Cholesky factor, recurrence coefficients and Jacobi matrix.

    The pivot test is relative to each row's own diagonal entry: moment
    sequences routinely span tens of orders of magnitude, and a tolerance
    tied to the largest diagonal entry would reject perfectly well
    conditioned matrices.
    """
    mom = np.asarray(moment_values, dtype=float)
    if n_q < 1:
        raise ValueError("n_q must be >= 1")
    if mom.size < 2 * n_q + 1:
        raise ValueError(f"need moments up to order {2 * n_q}, got {mom.size - 1}")
    if abs(mom[0] - 1.0) > 1e-12:
        raise ValueError(f"moment sequence must start with mu_0 = 1, got {mom[0]!r}")

    n = n_q + 1
    gram = np.empty((n, n))
    for i in range(n):
        gram[i, :] = mom[i : i + n]

    chol = np.zeros((n, n))
    for i in range(n):
        s = gram[i, i] - float(np.dot(chol[:i, i], chol[:i, i]))
        if s < _PIVOT_RTOL * gram[i, i]:
            if i == n - 1 and abs(s) <= _PIVOT_RTOL * gram[i, i]:
                # The last pivot is allowed to vanish: it corresponds to a
                # measure with exactly n_q atoms and is not used by the rule.
                s = 0.0
            else:
                raise GramMatrixError(
                    f"Cholesky pivot ratio {s / gram[i, i]:.3e} at row {i}: moment "
                    f"sequence inconsistent or n_q={n_q} too large for the "
                    "available moment precision"
                )
        chol[i, i] = math.sqrt(s)
        if i < n - 1:
            chol[i, i + 1 :] = (gram[i, i + 1 :] - chol[:i, i] @ chol[:i, i + 1 :]) / chol[i, i]

    alpha = np.empty(n_q)
    beta = np.empty(max(n_q - 1, 0))
    for j in range(n_q):
        alpha[j] = chol[j, j + 1] / chol[j, j]
        if j >= 1:
            alpha[j] -= chol[j - 1, j] / chol[j - 1, j - 1]
        if j < n_q - 1:
            beta[j] = (chol[j + 1, j + 1] / chol[j, j]) ** 2

    jacobi = np.diag(alpha)
    if n_q > 1:
        off = np.sqrt(beta)
        jacobi += np.diag(off, 1) + np.diag(off, -1)
    return QuadratureWorkspace(gram=gram, cholesky=chol, alpha=alpha, beta=beta, jacobi=jacobi)


def golub_welsch(moment_values: np.ndarray, n_q: int) -> QuadratureRule:
    """Quadrature rule of size n_q matching the given raw moment sequence.

    The returned rule reproduces the input moments through order
    2*n_q - 1 to relative 1e-8; anything worse signals that the moment
    precision is exhausted and raises instead of returning a bad rule.
    """
    ws = build_workspace(moment_values, n_q)
    nodes, first = _tridiagonal_eigen_first_components(ws.alpha, np.sqrt(ws.beta))
    weights = first**2
    # guard against tiny negative rounding in the squared components
    weights = np.clip(weights, 0.0, None)
    weights /= weights.sum()
    rule = QuadratureRule(weights, nodes)

    mom = np.asarray(moment_values, dtype=float)
    for i in range(2 * n_q):
        target = mom[i]
        # zero-ish targets (symmetric measures) are scaled by the natural
        # order-i magnitude mu_2^(i/2) instead of their own near-zero value
        scale = max(abs(target), mom[2] ** (i / 2.0), 1e-300)
        if abs(rule.moment(i) - target) / scale > _MOMENT_REPRODUCTION_RTOL:
            raise GramMatrixError(
                f"constructed rule fails to reproduce moment {i} "
                f"(got {rule.moment(i)!r}, want {target!r}); n_q={n_q} too large"
            )
    return rule


def quadrature_for(spec: DistributionSpec, n_q: int) -> QuadratureRule:
    """Build the quadrature rule discretizing a randomizer distribution.

    Explicit discrete rules pass through unchanged; degenerate parametric
    specs (nu = 0) collapse to a one-node rule at the mean regardless of
    n_q.  Parametric specs are standardized to unit scale before the
    factorization and the nodes are scaled back afterwards.
    """
    if isinstance(spec, DiscreteGiven):
        w = np.array([p[0] for p in spec.points])
        x = np.array([p[1] for p in spec.points])
        return QuadratureRule(w / w.sum(), x)
    if n_q < 1:
        raise ValueError("n_q must be >= 1")
    if n_q > MAX_NQ:
        raise ValueError(f"n_q={n_q} exceeds the supported maximum {MAX_NQ}")

    if isinstance(spec, LogNormal):
        if spec.nu == 0.0:
            return QuadratureRule(np.array([1.0]), np.array([math.exp(spec.mu)]))
        unit = LogNormal(0.0, spec.nu)
        scale = math.exp(spec.mu)
    elif isinstance(spec, SpotLogNormal):
        if spec.nu == 0.0:
            return QuadratureRule(np.array([1.0]), np.array([spec.s0]))
        unit = LogNormal(-0.5 * spec.nu**2, spec.nu)
        scale = spec.s0
    elif isinstance(spec, Gamma):
        unit = Gamma(spec.k, 1.0)
        scale = spec.theta
    else:
        raise TypeError(f"unsupported distribution spec: {spec!r}")

    if n_q == 1:
        return QuadratureRule(np.array([1.0]), np.array([moments(spec, 1)[1]]))
    rule = golub_welsch(moments(unit, 2 * n_q), n_q)
    return rule.scaled(scale)


def _tridiagonal_eigen_first_components(diag, offdiag):
    """Implicit-shift QL for a symmetric tridiagonal matrix.

    Returns the eigenvalues in ascending order together with the first
    component of each normalized eigenvector.  Instead of accumulating
    full eigenvectors, the plane rotations are applied to the first row
    of the identity, which is all the Golub-Welsch weights need.
    """
    n = diag.size
    d = np.array(diag, dtype=float)
    e = np.zeros(n)
    e[: n - 1] = offdiag
    z = np.zeros(n)
    z[0] = 1.0
    eps = np.finfo(float).eps

    for l in range(n):
        iterations = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= eps * dd:
                    break
                m += 1
            if m == l:
                break
            iterations += 1
            if iterations > 50:
                raise EigenConvergenceError("QL iteration exceeded 50 sweeps")
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + math.copysign(r, g))
            s = c = 1.0
            p = 0.0
            underflow = False
            for i in range(m - 1, l - 1, -1):
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    underflow = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                f = z[i + 1]
                z[i + 1] = s * z[i] + c * f
                z[i] = c * z[i] - s * f
            if underflow:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0

    order = np.argsort(d, kind="stable")
    return d[order], z[order]
