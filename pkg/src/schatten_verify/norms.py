"""Weighted scalar norms, matrix-field L^p norms, and the relative perturbation.

The half-line norm is taken in L^p(R_+, t^w dt) with weight exponent
w = (N - 2m)/(2m). For the canonical resolvent profile
g(t) = sqrt(t)/(1 + t) it has the closed form

    ||g||_p^* = Beta(p/2 + N/(2m), p/2 - N/(2m))^(1/p),

finite exactly when p > N/m. The matrix-field L^p norm integrates the
pointwise operator norm (largest singular value) of the field.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import quad
from scipy.special import betaln

from .coeff_algebra import HermitianMatrixField, matrix_inv_sqrt
from .errors import NonPositiveDefiniteError


class _DivergentType:
    """Singleton marker for a weighted norm that is infinite."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "Divergent"


DIVERGENT = _DivergentType()


def is_divergent(value) -> bool:
    return value is DIVERGENT


def resolvent_profile(t):
    """g(t) = sqrt(t)/(1+t): the scalar profile of op^(1/2) (op+1)^(-1).

    Bounded by 1/2 (attained at t = 1), continuous, g(0) = 0, and decaying
    like t^(-1/2) at infinity.
    """
    t = np.asarray(t, dtype=float)
    return np.sqrt(t) / (1.0 + t)


# tail decay exponent of the canonical profile, used by the analytic
# divergence pre-check in weighted_profile_norm
_RESOLVENT_PROFILE_DECAY = 0.5

RESOLVENT_PROFILE_SUP = 0.5


@dataclass(frozen=True)
class WeightedNormSpec:
    """Parameters of the weighted half-line norm ||.||_p^*."""

    p: float
    N: int
    m: int

    def __post_init__(self):
        if self.p < 1:
            raise ValueError(f"norm exponent must be >= 1, got {self.p}")
        if self.N < 1 or self.m < 1:
            raise ValueError("N and m must be positive integers")

    @property
    def weight_exponent(self) -> float:
        return (self.N - 2 * self.m) / (2.0 * self.m)

    @property
    def canonical_profile_finite(self) -> bool:
        return self.p > self.N / self.m


def resolvent_profile_norm(spec: WeightedNormSpec):
    """Closed-form ||g||_p^* for the canonical profile, or DIVERGENT.

    The integrand t^(p/2 + w) (1+t)^(-p) is a Beta integral with
    x = p/2 + N/(2m), y = p/2 - N/(2m); it converges iff y > 0, i.e.
    p > N/m.
    """
    x = spec.p / 2.0 + spec.N / (2.0 * spec.m)
    y = spec.p / 2.0 - spec.N / (2.0 * spec.m)
    if y <= 0:
        return DIVERGENT
    return math.exp(betaln(x, y) / spec.p)


def weighted_profile_norm(
    g: Callable,
    spec: WeightedNormSpec,
    tol: float = 1e-11,
    tail_decay: float | None = None,
):
    """Quadrature of (integral |g|^p t^w dt)^(1/p); DIVERGENT when infinite.

    The improper integral is mapped to (0, 1) by t = s/(1-s). Divergence is
    decided analytically when the tail decay of g is known (g(t) ~ t^-decay):
    the integral converges iff p*decay > w + 1. The canonical profile is
    recognized automatically; for other profiles without a declared decay a
    dyadic-tail growth check is used as a backstop.
    """
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    w = spec.weight_exponent
    if tail_decay is None and g is resolvent_profile:
        tail_decay = _RESOLVENT_PROFILE_DECAY
    if tail_decay is not None:
        if spec.p * tail_decay <= w + 1.0:
            return DIVERGENT
    elif _tail_diverges(g, spec):
        return DIVERGENT

    def integrand(s: float) -> float:
        t = s / (1.0 - s)
        return abs(float(g(t))) ** spec.p * t**w / (1.0 - s) ** 2

    value, _ = quad(integrand, 0.0, 1.0, epsabs=0.0, epsrel=tol, limit=400)
    return value ** (1.0 / spec.p)


def _tail_diverges(g: Callable, spec: WeightedNormSpec) -> bool:
    # dyadic blocks [2^k, 2^(k+1)]: a convergent integral has geometrically
    # decaying block sums, so a non-decreasing pair high up signals divergence
    w = spec.weight_exponent
    previous = None
    for k in range(16, 26):
        block, _ = quad(
            lambda t: abs(float(g(t))) ** spec.p * t**w,
            2.0**k,
            2.0 ** (k + 1),
            limit=80,
        )
        if previous is not None and block >= 0.5 * previous:
            return True
        previous = block
    return False


@dataclass(frozen=True)
class PerturbationField:
    """Samples of the relative coefficient perturbation on a grid.

    values: (*spatial, nu, nu) complex; not Hermitian in general (it is when
    the two coefficients commute pointwise).
    """

    values: np.ndarray
    cell_volume: float


def relative_perturbation(
    a: HermitianMatrixField,
    a_tilde: HermitianMatrixField,
    cell_volume: float,
) -> PerturbationField:
    """Pointwise atilde^(-1/2) (atilde - a) a^(-1/2) with principal roots.

    Raises NonPositiveDefiniteError listing the failing grid points; callers
    holding a degenerate coefficient should clip first.
    """
    if not a.is_constant:
        raise ValueError("reference coefficient must be constant")
    a_mat = a.constant_matrix()
    inv_sqrt_a = matrix_inv_sqrt(a_mat)
    vals = a_tilde.values
    w = np.linalg.eigvalsh(vals)
    if w.min() <= 0:
        bad_mask = w.min(axis=-1) <= 0
        bad = [tuple(int(i) for i in idx) for idx in np.argwhere(bad_mask)]
        raise NonPositiveDefiniteError(w.min(), bad)
    w_isqrt = 1.0 / np.sqrt(w)
    q = np.linalg.eigh(vals)[1]
    inv_sqrt_tilde = np.einsum("...ab,...b,...cb->...ac", q, w_isqrt, np.conj(q))
    diff = vals - a_mat
    out = inv_sqrt_tilde @ diff @ inv_sqrt_a
    return PerturbationField(values=out, cell_volume=cell_volume)


def matrix_field_lp_norm(field: PerturbationField, p: float) -> float:
    """(h^N sum_x ||V(x)||_op^p)^(1/p); p = inf gives the sup over the grid.

    The pointwise norm is the largest singular value of V(x) acting on
    C^nu.
    """
    if p != np.inf and p < 1:
        raise ValueError(f"norm exponent must be >= 1 or inf, got {p}")
    vals = field.values.reshape(-1, *field.values.shape[-2:])
    top = np.linalg.svd(vals, compute_uv=False)[:, 0]
    if p == np.inf:
        return float(top.max())
    return float((field.cell_volume * np.sum(top**p)) ** (1.0 / p))
