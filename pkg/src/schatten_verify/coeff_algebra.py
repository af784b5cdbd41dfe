"""Coefficient-matrix algebra and the Fourier-side symbol calculus.

The coefficient of an order-2m operator is a Hermitian positive-definite
nu x nu matrix (constant for the reference operator, sampled on a grid for
the perturbed one), with rows/columns indexed by the order-m multi-index
basis. On the Fourier side the constant-coefficient operator is described
by the vector symbol B(xi) = b xi^(m) (b the matrix square root of the
coefficient), the scalar principal symbol A(xi) = |B(xi)|^2, and, for a
scalar profile g with g(0) = 0, the rank-one matrix symbol
g(A) A^{-1} B (x) B of g applied to the channel-side operator.

The coarea constant converts frequency-space integrals of g^2(A(xi)) into
the weighted half-line integrals used by the trace-norm estimates:

    (2pi)^{-N} integral g^2(A(xi)) dxi = c_cov * integral g^2(t) t^{(N-2m)/2m} dt

with c_cov = (2pi)^{-N} (N/2m) vol{A < 1}; all 2pi bookkeeping lives in
c_cov because the transform convention is unitary throughout.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NonPositiveDefiniteError
from .multiindex import MultiIndexBasis, monomial_matrix

HERMITICITY_RTOL = 1e-12


@dataclass(frozen=True)
class HermitianMatrixField:
    """A nu x nu Hermitian matrix, constant or sampled over a spatial grid.

    ``values`` has shape (nu, nu) for a constant field and
    (*spatial_shape, nu, nu) for a sampled one.
    """

    basis: MultiIndexBasis
    values: np.ndarray

    def __post_init__(self):
        nu = self.basis.nu
        v = np.asarray(self.values, dtype=complex)
        if v.ndim < 2 or v.shape[-1] != nu or v.shape[-2] != nu:
            raise ValueError(f"field values must end in ({nu}, {nu}), got {v.shape}")
        herm_gap = np.linalg.norm(v - np.conj(np.swapaxes(v, -1, -2)))
        scale = np.linalg.norm(v)
        if herm_gap > HERMITICITY_RTOL * max(scale, 1.0):
            raise ValueError(
                f"field is not Hermitian: ||a - a*|| = {herm_gap:.3g} "
                f"exceeds {HERMITICITY_RTOL:g} * ||a||"
            )
        object.__setattr__(self, "values", v)

    @property
    def is_constant(self) -> bool:
        return self.values.ndim == 2

    @property
    def spatial_shape(self) -> tuple[int, ...]:
        return self.values.shape[:-2]

    def constant_matrix(self) -> np.ndarray:
        if not self.is_constant:
            raise ValueError("field is sampled, not constant")
        return self.values

    def sampled_on(self, spatial_shape: tuple[int, ...]) -> np.ndarray:
        """Values broadcast to (*spatial_shape, nu, nu)."""
        if self.is_constant:
            return np.broadcast_to(
                self.values, spatial_shape + self.values.shape
            ).copy()
        if self.spatial_shape != tuple(spatial_shape):
            raise ValueError(
                f"field sampled on {self.spatial_shape}, expected {spatial_shape}"
            )
        return self.values

    def min_eigenvalue(self) -> float:
        return float(np.min(np.linalg.eigvalsh(self.values)))

    def map_eigenvalues(self, fn: Callable[[np.ndarray], np.ndarray]) -> "HermitianMatrixField":
        """Apply a real function to the spectrum at every sample."""
        w, q = np.linalg.eigh(self.values)
        fw = fn(w)
        out = np.einsum("...ab,...b,...cb->...ac", q, fw, np.conj(q))
        out = 0.5 * (out + np.conj(np.swapaxes(out, -1, -2)))
        return HermitianMatrixField(self.basis, out)


def constant_field(basis: MultiIndexBasis, matrix) -> HermitianMatrixField:
    matrix = np.asarray(matrix, dtype=complex)
    if matrix.ndim != 2:
        raise ValueError("constant field expects a single matrix")
    return HermitianMatrixField(basis, matrix)


def sampled_field(basis: MultiIndexBasis, values) -> HermitianMatrixField:
    values = np.asarray(values, dtype=complex)
    if values.ndim < 3:
        raise ValueError("sampled field expects (*spatial, nu, nu) values")
    return HermitianMatrixField(basis, values)


def polyharmonic_coefficients(basis: MultiIndexBasis) -> HermitianMatrixField:
    """Diagonal multinomial weights m!/alpha! making A(xi) = |xi|^(2m).

    The multinomial theorem gives sum_{|a|=m} (m!/a!) xi^(2a) = |xi|^(2m),
    so this is the canonical reference coefficient.
    """
    from math import factorial

    weights = [
        factorial(basis.m) / np.prod([factorial(e) for e in mi.exponents])
        for mi in basis.entries
    ]
    return constant_field(basis, np.diag(np.asarray(weights, dtype=float)))


def matrix_sqrt(a: np.ndarray) -> np.ndarray:
    """Principal square root of a Hermitian positive-definite matrix.

    Raises NonPositiveDefiniteError (with the offending eigenvalue) when the
    smallest eigenvalue is <= 0.
    """
    a = np.asarray(a, dtype=complex)
    w, q = np.linalg.eigh(a)
    if w.min() <= 0:
        raise NonPositiveDefiniteError(w.min())
    b = (q * np.sqrt(w)) @ np.conj(q.T)
    return 0.5 * (b + np.conj(b.T))


def matrix_inv_sqrt(a: np.ndarray) -> np.ndarray:
    """Inverse principal square root; same positivity contract as matrix_sqrt."""
    a = np.asarray(a, dtype=complex)
    w, q = np.linalg.eigh(a)
    if w.min() <= 0:
        raise NonPositiveDefiniteError(w.min())
    b = (q / np.sqrt(w)) @ np.conj(q.T)
    return 0.5 * (b + np.conj(b.T))


def sqrt_field(field: HermitianMatrixField) -> HermitianMatrixField:
    """Pointwise principal square root of a positive-definite field."""
    w = np.linalg.eigvalsh(field.values)
    if w.min() <= 0:
        bad = _failing_points(w)
        raise NonPositiveDefiniteError(w.min(), bad)
    return field.map_eigenvalues(np.sqrt)


def _failing_points(eigenvalues: np.ndarray) -> list:
    if eigenvalues.ndim == 1:
        return []
    mask = eigenvalues.min(axis=-1) <= 0
    return [tuple(int(i) for i in idx) for idx in np.argwhere(mask)]


def clip_coefficients(field: HermitianMatrixField, n) -> HermitianMatrixField:
    """Pointwise spectral clipping: each eigenvalue lambda -> max(1/n, min(lambda, n)).

    Eigenvectors are unchanged; the result is Hermitian with spectrum in
    [1/n, n], so the clipped field is uniformly elliptic by construction.
    Positive definiteness of the input is not required.
    """
    if n is None or n < 1:
        raise ValueError(f"clip level must be >= 1, got {n}")
    lo, hi = 1.0 / float(n), float(n)
    return field.map_eigenvalues(lambda w: np.clip(w, lo, hi))


def symbol_vector(b: np.ndarray, xi, basis: MultiIndexBasis) -> np.ndarray:
    """Vector symbol (b xi^(m))_alpha = sum_gamma b[alpha,gamma] xi^gamma."""
    b = np.asarray(b)
    if b.shape != (basis.nu, basis.nu):
        raise ValueError(f"matrix shape {b.shape} does not match nu={basis.nu}")
    mono = monomial_matrix(np.asarray(xi, dtype=float), basis)
    return mono @ b.T if mono.ndim > 1 else b @ mono


def principal_symbol(b: np.ndarray, xi, basis: MultiIndexBasis) -> np.ndarray:
    """Scalar symbol |b xi^(m)|^2; non-negative, homogeneous of degree 2m."""
    vec = symbol_vector(b, xi, basis)
    return np.sum(np.abs(vec) ** 2, axis=-1)


def spectral_symbol(
    b: np.ndarray, xi, g: Callable, basis: MultiIndexBasis
) -> np.ndarray:
    """Rank-one matrix symbol g(A) A^{-1} B (x) conj(B) at a single frequency.

    g must satisfy g(0) = 0; the xi = 0 singularity is removable and the
    zero matrix is returned there. The operator norm of the result equals
    |g(A(xi))|.
    """
    vec = symbol_vector(b, np.asarray(xi, dtype=float), basis)
    if vec.ndim != 1:
        raise ValueError("spectral_symbol takes one frequency; use spectral_symbol_lattice")
    a_val = float(np.sum(np.abs(vec) ** 2))
    if a_val == 0.0:
        return np.zeros((basis.nu, basis.nu), dtype=complex)
    return (float(g(a_val)) / a_val) * np.outer(vec, np.conj(vec))


@dataclass(frozen=True)
class SymbolEvaluation:
    """All Fourier-side symbol data at one frequency.

    ``principal`` equals |vector|^2 by construction; ``rank_one`` (present
    when a profile was supplied) is Hermitian PSD of rank at most one with
    operator norm |g(principal)|.
    """

    xi: np.ndarray
    vector: np.ndarray
    principal: float
    rank_one: np.ndarray | None = None


def evaluate_symbol(
    b: np.ndarray,
    xi,
    basis: MultiIndexBasis,
    g: Callable | None = None,
) -> SymbolEvaluation:
    """Bundle vector symbol, principal symbol, and optional rank-one symbol."""
    xi = np.asarray(xi, dtype=float)
    vec = symbol_vector(b, xi, basis)
    principal = float(np.sum(np.abs(vec) ** 2))
    rank_one = None if g is None else spectral_symbol(b, xi, g, basis)
    return SymbolEvaluation(xi=xi, vector=vec, principal=principal, rank_one=rank_one)


def spectral_symbol_lattice(
    b: np.ndarray, points: np.ndarray, g: Callable, basis: MultiIndexBasis
) -> np.ndarray:
    """spectral_symbol evaluated over a batch of frequencies: (..., nu, nu)."""
    mono = monomial_matrix(np.asarray(points, dtype=float), basis)  # (..., nu)
    vec = mono @ np.asarray(b).T
    a_val = np.sum(np.abs(vec) ** 2, axis=-1)
    gv = np.asarray(g(a_val), dtype=float)
    scale = np.zeros_like(a_val)
    nz = a_val > 0
    scale[nz] = gv[nz] / a_val[nz]
    return scale[..., None, None] * (vec[..., :, None] * np.conj(vec[..., None, :]))


@dataclass(frozen=True)
class VolumeEstimate:
    """Monte Carlo volume with its binomial standard error."""

    value: float
    stderr: float
    samples: int


def sublevel_bounding_radius(b: np.ndarray, basis: MultiIndexBasis) -> float:
    """Radius of a ball guaranteed to contain {A < 1}.

    From sum_{|g|=m} xi^(2g) >= (|xi|^2/N)^m one gets
    A(xi) >= lambda_min(a) (|xi|^2/N)^m, so {A < 1} is inside the ball of
    radius sqrt(N) lambda_min(a)^{-1/(2m)}.
    """
    a = np.asarray(b) @ np.conj(np.asarray(b).T)
    lam_min = float(np.min(np.linalg.eigvalsh(a)))
    if lam_min <= 0:
        raise NonPositiveDefiniteError(lam_min)
    return float(np.sqrt(basis.N)) * lam_min ** (-1.0 / (2 * basis.m))


def sublevel_volume(
    b: np.ndarray,
    basis: MultiIndexBasis,
    samples: int = 1_000_000,
    seed: int = 0,
    chunk: int = 1_000_000,
) -> VolumeEstimate:
    """Monte Carlo estimate of vol{xi : A(xi) < 1} with standard error.

    Samples uniformly in the enclosing cube of the rigorous bounding ball;
    deterministic for a fixed seed.
    """
    if samples < 1:
        raise ValueError("need at least one sample")
    radius = sublevel_bounding_radius(b, basis)
    box_volume = (2.0 * radius) ** basis.N
    rng = np.random.default_rng(seed)
    hits = 0
    remaining = samples
    b = np.asarray(b)
    while remaining > 0:
        take = min(chunk, remaining)
        pts = rng.uniform(-radius, radius, size=(take, basis.N))
        vals = np.sum(np.abs(monomial_matrix(pts, basis) @ b.T) ** 2, axis=-1)
        hits += int(np.count_nonzero(vals < 1.0))
        remaining -= take
    frac = hits / samples
    value = box_volume * frac
    stderr = box_volume * float(np.sqrt(max(frac * (1.0 - frac), 0.0) / samples))
    return VolumeEstimate(value=value, stderr=stderr, samples=samples)


def coarea_constant(
    b: np.ndarray,
    basis: MultiIndexBasis,
    samples: int = 1_000_000,
    seed: int = 0,
) -> float:
    """c_cov = (2pi)^{-N} (N/2m) vol{A < 1} under the unitary transform convention."""
    vol = sublevel_volume(b, basis, samples=samples, seed=seed)
    N, m = basis.N, basis.m
    return float((2.0 * np.pi) ** (-N) * (N / (2.0 * m)) * vol.value)


def lattice_symbol_integral(
    b: np.ndarray,
    basis: MultiIndexBasis,
    g: Callable,
    spacing: float,
    radius: float,
    chunk_rows: int = 64,
) -> float:
    """Riemann-sum approximation of (2pi)^{-N} integral g^2(A(xi)) dxi.

    Sums g^2(A) over the lattice spacing*Z^N intersected with [-radius, radius]^N,
    weighting each point by the cell volume. Used to validate the coarea
    constant by direct numerical equality.
    """
    N = basis.N
    axis = np.arange(-radius, radius + spacing / 2, spacing)
    b = np.asarray(b)
    cell = spacing**N / (2.0 * np.pi) ** N
    if N == 1:
        vals = np.sum(np.abs(monomial_matrix(axis[:, None], basis) @ b.T) ** 2, axis=-1)
        return cell * float(np.sum(np.asarray(g(vals)) ** 2))
    total = 0.0
    rest = np.meshgrid(*([axis] * (N - 1)), indexing="ij")
    rest_stack = np.stack([r.ravel() for r in rest], axis=-1)  # (M, N-1)
    for start in range(0, len(axis), chunk_rows):
        first = axis[start : start + chunk_rows]
        pts = np.concatenate(
            [
                np.repeat(first, len(rest_stack))[:, None],
                np.tile(rest_stack, (len(first), 1)),
            ],
            axis=1,
        )
        vals = np.sum(np.abs(monomial_matrix(pts, basis) @ b.T) ** 2, axis=-1)
        total += float(np.sum(np.asarray(g(vals)) ** 2))
    return cell * total
