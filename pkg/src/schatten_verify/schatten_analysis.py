"""Resolvents, Schatten norms, and the exact operator identities.

Everything here works on dense matrices obtained from small-grid
discretizations; Schatten norms come from full singular value
decompositions, which at desk scale is both exact and free of the failure
modes of iterative methods.

Verified identities (all exact in finite dimensions):

* the resolvent partition (S*S + 1)^{-1} + S* (SS* + 1)^{-1} S = 1 for an
  arbitrary rectangular S;
* the factorization of a resolvent difference through the coefficient
  difference: the direct difference of (op + 1)^{-1} matrices equals the
  chain  D* at^{1/2} (Gt+1)^{-1} at^{-1/2} (a - at) a^{-1/2} (G+1)^{-1}
  a^{1/2} D, where D is the derivative stack and G, Gt the channel Grams;
* the polar decomposition a^{1/2} D = G^{1/2} U with U a partial isometry;
* the translation-invariant convolution kernel of profile(G) for constant
  coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .coeff_algebra import (
    HermitianMatrixField,
    matrix_inv_sqrt,
    matrix_sqrt,
    spectral_symbol_lattice,
    sqrt_field,
)
from .errors import NonPositiveDefiniteError
from .torus_operator import (
    DEFAULT_DENSE_CAP,
    LinearOperatorRep,
    TorusGrid,
    assemble_constant_coefficient,
    assemble_derivative_factor,
    assemble_variable_coefficient,
    block_multiplication_matrix,
    derivative_operator,
    materialize,
)

__all__ = [
    "SingularSpectrum",
    "BoundCheck",
    "PolarCheck",
    "singular_spectrum",
    "schatten_norm",
    "schatten_norm_from_values",
    "operator_norm",
    "resolvent",
    "resolvent_difference",
    "matrix_function",
    "deift_residual",
    "factorization_residual",
    "polar_decomposition_check",
    "convolution_kernel",
    "operator_norm_check",
]


@dataclass(frozen=True)
class SingularSpectrum:
    """Non-increasing singular values of a dense matrix."""

    values: np.ndarray
    shape: tuple[int, int]

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or np.any(v < 0) or np.any(np.diff(v) > 0):
            raise ValueError("singular values must be a non-increasing 1-D array >= 0")
        object.__setattr__(self, "values", v)


def singular_spectrum(matrix: np.ndarray) -> SingularSpectrum:
    matrix = np.asarray(matrix)
    s = np.linalg.svd(matrix, compute_uv=False)
    return SingularSpectrum(values=s, shape=matrix.shape)


def schatten_norm_from_values(values: np.ndarray, p: float) -> float:
    if p != np.inf and p < 1:
        raise ValueError(f"Schatten exponent must be >= 1 or inf, got {p}")
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return 0.0
    if p == np.inf:
        return float(values.max())
    return float(np.sum(values**p) ** (1.0 / p))


def schatten_norm(matrix: np.ndarray, p: float) -> float:
    """(sum s_j^p)^(1/p) from the full SVD; p = inf is the operator norm."""
    return schatten_norm_from_values(singular_spectrum(matrix).values, p)


def operator_norm(matrix: np.ndarray) -> float:
    return schatten_norm(matrix, np.inf)


def _dense_of(op, cap: int) -> np.ndarray:
    if isinstance(op, LinearOperatorRep):
        return op.dense(cap=cap)
    return np.asarray(op, dtype=complex)


def resolvent(op, cap: int = DEFAULT_DENSE_CAP) -> np.ndarray:
    """(op + 1)^{-1} by dense solve; accepts a rep or a dense matrix."""
    m = _dense_of(op, cap)
    m = 0.5 * (m + np.conj(m.T))
    return np.linalg.solve(m + np.eye(m.shape[0]), np.eye(m.shape[0], dtype=complex))


def resolvent_difference(op_tilde, op, cap: int = DEFAULT_DENSE_CAP) -> np.ndarray:
    return resolvent(op_tilde, cap) - resolvent(op, cap)


def matrix_function(
    matrix: np.ndarray,
    fn: Callable,
    spectrum_floor: float | None = None,
    spectrum_snap_rtol: float | None = None,
) -> np.ndarray:
    """fn applied to a Hermitian matrix through its eigendecomposition.

    spectrum_floor clips eigenvalues from below first (e.g. 0.0 for
    functions defined on [0, inf) applied to a semidefinite matrix whose
    smallest eigenvalues are roundoff-negative). spectrum_snap_rtol sends
    eigenvalues below rtol * max|eigenvalue| to exactly 0; needed when fn
    has infinite slope at 0 (sqrt-like profiles) and the zero eigenspace is
    structural, since fn(roundoff) would otherwise be amplified to
    sqrt(roundoff).
    """
    m = np.asarray(matrix, dtype=complex)
    m = 0.5 * (m + np.conj(m.T))
    w, q = np.linalg.eigh(m)
    if spectrum_snap_rtol is not None and w.size:
        w = np.where(np.abs(w) <= spectrum_snap_rtol * np.abs(w).max(), 0.0, w)
    if spectrum_floor is not None:
        w = np.maximum(w, spectrum_floor)
    fw = np.asarray(fn(w), dtype=complex)
    return (q * fw) @ np.conj(q.T)


def spectral_profile_operator(gram_dense: np.ndarray, profile: Callable) -> np.ndarray:
    """profile applied to a PSD Gram matrix, with roundoff eigenvalues snapped to 0."""
    return matrix_function(
        gram_dense, profile, spectrum_floor=0.0, spectrum_snap_rtol=1e-12
    )


def deift_residual(s_matrix: np.ndarray) -> float:
    """Operator norm of (S*S+1)^{-1} + S*(SS*+1)^{-1}S - 1."""
    s = np.asarray(s_matrix, dtype=complex)
    cols = s.shape[1]
    rows = s.shape[0]
    sts = np.conj(s.T) @ s
    sst = s @ np.conj(s.T)
    r_in = np.linalg.solve(sts + np.eye(cols), np.eye(cols, dtype=complex))
    r_out = np.linalg.solve(sst + np.eye(rows), np.eye(rows, dtype=complex))
    resid = r_in + np.conj(s.T) @ r_out @ s - np.eye(cols)
    return operator_norm(resid)


def _field_power(values: np.ndarray, power: float) -> np.ndarray:
    w, q = np.linalg.eigh(values)
    if w.min() <= 0:
        mask = w.min(axis=-1) <= 0
        bad = [tuple(int(i) for i in idx) for idx in np.argwhere(mask)] if w.ndim > 1 else []
        raise NonPositiveDefiniteError(w.min(), bad)
    return np.einsum("...ab,...b,...cb->...ac", q, w**power, np.conj(q))


def factorization_residual(
    a: HermitianMatrixField,
    a_tilde: HermitianMatrixField,
    grid: TorusGrid,
    cap: int = DEFAULT_DENSE_CAP,
) -> float:
    """Residual between the direct resolvent difference and its factorization.

    Path 1 materializes both operators and subtracts their resolvents.
    Path 2 evaluates the coefficient-side chain

        D* at^{1/2} (Gt+1)^{-1} at^{-1/2} (a - at) a^{-1/2} (G+1)^{-1} a^{1/2} D

    built from dense blocks. Returns the relative operator-norm residual,
    or the absolute residual when the direct difference is numerically zero.
    """
    basis = a.basis
    a_mat = a.constant_matrix()
    at_vals = a_tilde.sampled_on(grid.spatial_shape)

    deriv = materialize(derivative_operator(grid, basis), cap=cap)
    sqrt_a_blk = block_multiplication_matrix(matrix_sqrt(a_mat), grid)
    isqrt_a_blk = block_multiplication_matrix(matrix_inv_sqrt(a_mat), grid)
    sqrt_at_blk = block_multiplication_matrix(_field_power(at_vals, 0.5), grid)
    isqrt_at_blk = block_multiplication_matrix(_field_power(at_vals, -0.5), grid)
    diff_blk = block_multiplication_matrix(a_mat - at_vals, grid)

    gram = deriv @ np.conj(deriv.T)
    eye = np.eye(gram.shape[0], dtype=complex)
    gram_a = sqrt_a_blk @ gram @ sqrt_a_blk
    gram_at = sqrt_at_blk @ gram @ sqrt_at_blk
    res_a = np.linalg.solve(gram_a + eye, eye)
    res_at = np.linalg.solve(gram_at + eye, eye)

    chain = (
        np.conj(deriv.T)
        @ sqrt_at_blk
        @ res_at
        @ isqrt_at_blk
        @ diff_blk
        @ isqrt_a_blk
        @ res_a
        @ sqrt_a_blk
        @ deriv
    )

    direct = resolvent_difference(
        assemble_variable_coefficient(a_tilde, grid),
        assemble_constant_coefficient(a, grid),
        cap=cap,
    )
    gap = operator_norm(direct - chain)
    scale = operator_norm(direct)
    if scale <= 1e-14:
        return gap
    return gap / scale


@dataclass(frozen=True)
class PolarCheck:
    """Residuals of the polar decomposition factor = gram^{1/2} . isometry."""

    factor_residual: float
    isometry_residual: float
    rank: int
    partial_isometry: np.ndarray


def polar_decomposition_check(
    a: HermitianMatrixField,
    grid: TorusGrid,
    cap: int = DEFAULT_DENSE_CAP,
    rank_rtol: float = 1e-11,
) -> PolarCheck:
    """Build the partial isometry from the SVD of the derivative factor.

    With T the factor and G = T T*, checks ||T - G^{1/2} U|| and
    ||U U* U - U||; the truncation rank drops the zero singular values
    coming from the factor's kernel (the constants).
    """
    factor = materialize(assemble_derivative_factor(sqrt_field(a), grid), cap=cap)
    gram = factor @ np.conj(factor.T)
    gram_sqrt = matrix_function(gram, np.sqrt, spectrum_floor=0.0)
    w, s, vh = np.linalg.svd(factor, full_matrices=False)
    rank = int(np.count_nonzero(s > rank_rtol * s[0]))
    isometry = w[:, :rank] @ vh[:rank, :]
    res_factor = operator_norm(factor - gram_sqrt @ isometry)
    res_isometry = operator_norm(
        isometry @ np.conj(isometry.T) @ isometry - isometry
    )
    return PolarCheck(
        factor_residual=res_factor,
        isometry_residual=res_isometry,
        rank=rank,
        partial_isometry=isometry,
    )


def convolution_kernel(
    b: HermitianMatrixField, grid: TorusGrid, profile: Callable
) -> np.ndarray:
    """Translation-invariant kernel of profile(channel gram), constant coefficients.

    Returns k with shape (*spatial, nu, nu), indexed by the periodic
    difference coordinate; the dense matrix entry at (x, alpha), (y, beta)
    of profile(gram) equals h^N * k[x - y][alpha, beta].
    """
    b_mat = b.constant_matrix()
    lattice = spectral_symbol_lattice(b_mat, grid.frequency_points(), profile, b.basis)
    spatial_axes = tuple(range(grid.N))
    return np.fft.ifftn(lattice, axes=spatial_axes) / grid.cell_volume


@dataclass(frozen=True)
class BoundCheck:
    """One verified inequality instance lhs <= constant * rhs."""

    lhs: float
    rhs: float
    constant: float
    context: dict = field(default_factory=dict)

    @property
    def ratio(self) -> float:
        if self.rhs > 0 and self.constant > 0:
            return self.lhs / (self.constant * self.rhs)
        return 0.0 if self.lhs <= 1e-12 else float("inf")


def operator_norm_check(op_tilde, op, v_sup: float, cap: int = DEFAULT_DENSE_CAP) -> BoundCheck:
    """Check ||resolvent difference|| <= (1/4) * sup-norm of the perturbation.

    The 1/4 is the product of the two factors of sup g = 1/2 in the
    factorized difference.
    """
    lhs = operator_norm(resolvent_difference(op_tilde, op, cap=cap))
    return BoundCheck(lhs=lhs, rhs=float(v_sup), constant=0.25, context={"kind": "operator_norm"})
