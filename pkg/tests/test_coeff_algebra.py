import numpy as np
import pytest

from schatten_verify import (
    NonPositiveDefiniteError,
    clip_coefficients,
    coarea_constant,
    constant_field,
    enumerate_basis,
    lattice_symbol_integral,
    matrix_sqrt,
    polyharmonic_coefficients,
    principal_symbol,
    sampled_field,
    spectral_symbol,
    spectral_symbol_lattice,
    sublevel_volume,
    symbol_vector,
)
from schatten_verify.norms import WeightedNormSpec, resolvent_profile, resolvent_profile_norm

from helpers import random_hermitian, random_hermitian_pd


class TestMatrixSqrt:
    def test_identity(self):
        assert np.allclose(matrix_sqrt(np.eye(4)), np.eye(4))

    def test_diagonal(self):
        assert np.allclose(matrix_sqrt(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))

    def test_square_reproduces_input(self):
        rng = np.random.default_rng(10)
        for _ in range(100):
            nu = int(rng.integers(1, 11))
            a = random_hermitian_pd(rng, nu)
            b = matrix_sqrt(a)
            assert np.linalg.norm(b @ b - a) <= 1e-10 * np.linalg.norm(a)
            assert np.linalg.norm(b - np.conj(b.T)) <= 1e-12 * np.linalg.norm(b)

    def test_rejects_indefinite(self):
        a = np.diag([1.0, -0.25])
        with pytest.raises(NonPositiveDefiniteError) as err:
            matrix_sqrt(a)
        assert err.value.min_eigenvalue == pytest.approx(-0.25)


class TestClip:
    def test_identity_fixed_point(self):
        basis = enumerate_basis(2, 1)
        field = constant_field(basis, np.eye(2))
        assert np.allclose(clip_coefficients(field, 1).values, np.eye(2))

    def test_diagonal_example(self):
        basis = enumerate_basis(2, 1)
        field = constant_field(basis, np.diag([5.0, 0.01]))
        clipped = clip_coefficients(field, 2)
        assert np.allclose(clipped.values, np.diag([2.0, 0.5]))

    def test_spectrum_lands_in_band(self):
        rng = np.random.default_rng(11)
        basis = enumerate_basis(3, 2)  # nu = 6
        a = random_hermitian(rng, basis.nu)
        a -= 2.0 * np.eye(basis.nu)  # force a negative eigenvalue
        clipped = clip_coefficients(constant_field(basis, a), 10)
        w = np.linalg.eigvalsh(clipped.values)
        assert w.min() >= 0.1 - 1e-12 and w.max() <= 10 + 1e-12

    def test_idempotent(self):
        rng = np.random.default_rng(12)
        basis = enumerate_basis(2, 2)
        field = constant_field(basis, random_hermitian(rng, basis.nu))
        once = clip_coefficients(field, 3)
        twice = clip_coefficients(once, 3)
        assert np.allclose(
            np.linalg.eigvalsh(once.values), np.linalg.eigvalsh(twice.values), atol=1e-12
        )

    def test_converges_to_input_for_pd(self):
        rng = np.random.default_rng(13)
        basis = enumerate_basis(2, 1)
        a = random_hermitian_pd(rng, basis.nu, spread=(0.3, 5.0))
        field = constant_field(basis, a)
        clipped = clip_coefficients(field, 8)  # 8 > 5 and 1/8 < 0.3
        assert np.abs(clipped.values - a).max() < 1e-12

    def test_rejects_level_zero(self):
        basis = enumerate_basis(1, 1)
        with pytest.raises(ValueError):
            clip_coefficients(constant_field(basis, np.eye(1)), 0)


class TestSymbols:
    def test_identity_coefficient_single_variable(self):
        basis = enumerate_basis(1, 1)
        assert symbol_vector(np.eye(1), np.array([2.5]), basis)[0] == pytest.approx(2.5)

    def test_identity_coefficient_gives_monomials(self):
        basis = enumerate_basis(2, 2)
        xi = np.array([1.5, -2.0])
        vec = symbol_vector(np.eye(basis.nu), xi, basis)
        expected = [xi[0] ** mi.exponents[0] * xi[1] ** mi.exponents[1] for mi in basis.entries]
        assert np.allclose(vec, expected)

    def test_polyharmonic_squared_norm(self):
        basis = enumerate_basis(2, 1)
        b = matrix_sqrt(polyharmonic_coefficients(basis).constant_matrix())
        vec = symbol_vector(b, np.array([3.0, 4.0]), basis)
        assert np.sum(np.abs(vec) ** 2) == pytest.approx(25.0)

    def test_principal_symbol_at_zero(self):
        basis = enumerate_basis(2, 2)
        b = matrix_sqrt(polyharmonic_coefficients(basis).constant_matrix())
        assert principal_symbol(b, np.zeros(2), basis) == 0.0

    @pytest.mark.parametrize("N,m", [(1, 1), (2, 1), (2, 2), (3, 2)])
    def test_polyharmonic_closed_form(self, N, m):
        basis = enumerate_basis(N, m)
        b = matrix_sqrt(polyharmonic_coefficients(basis).constant_matrix())
        rng = np.random.default_rng(14)
        for xi in rng.normal(size=(10, N)):
            expected = np.sum(xi**2) ** m
            assert principal_symbol(b, xi, basis) == pytest.approx(expected, rel=1e-12)

    def test_homogeneity(self):
        rng = np.random.default_rng(15)
        basis = enumerate_basis(3, 2)
        b = matrix_sqrt(random_hermitian_pd(rng, basis.nu))
        xi = rng.normal(size=3)
        ratio = principal_symbol(b, 2.0 * xi, basis) / principal_symbol(b, xi, basis)
        assert ratio == pytest.approx(2.0 ** (2 * basis.m), rel=1e-12)


class TestSpectralSymbol:
    def test_zero_frequency_is_zero_matrix(self):
        basis = enumerate_basis(2, 1)
        b = np.eye(basis.nu)
        out = spectral_symbol(b, np.zeros(2), resolvent_profile, basis)
        assert np.all(out == 0)

    def test_scalar_reduction(self):
        basis = enumerate_basis(1, 2)
        b = np.array([[1.7]])
        xi = np.array([0.9])
        out = spectral_symbol(b, xi, resolvent_profile, basis)
        a_val = (1.7 * 0.9**2) ** 2
        assert out[0, 0] == pytest.approx(resolvent_profile(a_val), rel=1e-12)

    def test_operator_norm_equals_profile_of_symbol(self):
        rng = np.random.default_rng(16)
        basis = enumerate_basis(2, 2)
        b = matrix_sqrt(random_hermitian_pd(rng, basis.nu))
        for xi in rng.normal(size=(10, 2)):
            out = spectral_symbol(b, xi, resolvent_profile, basis)
            a_val = principal_symbol(b, xi, basis)
            top = np.linalg.svd(out, compute_uv=False)[0]
            assert abs(top - resolvent_profile(a_val)) <= 1e-12

    def test_rank_at_most_one_and_psd(self):
        rng = np.random.default_rng(17)
        basis = enumerate_basis(3, 1)
        b = matrix_sqrt(random_hermitian_pd(rng, basis.nu))
        pts = rng.normal(size=(25, 3))
        lattice = spectral_symbol_lattice(b, pts, resolvent_profile, basis)
        s = np.linalg.svd(lattice, compute_uv=False)
        assert np.all(s[:, 1] <= 1e-12 * np.maximum(s[:, 0], 1e-300))
        w = np.linalg.eigvalsh(lattice)
        assert w.min() >= -1e-12


def test_evaluate_symbol_bundle():
    from schatten_verify import evaluate_symbol

    rng = np.random.default_rng(18)
    basis = enumerate_basis(2, 1)
    b = matrix_sqrt(random_hermitian_pd(rng, basis.nu))
    xi = rng.normal(size=2)
    ev = evaluate_symbol(b, xi, basis, g=resolvent_profile)
    assert ev.principal == pytest.approx(np.sum(np.abs(ev.vector) ** 2), rel=1e-12)
    assert np.allclose(ev.rank_one, np.conj(ev.rank_one.T))
    s = np.linalg.svd(ev.rank_one, compute_uv=False)
    assert s[0] == pytest.approx(resolvent_profile(ev.principal), rel=1e-12)
    assert s[1] <= 1e-12 * s[0]


class TestSublevelVolume:
    def test_interval(self):
        basis = enumerate_basis(1, 1)
        b = np.eye(1)
        est = sublevel_volume(b, basis, samples=10_000, seed=0)
        assert est.value == pytest.approx(2.0)

    def test_unit_disk(self):
        basis = enumerate_basis(2, 1)
        b = matrix_sqrt(polyharmonic_coefficients(basis).constant_matrix())
        est = sublevel_volume(b, basis, samples=1_000_000, seed=101)
        assert abs(est.value - np.pi) <= 3.0 * est.stderr

    def test_quartic_sublevel_is_still_the_disk(self):
        basis = enumerate_basis(2, 2)
        b = matrix_sqrt(polyharmonic_coefficients(basis).constant_matrix())
        est = sublevel_volume(b, basis, samples=1_000_000, seed=102)
        assert abs(est.value - np.pi) <= 3.0 * est.stderr

    def test_scaling_of_coefficient(self):
        # replacing b by lam*b scales the sublevel volume by lam^(-N/m)
        basis = enumerate_basis(2, 1)
        b = matrix_sqrt(polyharmonic_coefficients(basis).constant_matrix())
        lam = 1.7
        est1 = sublevel_volume(b, basis, samples=400_000, seed=103)
        est2 = sublevel_volume(lam * b, basis, samples=400_000, seed=103)
        expected = est1.value * lam ** (-basis.N / basis.m)
        assert abs(est2.value - expected) <= 3.0 * (est2.stderr + est1.stderr)


class TestCoareaConstant:
    def test_disk_value(self):
        basis = enumerate_basis(2, 1)
        b = matrix_sqrt(polyharmonic_coefficients(basis).constant_matrix())
        c = coarea_constant(b, basis, samples=1_000_000, seed=104)
        assert c == pytest.approx(1.0 / (4.0 * np.pi), rel=5e-3)

    def test_interval_value(self):
        basis = enumerate_basis(1, 1)
        c = coarea_constant(np.eye(1), basis, samples=10_000, seed=105)
        assert c == pytest.approx(1.0 / (2.0 * np.pi), rel=1e-12)

    def test_lattice_identity(self):
        # (2pi)^-N integral g^2(A) dxi == c_cov * (||g||_2^*)^2, checked by
        # a fine lattice sum against the closed forms
        basis = enumerate_basis(1, 1)
        lhs = lattice_symbol_integral(
            np.eye(1), basis, resolvent_profile, spacing=0.01, radius=1000.0
        )
        gstar = resolvent_profile_norm(WeightedNormSpec(p=2, N=1, m=1))
        rhs = 1.0 / (2.0 * np.pi) * gstar**2
        assert lhs == pytest.approx(rhs, rel=0.02)


def test_field_rejects_non_hermitian():
    basis = enumerate_basis(2, 1)
    with pytest.raises(ValueError):
        constant_field(basis, np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_sampled_field_shape_check():
    basis = enumerate_basis(2, 1)
    with pytest.raises(ValueError):
        sampled_field(basis, np.zeros((4, 3, 3)))
