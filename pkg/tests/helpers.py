"""Shared construction helpers for the test suite."""

import numpy as np

from schatten_verify import (
    enumerate_basis,
    polyharmonic_coefficients,
    sampled_field,
)


def random_hermitian(rng, nu):
    g = rng.normal(size=(nu, nu)) + 1j * rng.normal(size=(nu, nu))
    return 0.5 * (g + np.conj(g.T))


def random_hermitian_pd(rng, nu, spread=(0.5, 3.0)):
    g = rng.normal(size=(nu, nu)) + 1j * rng.normal(size=(nu, nu))
    q = np.linalg.qr(g)[0]
    w = rng.uniform(*spread, size=nu)
    return (q * w) @ np.conj(q.T)


def box_perturbed_field(grid, basis, a, amplitude, rel_width=0.125):
    """a * (1 + amplitude * indicator of a centered box of width rel_width*L)."""
    x = grid.points()
    inside = np.all(np.abs(x) < rel_width * grid.L / 2.0, axis=-1)
    scale = 1.0 + amplitude * inside.astype(float)
    vals = a.constant_matrix()[(None,) * grid.N] * scale[..., None, None]
    return sampled_field(basis, np.ascontiguousarray(vals))


def bump_perturbed_field(grid, basis, a, amplitude, rel_radius=0.25, center=None):
    """a * (1 + amplitude * smooth bump of radius rel_radius*L)."""
    x = grid.points()
    c = np.zeros(grid.N) if center is None else np.asarray(center, dtype=float)
    d = (x - c + grid.L / 2.0) % grid.L - grid.L / 2.0
    s2 = np.sum(d**2, axis=-1) / (rel_radius * grid.L) ** 2
    prof = np.zeros_like(s2)
    prof[s2 < 1.0] = np.exp(1.0 - 1.0 / (1.0 - s2[s2 < 1.0]))
    scale = 1.0 + amplitude * prof
    vals = a.constant_matrix()[(None,) * grid.N] * scale[..., None, None]
    return sampled_field(basis, np.ascontiguousarray(vals))


def polyharmonic_setup(N, m):
    basis = enumerate_basis(N, m)
    return basis, polyharmonic_coefficients(basis)
