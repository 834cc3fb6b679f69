"""
Tests del núcleo espectral: retícula, campos, transformadas, normas,
inversión de la PV, jacobiano desaliasado y simetría impar
"""

import math
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

sys.path.insert(0, str(Path(__file__).resolve().parent))
from QG.errors import DealiasingError, LatticeMismatchError, SpectralFieldError
from QG.spectral_core import (
    LayerState,
    SpectralField,
    apply_fractional_power,
    derivative,
    forward_pv,
    fourier_mode,
    from_grid,
    inner_product,
    invert_pv,
    jacobian,
    jacobian_coeffs,
    odd_residual,
    project_odd_y,
    random_field,
    sobolev_norm,
    to_grid,
    wavenumber_lattice,
)

TWO_PI = 2.0 * math.pi


def _grid(lattice):
    x = lattice.grid
    return np.meshgrid(x, x, indexing="ij")


# ============================================================================
# RETÍCULA
# ============================================================================

class TestWavenumberLattice:
    def test_default_collocation_is_three_k(self):
        lattice = wavenumber_lattice(TWO_PI, 4)
        assert lattice.N == 12
        assert lattice.shape == (9, 9)
        assert lattice.k1[0, 0] == -4 and lattice.k2[-1, -1] == 4

    def test_smallest_lattice(self):
        lattice = wavenumber_lattice(1.0, 1)
        magnitudes = np.sqrt(lattice.mu[lattice.mask])
        assert sorted(set(np.round(magnitudes, 12))) == [
            round(TWO_PI, 12), round(TWO_PI * math.sqrt(2.0), 12)
        ]

    def test_physical_wavenumbers(self):
        lattice = wavenumber_lattice(3.0, 2)
        assert lattice.kx[lattice.index((1, 0))] == pytest.approx(TWO_PI / 3.0)
        assert lattice.mu[lattice.index((1, 1))] == pytest.approx(2.0 * (TWO_PI / 3.0) ** 2)

    def test_rejects_short_period(self):
        with pytest.raises(ValueError, match="L debe ser"):
            wavenumber_lattice(0.5, 4)

    def test_rejects_zero_truncation(self):
        with pytest.raises(ValueError):
            wavenumber_lattice(TWO_PI, 0)

    def test_rejects_aliasing_grid(self):
        with pytest.raises(DealiasingError):
            wavenumber_lattice(TWO_PI, 4, 11)

    def test_dealias_size_pads_exact_three_k(self):
        assert wavenumber_lattice(TWO_PI, 4).dealias_size == 13
        assert wavenumber_lattice(TWO_PI, 4, 20).dealias_size == 20


# ============================================================================
# CAMPOS ESPECTRALES
# ============================================================================

class TestSpectralField:
    def test_rejects_nonzero_mean(self):
        lattice = wavenumber_lattice(TWO_PI, 2)
        coeffs = np.zeros(lattice.shape, dtype=complex)
        coeffs[2, 2] = 1.0
        with pytest.raises(SpectralFieldError, match="media nula"):
            SpectralField(lattice, coeffs)

    def test_rejects_non_hermitian(self):
        lattice = wavenumber_lattice(TWO_PI, 2)
        coeffs = np.zeros(lattice.shape, dtype=complex)
        coeffs[lattice.index((1, 0))] = 1.0
        with pytest.raises(SpectralFieldError, match="hermítica"):
            SpectralField(lattice, coeffs)

    def test_rejects_nan(self):
        lattice = wavenumber_lattice(TWO_PI, 2)
        coeffs = np.zeros(lattice.shape, dtype=complex)
        coeffs[lattice.index((1, 0))] = np.nan
        with pytest.raises(SpectralFieldError):
            SpectralField(lattice, coeffs)

    def test_rejects_wrong_shape(self):
        lattice = wavenumber_lattice(TWO_PI, 2)
        with pytest.raises(SpectralFieldError):
            SpectralField(lattice, np.zeros((3, 3), dtype=complex))

    def test_coefficients_are_read_only(self):
        u = fourier_mode(wavenumber_lattice(TWO_PI, 2), (1, 1), 0.5)
        with pytest.raises(ValueError):
            u.coeffs[0, 0] = 1.0

    def test_mixed_lattices_rejected(self):
        u = fourier_mode(wavenumber_lattice(TWO_PI, 2), (1, 0))
        v = fourier_mode(wavenumber_lattice(TWO_PI, 3), (1, 0))
        with pytest.raises(LatticeMismatchError):
            u + v
        with pytest.raises(LatticeMismatchError):
            invert_pv(u, v)

    def test_from_coeffs_projects(self):
        lattice = wavenumber_lattice(TWO_PI, 2)
        coeffs = np.zeros(lattice.shape, dtype=complex)
        coeffs[lattice.index((1, 0))] = 1.0
        coeffs[2, 2] = 3.0
        u = SpectralField.from_coeffs(lattice, coeffs)
        assert u.coefficient((1, 0)) == 0.5
        assert u.coefficient((-1, 0)) == 0.5
        assert u.coefficient((0, 0)) == 0.0

    def test_random_field_band(self):
        lattice = wavenumber_lattice(TWO_PI, 6)
        u = random_field(lattice, np.random.default_rng(3), (2, 3))
        kabs = np.hypot(lattice.k1, lattice.k2)
        outside = (kabs < 2) | (kabs > 3)
        assert np.all(u.coeffs[outside] == 0)
        assert np.any(u.coeffs[~outside] != 0)


# ============================================================================
# TRANSFORMADAS
# ============================================================================

class TestTransforms:
    def test_cosine_mode_on_grid(self):
        lattice = wavenumber_lattice(5.0, 3)
        X, Y = _grid(lattice)
        u = fourier_mode(lattice, (1, 2), 0.5)
        expected = np.cos(TWO_PI * (X + 2 * Y) / 5.0)
        assert np.max(np.abs(to_grid(u) - expected)) < 1e-13

    def test_from_grid_recovers_field(self):
        lattice = wavenumber_lattice(TWO_PI, 5)
        u = random_field(lattice, np.random.default_rng(0))
        back = from_grid(lattice, to_grid(u))
        assert np.max(np.abs(back.coeffs - u.coeffs)) < 1e-12 * np.max(np.abs(u.coeffs))

    def test_derivative_of_cosine(self):
        lattice = wavenumber_lattice(TWO_PI, 3)
        X, Y = _grid(lattice)
        u = fourier_mode(lattice, (2, 1), 0.5)
        assert np.max(np.abs(to_grid(derivative(u, 0)) + 2.0 * np.sin(2 * X + Y))) < 1e-13
        assert np.max(np.abs(to_grid(derivative(u, 1)) + np.sin(2 * X + Y))) < 1e-13


# ============================================================================
# POTENCIAS FRACCIONARIAS Y NORMAS
# ============================================================================

class TestNorms:
    def test_zero_power_is_identity(self):
        u = random_field(wavenumber_lattice(7.0, 4), np.random.default_rng(1))
        assert np.array_equal(apply_fractional_power(u, 0).coeffs, u.coeffs)

    def test_unit_mode_power(self):
        u = fourier_mode(wavenumber_lattice(TWO_PI, 2), (1, 0), 0.3)
        assert apply_fractional_power(u, 2).coefficient((1, 0)) == pytest.approx(0.3)

    def test_inverse_powers(self):
        u = random_field(wavenumber_lattice(3.0, 4), np.random.default_rng(2))
        back = apply_fractional_power(apply_fractional_power(u, 2), -2)
        assert np.max(np.abs(back.coeffs - u.coeffs)) <= 1e-14 * np.max(np.abs(u.coeffs)) * 10

    def test_zero_field(self):
        assert sobolev_norm(SpectralField.zeros(wavenumber_lattice(TWO_PI, 2)), 1.5) == 0.0

    @pytest.mark.parametrize("s", [0.0, 0.5, 1.0, 3.0])
    def test_cosine_parseval(self, s):
        lattice = wavenumber_lattice(TWO_PI, 3)
        u = fourier_mode(lattice, (1, 0), 0.5)
        assert sobolev_norm(u, s) ** 2 == pytest.approx(2.0 * math.pi ** 2, rel=1e-14)
        quadrature = np.sum(to_grid(u) ** 2) * lattice.spacing ** 2
        assert quadrature == pytest.approx(2.0 * math.pi ** 2, rel=1e-12)

    def test_norm_chaining(self):
        u = random_field(wavenumber_lattice(4.0, 5), np.random.default_rng(4))
        direct = sobolev_norm(u, 1)
        chained = sobolev_norm(apply_fractional_power(u, 1), 0)
        assert chained == pytest.approx(direct, rel=1e-12)

    def test_l2_norm_matches_inner_product(self):
        u = random_field(wavenumber_lattice(4.0, 5), np.random.default_rng(5))
        assert inner_product(u, u) == pytest.approx(sobolev_norm(u, 0) ** 2, rel=1e-13)


# ============================================================================
# INVERSIÓN DE LA PV
# ============================================================================

class TestPVInversion:
    def test_zero_state(self):
        lattice = wavenumber_lattice(TWO_PI, 3)
        psi1, psi2 = invert_pv(SpectralField.zeros(lattice), SpectralField.zeros(lattice))
        assert not psi1.coeffs.any() and not psi2.coeffs.any()

    def test_single_mode(self):
        lattice = wavenumber_lattice(TWO_PI, 3)
        psi1, psi2 = invert_pv(fourier_mode(lattice, (1, 0), 1.0), SpectralField.zeros(lattice))
        assert psi1.coefficient((1, 0)) == pytest.approx(-0.75)
        assert psi2.coefficient((1, 0)) == pytest.approx(-0.25)
        q1, q2 = forward_pv(psi1, psi2)
        assert q1.coefficient((1, 0)) == pytest.approx(1.0, abs=1e-15)
        assert abs(q2.coefficient((1, 0))) < 1e-15

    @settings(deadline=None, max_examples=100)
    @given(seed=st.integers(0, 2 ** 32 - 1), K=st.sampled_from([4, 8, 16]),
           L=st.floats(1.0, 50.0))
    def test_forward_map_inverts(self, seed, K, L):
        lattice = wavenumber_lattice(L, K)
        rng = np.random.default_rng(seed)
        q1, q2 = random_field(lattice, rng), random_field(lattice, rng)
        r1, r2 = forward_pv(*invert_pv(q1, q2))
        scale = max(np.max(np.abs(q1.coeffs)), np.max(np.abs(q2.coeffs)))
        assert np.max(np.abs(r1.coeffs - q1.coeffs)) <= 1e-12 * scale
        assert np.max(np.abs(r2.coeffs - q2.coeffs)) <= 1e-12 * scale


# ============================================================================
# DESIGUALDADES DE NORMAS
# ============================================================================

class TestNormInequalities:
    @settings(deadline=None, max_examples=100)
    @given(seed=st.integers(0, 2 ** 32 - 1), K=st.sampled_from([4, 8, 16]),
           L=st.floats(1.0, 50.0))
    def test_elliptic_regularity(self, seed, K, L):
        lattice = wavenumber_lattice(L, K)
        rng = np.random.default_rng(seed)
        q1, q2 = random_field(lattice, rng), random_field(lattice, rng)
        psi1, psi2 = invert_pv(q1, q2)
        a_psi = sobolev_norm(psi1, 2) ** 2 + sobolev_norm(psi2, 2) ** 2
        pv = sobolev_norm(q1, 0) ** 2 + sobolev_norm(q2, 0) ** 2
        assert 0.25 * a_psi <= pv
        assert pv <= 4.0 * (1.0 + L ** 4) * a_psi

    @settings(deadline=None, max_examples=100)
    @given(seed=st.integers(0, 2 ** 32 - 1), K=st.sampled_from([4, 8, 16]),
           L=st.floats(1.0, 50.0))
    def test_interpolation(self, seed, K, L):
        phi = random_field(wavenumber_lattice(L, K), np.random.default_rng(seed))
        bound = math.sqrt(sobolev_norm(phi, 1) * sobolev_norm(phi, 3))
        assert sobolev_norm(phi, 2) <= bound * (1.0 + 1e-12)

    def test_interpolation_is_sharp_on_one_shell(self):
        phi = fourier_mode(wavenumber_lattice(5.0, 4), (1, 2), 0.7 - 0.2j)
        bound = math.sqrt(sobolev_norm(phi, 1) * sobolev_norm(phi, 3))
        assert sobolev_norm(phi, 2) == pytest.approx(bound, rel=1e-12)


# ============================================================================
# JACOBIANO
# ============================================================================

class TestJacobian:
    def test_self_jacobian_vanishes(self):
        psi = random_field(wavenumber_lattice(TWO_PI, 6), np.random.default_rng(6))
        J = jacobian(psi, psi)
        assert np.max(np.abs(J.coeffs)) <= 1e-13 * sobolev_norm(psi, 1) ** 2

    def test_sine_product(self):
        lattice = wavenumber_lattice(TWO_PI, 3)
        X, Y = _grid(lattice)
        sin_x = fourier_mode(lattice, (1, 0), -0.5j)
        sin_y = fourier_mode(lattice, (0, 1), -0.5j)
        J = jacobian(sin_x, sin_y)
        assert np.max(np.abs(to_grid(J) - np.cos(X) * np.cos(Y))) < 1e-13
        mask = np.abs(J.coeffs) > 1e-14
        nonzero = set(zip(lattice.k1[mask].tolist(), lattice.k2[mask].tolist()))
        assert nonzero == {(1, 1), (1, -1), (-1, 1), (-1, -1)}

    def test_mean_zero(self):
        lattice = wavenumber_lattice(TWO_PI, 5)
        rng = np.random.default_rng(7)
        J = jacobian(random_field(lattice, rng), random_field(lattice, rng))
        assert J.coefficient((0, 0)) == 0.0

    @settings(deadline=None, max_examples=30)
    @given(seed=st.integers(0, 2 ** 32 - 1), K=st.sampled_from([4, 6, 8]), L=st.floats(1.0, 20.0))
    def test_skew_property(self, seed, K, L):
        lattice = wavenumber_lattice(L, K)
        rng = np.random.default_rng(seed)
        psi, q = random_field(lattice, rng), random_field(lattice, rng)
        bound = sobolev_norm(psi, 2) * sobolev_norm(q, 0.5) ** 2
        assert abs(inner_product(jacobian(psi, q), q)) <= 1e-12 * bound

    def test_result_independent_of_collocation_grid(self):
        coarse = wavenumber_lattice(TWO_PI, 4)
        fine = wavenumber_lattice(TWO_PI, 4, 40)
        rng = np.random.default_rng(8)
        psi, q = random_field(coarse, rng), random_field(coarse, rng)
        a = jacobian_coeffs(coarse, psi.coeffs, q.coeffs)
        b = jacobian_coeffs(fine, psi.coeffs, q.coeffs)
        assert np.max(np.abs(a - b)) < 1e-12 * np.max(np.abs(a))

    def test_preserves_odd_symmetry(self):
        lattice = wavenumber_lattice(TWO_PI, 5)
        rng = np.random.default_rng(9)
        psi = project_odd_y(random_field(lattice, rng))
        q = project_odd_y(random_field(lattice, rng))
        assert odd_residual(jacobian(psi, q)) <= 1e-12


# ============================================================================
# SIMETRÍA IMPAR
# ============================================================================

class TestOddSymmetry:
    def test_projection_is_idempotent(self):
        u = random_field(wavenumber_lattice(3.0, 5), np.random.default_rng(10))
        once = project_odd_y(u)
        assert np.array_equal(project_odd_y(once).coeffs, once.coeffs)
        assert odd_residual(once) == 0.0

    def test_grid_values_are_odd(self):
        lattice = wavenumber_lattice(TWO_PI, 4)
        u = project_odd_y(random_field(lattice, np.random.default_rng(11)))
        values = to_grid(u)
        mirrored = values[:, (-np.arange(lattice.N)) % lattice.N]
        assert np.max(np.abs(values + mirrored)) < 1e-13

    def test_residual_of_even_field(self):
        lattice = wavenumber_lattice(TWO_PI, 3)
        assert odd_residual(fourier_mode(lattice, (1, 0), 0.5)) == pytest.approx(1.0)
        assert odd_residual(SpectralField.zeros(lattice)) == 0.0

    @pytest.mark.parametrize("K, L", [(4, 1.0), (8, TWO_PI), (16, 20.0)])
    def test_inversion_preserves_odd_symmetry(self, K, L):
        lattice = wavenumber_lattice(L, K)
        rng = np.random.default_rng(13)
        q1 = project_odd_y(random_field(lattice, rng))
        q2 = project_odd_y(random_field(lattice, rng))
        psi1, psi2 = invert_pv(q1, q2)
        assert odd_residual(psi1) <= 1e-12
        assert odd_residual(psi2) <= 1e-12

    @pytest.mark.parametrize("s", [-2.0, 0.5, 1.0, 3.0])
    def test_fractional_power_preserves_odd_symmetry(self, s):
        lattice = wavenumber_lattice(7.0, 6)
        u = project_odd_y(random_field(lattice, np.random.default_rng(14)))
        assert odd_residual(apply_fractional_power(u, s)) <= 1e-12

    def test_layer_state_projection(self):
        lattice = wavenumber_lattice(TWO_PI, 3)
        rng = np.random.default_rng(12)
        state = LayerState(random_field(lattice, rng), random_field(lattice, rng), 1.5)
        projected = state.project_odd_y()
        assert projected.t == 1.5
        assert projected.odd_residual() == 0.0
