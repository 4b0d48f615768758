"""Spectral representation: wavevectors, weights, basis, norms, serialization."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sgfluid.spectral import (
    SpectralField,
    WaveVector,
    build_basis,
    eigenvalues,
    field_from_csv,
    field_to_csv,
    inner_V,
    inner_W,
    load_field,
    norm_V,
    norm_W,
    norm_Wstar,
    project,
    random_field,
    save_field,
    seminorm_H1,
    inner_L2,
    to_physical,
    wavenumbers,
)

alphas = st.sampled_from([0.5, 1.0, 2.0])
cutoffs = st.integers(min_value=1, max_value=6)
seeds = st.integers(min_value=0, max_value=2**31 - 1)


def _field(seed, n, decay=0.5):
    return random_field(np.random.default_rng(seed), n, decay)


class TestWaveVector:
    def test_zero_rejected(self):
        with pytest.raises(ValueError, match="zero wavevector"):
            WaveVector(0, 0)

    def test_norm(self):
        assert WaveVector(2, -3).norm2 == 13


class TestWeights:
    def test_eigenvalue_values(self):
        # lam_k = |k|^2 (1 + alpha |k|^2)
        lam = eigenvalues(2, 1.0)
        assert lam[1 + 2, 0 + 2] == pytest.approx(2.0)
        assert lam[1 + 2, 1 + 2] == pytest.approx(6.0)
        assert eigenvalues(2, 0.5)[2 + 2, 0 + 2] == pytest.approx(4.0 * 3.0)

    def test_polarization_is_divergence_free_and_unit(self):
        k1, k2, ksq, kabs, p1, p2, mask = wavenumbers(5)
        assert np.max(np.abs(k1 * p1 + k2 * p2)) < 1e-14
        norms = p1**2 + p2**2
        assert np.allclose(norms[mask], 1.0)

    def test_single_mode_norms(self):
        u = SpectralField.from_modes(3, {(1, 0): 1.0})
        assert u.coefficient(-1, 0) == -1.0
        # |u|_V^2 = sum (1 + alpha|k|^2)|c_k|^2 over k = +-(1,0)
        assert norm_V(u, 1.0) ** 2 == pytest.approx(4.0)
        # |u|_W^2 = sum |k|^2 (1 + alpha|k|^2)^2 |c_k|^2
        assert norm_W(u, 1.0) ** 2 == pytest.approx(8.0)
        assert norm_Wstar(u, 1.0) ** 2 == pytest.approx(2.0)


class TestSpectralField:
    def test_shape_checked(self):
        with pytest.raises(ValueError, match="does not match"):
            SpectralField(3, np.zeros((5, 5)))

    def test_mean_mode_zeroed_and_readonly(self):
        c = np.ones((5, 5), dtype=complex)
        u = SpectralField(2, c)
        assert u.coefficient(0, 0) == 0
        with pytest.raises(ValueError):
            u.coeffs[0, 0] = 3.0

    def test_mode_outside_cutoff(self):
        with pytest.raises(ValueError, match="outside cutoff"):
            SpectralField.from_modes(2, {(3, 0): 1.0})

    @given(seeds, cutoffs)
    def test_random_field_is_real(self, seed, n):
        u = _field(seed, n)
        assert u.reality_defect() == 0.0
        k = np.arange(-n, n + 1) % (2 * n + 2)
        full = np.zeros((2 * n + 2, 2 * n + 2), dtype=complex)
        p1 = wavenumbers(n)[4]
        full[np.ix_(k, k)] = u.coeffs * p1
        assert np.max(np.abs(np.fft.ifft2(full).imag)) < 1e-14

    @given(seeds, cutoffs, st.integers(0, 4))
    def test_pad_truncate_roundtrip(self, seed, n, extra):
        u = _field(seed, n)
        assert u.padded(n + extra).padded(n) == u
        assert project(u.padded(n + extra), n) == u

    @given(seeds, cutoffs)
    def test_arithmetic(self, seed, n):
        u = _field(seed, n)
        v = _field(seed + 1, n)
        assert np.allclose(((u + v) - v).coeffs, u.coeffs)
        assert (u * 2.0 / 2.0) == u
        assert (-u + u) == SpectralField.zeros(n)


class TestBasis:
    @pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
    def test_count_order_and_normalization(self, alpha):
        n = 4
        basis = build_basis(n, alpha)
        assert len(basis) == (2 * n + 1) ** 2 - 1
        lam = [b.lam for b in basis]
        assert lam == sorted(lam)
        for b in basis[:12]:
            assert norm_W(b.field, alpha) == pytest.approx(1.0, abs=1e-14)
            assert b.field.reality_defect() < 1e-15

    @settings(max_examples=25, deadline=None)
    @given(seeds, alphas)
    def test_eigenrelation(self, seed, alpha):
        n = 5
        u = _field(seed, n)
        scale = norm_W(u, alpha)
        for b in build_basis(n, alpha):
            assert abs(inner_W(u, b.field, alpha) - b.lam * inner_V(u, b.field, alpha)) <= 1e-12 * scale

    @settings(max_examples=10, deadline=None)
    @given(seeds, alphas)
    def test_expansion_reconstructs(self, seed, alpha):
        n = 3
        u = _field(seed, n)
        acc = np.zeros_like(u.coeffs)
        for b in build_basis(n, alpha):
            acc = acc + inner_W(u, b.field, alpha) * b.field.coeffs
        assert np.max(np.abs(acc - u.coeffs)) < 1e-13


class TestNorms:
    @given(seeds, cutoffs, alphas)
    def test_v_norm_decomposition(self, seed, n, alpha):
        u = _field(seed, n)
        assert norm_V(u, alpha) ** 2 == pytest.approx(inner_L2(u, u) + alpha * seminorm_H1(u) ** 2, rel=1e-13)

    @given(seeds, cutoffs, alphas)
    def test_inner_products_symmetric(self, seed, n, alpha):
        u, v = _field(seed, n), _field(seed + 7, n)
        assert inner_V(u, v, alpha) == pytest.approx(inner_V(v, u, alpha), rel=1e-12, abs=1e-14)
        assert inner_W(u, v, alpha) == pytest.approx(inner_W(v, u, alpha), rel=1e-12, abs=1e-14)

    @given(seeds, st.integers(1, 4), alphas, st.integers(0, 6))
    def test_parseval_against_physical_quadrature(self, seed, n, alpha, extra):
        u = _field(seed, n)
        L = 2 * n + 1 + extra
        u1, u2 = to_physical(u, L)
        h = (2 * math.pi / L) ** 2
        l2 = h * np.sum(u1**2 + u2**2)
        # gradient components computed independently: d_j u_i has coefficients i k_j c_k p_i
        k1, k2, _, _, p1, p2, _ = wavenumbers(n)
        idx = np.arange(-n, n + 1) % L
        grad = 0.0
        for kj in (k1, k2):
            for p in (p1, p2):
                full = np.zeros((L, L), dtype=complex)
                full[np.ix_(idx, idx)] = 1j * kj * p * u.coeffs
                g = np.fft.ifft2(full).real * L * L / (2 * math.pi)
                grad += h * np.sum(g**2)
        assert l2 + alpha * grad == pytest.approx(norm_V(u, alpha) ** 2, rel=1e-10)

    def test_physical_grid_too_small(self):
        with pytest.raises(ValueError, match="too small"):
            to_physical(SpectralField.zeros(3), 6)


class TestSerialization:
    @given(seeds, cutoffs, alphas)
    def test_binary_roundtrip(self, seed, n, alpha):
        u = _field(seed, n)
        v, a = load_field(save_field(u, alpha))
        assert a == alpha
        assert np.array_equal(v.coeffs, u.coeffs)

    @given(seeds, cutoffs, alphas)
    def test_csv_roundtrip(self, seed, n, alpha):
        u = _field(seed, n)
        text = field_to_csv(u, alpha)
        v, a = field_from_csv(text)
        assert a == alpha
        assert np.array_equal(v.coeffs, u.coeffs)
        assert field_to_csv(v, a) == text

    def test_binary_rejects_garbage(self):
        data = save_field(SpectralField.zeros(2), 1.0)
        with pytest.raises(ValueError, match="truncated"):
            load_field(data[:-3])
        with pytest.raises(ValueError, match="not a spectral field"):
            load_field(b"XXXX" + data[4:])
