"""Stokes-type and transport operators, forcing."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sgfluid.operators import (
    BHatWorkspace,
    ForceSpec,
    GridTooSmallError,
    apply_A_hat,
    apply_B_hat,
    apply_DF_hat,
    apply_F,
    apply_F_hat,
    curl,
    curl_transport_weight,
)
from sgfluid.spectral import SpectralField, inner_H1, inner_V, inner_W, norm_V, norm_W, norm_Wstar, random_field

alphas = st.sampled_from([0.5, 1.0, 2.0])
seeds = st.integers(min_value=0, max_value=2**31 - 1)


def _field(seed, n, decay=0.5):
    return random_field(np.random.default_rng(seed), n, decay)


def _polar(m):
    r = math.hypot(*m)
    return (-m[1] / r, m[0] / r)


def _b_hat_two_modes(u_modes, v_modes, alpha):
    """Hand-expanded B_hat for fields given as {k: c_k} (both signs listed).

    curl(u - alpha Lap u) * e3 x v = w (-v2, v1); for a polarized mode l,
    (-p2, p1) = -l/|l|.  The product of two (2pi)^-1 e^{ikx} modes is
    (2pi)^-1 times the mode k+l, then Leray-projected and divided by the lift.
    """
    out = {}
    for k, ck in u_modes.items():
        wk = 1j * math.hypot(*k) * (1 + alpha * (k[0] ** 2 + k[1] ** 2)) * ck
        for l, cl in v_modes.items():
            m = (k[0] + l[0], k[1] + l[1])
            if m == (0, 0):
                continue
            rl = math.hypot(*l)
            g = (-wk * cl * l[0] / rl / (2 * math.pi), -wk * cl * l[1] / rl / (2 * math.pi))
            pm = _polar(m)
            val = (g[0] * pm[0] + g[1] * pm[1]) / (1 + alpha * (m[0] ** 2 + m[1] ** 2))
            out[m] = out.get(m, 0) + val
    return out


class TestLinearOperators:
    def test_a_hat_value(self):
        u = SpectralField.from_modes(2, {(1, 0): 1.0})
        assert apply_A_hat(u, 1.0).coefficient(1, 0) == pytest.approx(0.5)

    def test_transport_symbol(self):
        u = SpectralField.from_modes(2, {(1, 1): 1.0})
        assert curl_transport_weight(u, 1.0).coefficient(1, 1) == pytest.approx(1j * math.sqrt(2) * 3)
        assert curl(u).coefficient(1, 1) == pytest.approx(1j * math.sqrt(2))

    @given(seeds, seeds, alphas)
    def test_a_hat_v_pairing(self, s1, s2, alpha):
        u, v = _field(s1, 5), _field(s2, 5)
        assert inner_V(apply_A_hat(u, alpha), v, alpha) == pytest.approx(inner_H1(u, v), rel=1e-12, abs=1e-13)

    def test_curl_of_real_field_is_real(self):
        w = curl(_field(1, 4))
        assert w.reality_defect() < 1e-15


class TestBHat:
    def test_two_mode_oracle(self):
        alpha = 1.0
        a, b = 0.3 - 0.2j, 0.7 + 0.1j
        u = SpectralField.from_modes(3, {(1, 0): a, (1, 2): 0.4})
        v = SpectralField.from_modes(3, {(0, 1): b, (2, -1): -0.5j})
        um = {(k1, k2): u.coefficient(k1, k2) for k1 in range(-3, 4) for k2 in range(-3, 4) if u.coefficient(k1, k2)}
        vm = {(k1, k2): v.coefficient(k1, k2) for k1 in range(-3, 4) for k2 in range(-3, 4) if v.coefficient(k1, k2)}
        expect = _b_hat_two_modes(um, vm, alpha)
        got = apply_B_hat(u, v, alpha)
        for m, val in expect.items():
            if max(abs(m[0]), abs(m[1])) <= 3:
                assert got.coefficient(*m) == pytest.approx(val, abs=1e-14)
        assert abs(got.coefficient(3, 3)) < 1e-16

    @settings(max_examples=30, deadline=None)
    @given(seeds, st.integers(2, 8), alphas)
    def test_annihilation_and_antisymmetry(self, seed, n, alpha):
        u, v, w = _field(seed, n), _field(seed + 1, n), _field(seed + 2, n)
        buv = apply_B_hat(u, v, alpha)
        scale = norm_W(u, alpha) * norm_V(v, alpha) ** 2
        assert abs(inner_V(buv, v, alpha)) <= 1e-10 * scale
        anti = inner_V(buv, w, alpha) + inner_V(apply_B_hat(u, w, alpha), v, alpha)
        assert abs(anti) <= 1e-10 * norm_W(u, alpha) * norm_V(v, alpha) * norm_V(w, alpha)

    @settings(max_examples=20, deadline=None)
    @given(seeds, st.integers(2, 8), alphas)
    def test_w_cancellation(self, seed, n, alpha):
        u = _field(seed, n)
        buu = apply_B_hat(u, u, alpha)
        assert abs(inner_W(buu, u, alpha)) <= 1e-10 * norm_W(buu, alpha) * norm_W(u, alpha)

    @settings(max_examples=15, deadline=None)
    @given(seeds, st.integers(1, 5), alphas)
    def test_transform_matches_direct(self, seed, n, alpha):
        u, v = _field(seed, n), _field(seed + 3, n)
        t = apply_B_hat(u, v, alpha)
        d = apply_B_hat(u, v, alpha, method="direct")
        assert norm_V(t - d, alpha) <= 1e-10 * norm_V(d, alpha)

    @given(seeds, st.integers(0, 5))
    def test_grid_independence(self, seed, extra):
        n = 4
        u, v = _field(seed, n), _field(seed + 1, n)
        ref = apply_B_hat(u, v, 1.0, grid=3 * n + 1)
        other = apply_B_hat(u, v, 1.0, grid=3 * n + 1 + extra)
        assert np.max(np.abs(ref.coeffs - other.coeffs)) < 1e-13

    def test_small_grid_rejected(self):
        with pytest.raises(GridTooSmallError):
            BHatWorkspace(4, 1.0, grid=12)

    def test_bilinear_batch_matches_single(self):
        n = 4
        us = np.stack([_field(s, n).coeffs for s in range(3)])
        vs = np.stack([_field(s + 10, n).coeffs for s in range(3)])
        ws = BHatWorkspace(n, 1.0)
        batch = ws.b_hat(us, vs)
        for i in range(3):
            assert np.allclose(batch[i], ws.b_hat(us[i], vs[i]), atol=1e-15)
        sym = ws.b_hat_sym(us, vs)
        assert np.allclose(sym, ws.b_hat(us, vs) + ws.b_hat(vs, us), atol=1e-14)

    @settings(max_examples=20, deadline=None)
    @given(seeds, alphas)
    def test_wstar_bound_finite(self, seed, alpha):
        u, v = _field(seed, 6), _field(seed + 1, 6)
        ratio = norm_Wstar(apply_B_hat(u, v, alpha), alpha) / (norm_W(u, alpha) * norm_V(v, alpha))
        assert np.isfinite(ratio) and ratio < 1.0

    def test_cutoff_mismatch(self):
        with pytest.raises(ValueError, match="cutoff mismatch"):
            apply_B_hat(_field(0, 3), _field(0, 4), 1.0)


class TestForcing:
    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="unknown force kind"):
            ForceSpec("cubic", 1.0)

    def test_linear_gain_lifted_coefficient(self):
        u = SpectralField.from_modes(2, {(1, 0): 1.0})
        spec = ForceSpec("linear_gain", 0.8)
        assert apply_F(u, 0.0, spec, 1.0).coefficient(1, 0) == pytest.approx(0.8)
        # F_hat = F / (1 + alpha |k|^2)
        assert apply_F_hat(u, 0.0, spec, 1.0).coefficient(1, 0) == pytest.approx(0.4)
        assert apply_F(u, 1.0, spec, 1.0).coefficient(1, 0) == pytest.approx(0.8 * math.exp(-1))

    @pytest.mark.parametrize("kind", ["zero", "linear_gain", "saturated"])
    def test_vanishes_at_zero(self, kind):
        z = SpectralField.zeros(3)
        assert apply_F(z, 0.3, ForceSpec(kind, 0.7), 1.0) == z

    @settings(max_examples=20, deadline=None)
    @given(seeds, st.sampled_from(["linear_gain", "saturated"]))
    def test_lipschitz_in_v(self, seed, kind):
        spec = ForceSpec(kind, 0.9)
        u, v = _field(seed, 4), _field(seed + 1, 4)
        lhs = norm_V(apply_F(u, 0.2, spec, 1.0) - apply_F(v, 0.2, spec, 1.0), 1.0)
        assert lhs <= spec.lipschitz * norm_V(u - v, 1.0) * (1 + 1e-12)

    @settings(max_examples=20, deadline=None)
    @given(seeds, st.sampled_from(["linear_gain", "saturated"]))
    def test_frechet_derivative_matches_difference(self, seed, kind):
        spec = ForceSpec(kind, 0.9)
        u, g = _field(seed, 4), _field(seed + 1, 4)
        eps = 1e-6
        fd = (apply_F_hat(u + g * eps, 0.2, spec, 1.0) - apply_F_hat(u - g * eps, 0.2, spec, 1.0)) / (2 * eps)
        an = apply_DF_hat(u, 0.2, g, spec, 1.0)
        assert norm_V(fd - an, 1.0) <= 1e-7 * max(norm_V(an, 1.0), 1e-12)
