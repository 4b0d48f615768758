"""Galerkin time integration, energy monitor and the Q transform."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sgfluid.operators import ForceSpec, a_hat_symbol
from sgfluid.solver import (
    BlowUpError,
    InitSpec,
    SolverConfig,
    assemble_u,
    drift,
    energy_residual,
    invert_u,
    make_xi,
    solve_v,
)
from sgfluid.spectral import SpectralField, random_field, v_weight
from sgfluid.wiener import q_of, sample_path, synthetic_path


def _field(seed, n, decay=1.0, scale=0.3):
    return random_field(np.random.default_rng(seed), n, decay, scale)


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            SolverConfig(alpha=0.0)
        with pytest.raises(ValueError):
            SolverConfig(nu=-1.0)
        assert SolverConfig(n=4).with_cutoff(8).n == 8


class TestLinear:
    def test_closed_form_decay(self):
        cfg = SolverConfig(alpha=1.0, nu=0.7, n=6, nonlinear=False)
        f = _field(1, 6)
        traj = solve_v(f, q_of(sample_path(0, 50, 1.0), 0.0), cfg)
        exact = np.exp(-0.7 * a_hat_symbol(6, 1.0)[None] * traj.times[:, None, None]) * f.coeffs[None]
        assert np.max(np.abs(traj.coeffs - exact)) < 1e-14

    def test_linear_gain_second_order(self):
        # v_k(t) = v_k(0) exp(-nu a_k t + c (1 - e^{-t}) / (1 + alpha |k|^2))
        n, nu, alpha, c = 4, 0.5, 1.0, 0.9
        cfg = SolverConfig(alpha=alpha, nu=nu, n=n, nonlinear=False, force=ForceSpec("linear_gain", c))
        f = _field(2, n)
        lift = v_weight(n, alpha)
        exact = f.coeffs * np.exp(-nu * a_hat_symbol(n, alpha) + c * (1 - math.exp(-1.0)) / lift)
        errs = []
        for M in (25, 50, 100):
            v = solve_v(f, q_of(sample_path(0, M, 1.0), 0.5), cfg, store="final").final
            errs.append(np.max(np.abs(v.coeffs - exact)))
        assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)
        assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.1)

    def test_drift_matches_definition(self):
        cfg = SolverConfig(n=4, nonlinear=False, force=ForceSpec("linear_gain", 2.0))
        f = _field(3, 4)
        d = drift(f, 0.0, 1.0, cfg)
        expect = -cfg.nu * a_hat_symbol(4, 1.0) * f.coeffs + 2.0 * f.coeffs / v_weight(4, 1.0)
        assert np.allclose(d.coeffs, expect, atol=1e-15)


class TestNonlinear:
    cfg = SolverConfig(alpha=1.0, nu=0.5, n=6, force=ForceSpec("saturated", 0.5))

    def test_energy_residual_second_order_on_smooth_path(self):
        f = _field(4, 6)
        res = []
        for M in (50, 100, 200):
            qp = q_of(synthetic_path(M, 1.0), 0.5)
            res.append(energy_residual(solve_v(f, qp, self.cfg), qp, self.cfg))
        assert 3.2 <= res[0] / res[1] <= 4.8
        assert 3.2 <= res[1] / res[2] <= 4.8

    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 10**6))
    def test_reality_preserved(self, seed):
        traj = solve_v(_field(seed, 6), q_of(sample_path(seed, 40, 1.0), 0.5, 3.0), self.cfg)
        assert max(traj.state(j).reality_defect() for j in range(len(traj))) < 1e-14

    def test_galerkin_consistency_without_transport(self):
        cfg4 = SolverConfig(n=4, nonlinear=False, force=ForceSpec("saturated", 0.5))
        f = _field(5, 4)
        qp = q_of(sample_path(1, 40, 1.0), 0.5)
        a = solve_v(f, qp, cfg4, store="final").final
        b = solve_v(f.padded(8), qp, cfg4.with_cutoff(8), store="final").final
        assert np.max(np.abs(b.padded(4).coeffs - a.coeffs)) < 1e-14
        assert np.max(np.abs(b.coeffs)) == pytest.approx(np.max(np.abs(a.coeffs)))

    def test_store_plans(self):
        qp = q_of(sample_path(0, 20, 1.0), 0.5)
        f = _field(6, 4)
        cfg = self.cfg.with_cutoff(4)
        full = solve_v(f, qp, cfg)
        assert full.full_grid() and len(full) == 21
        fin = solve_v(f, qp, cfg, store="final")
        assert list(fin.indices) == [0, 20]
        strided = solve_v(f, qp, cfg, store=8)
        assert list(strided.indices) == [0, 8, 16, 20]
        assert np.array_equal(strided.coeffs[-1], full.coeffs[-1])
        with pytest.raises(ValueError, match="every grid step"):
            energy_residual(fin, qp, cfg)

    def test_blow_up_guard(self):
        cfg = SolverConfig(n=4, guard=0.5)
        with pytest.raises(BlowUpError, match="a priori bound"):
            solve_v(_field(7, 4), q_of(sample_path(0, 10, 1.0), 0.5), cfg)


class TestTransform:
    def test_round_trip(self):
        qp = q_of(sample_path(2, 32, 1.0), 0.5, 3.0)
        traj = solve_v(_field(8, 4), qp, SolverConfig(n=4))
        u = assemble_u(traj, qp)
        assert np.allclose(u.coeffs[-1], qp.values[-1] * traj.coeffs[-1])
        back = assemble_u(invert_u(u, qp), qp)
        assert np.max(np.abs(back.coeffs - u.coeffs)) <= 1e-15 * np.max(np.abs(u.coeffs))

    def test_grid_mismatch(self):
        qp = q_of(sample_path(2, 32, 1.0), 0.5)
        traj = solve_v(_field(8, 4), qp, SolverConfig(n=4))
        with pytest.raises(ValueError, match="past the path grid"):
            assemble_u(traj, q_of(sample_path(2, 16, 1.0), 0.5))
        with pytest.raises(ValueError, match="do not match"):
            assemble_u(traj, q_of(sample_path(2, 32, 2.0), 0.5))


class TestInitialCondition:
    def test_deterministic(self):
        f0 = _field(1, 3)
        xi, dxi = make_xi(InitSpec("deterministic", f0), sample_path(0, 8, 1.0))
        assert xi == f0 and dxi == SpectralField.zeros(3)

    def test_endpoint_functional(self):
        f0, f1 = _field(1, 3), _field(2, 3)
        p = sample_path(4, 8, 1.0)
        w = p.values[-1]
        xi, dxi = make_xi(InitSpec("endpoint_functional", f0, f1, "sin"), p)
        assert np.allclose(xi.coeffs, f0.coeffs + math.sin(w) * f1.coeffs)
        assert np.allclose(dxi.coeffs, math.cos(w) * f1.coeffs)

    def test_validation(self):
        with pytest.raises(ValueError, match="needs f1"):
            InitSpec("endpoint_functional", _field(1, 3))
        with pytest.raises(ValueError, match="unknown g"):
            InitSpec("endpoint_functional", _field(1, 3), _field(2, 3), "cube")
