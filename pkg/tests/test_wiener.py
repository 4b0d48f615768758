"""Brownian paths, the Q transform and its truncation."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sgfluid.stochint import IntegrandPath, stratonovich_midpoint
from sgfluid.wiener import (
    BrownianPath,
    d_q,
    omega_N_indicator,
    path_to_csv,
    prob_omega_N,
    q_of,
    sample_path,
    synthetic_path,
)


class TestBrownianPath:
    def test_validation(self):
        with pytest.raises(ValueError, match="W\\(0\\)"):
            BrownianPath(1.0, [1.0, 2.0])
        with pytest.raises(ValueError, match="two grid values"):
            BrownianPath(1.0, [0.0])
        with pytest.raises(ValueError, match="M must be"):
            sample_path(0, 0, 1.0)

    def test_index_of(self):
        p = sample_path(0, 8, 2.0)
        assert p.index_of(0.75) == 3
        with pytest.raises(ValueError, match="not on the path grid"):
            p.index_of(0.3)

    def test_deterministic(self):
        a, b = sample_path(5, 96, 1.0), sample_path(5, 96, 1.0)
        assert np.array_equal(a.values, b.values)
        assert not np.array_equal(a.values, sample_path(6, 96, 1.0).values)

    @given(st.integers(0, 10**6), st.integers(1, 5), st.integers(0, 4), st.integers(0, 3))
    def test_refinement_consistency(self, seed, m0, coarse, extra):
        M = m0 * 2**coarse
        fine = sample_path(seed, M * 2**extra, 1.5)
        assert np.array_equal(fine.restrict(M).values, sample_path(seed, M, 1.5).values)

    def test_increment_statistics(self):
        T, M = 2.0, 64
        ends = np.array([sample_path(s, M, T).values[-1] for s in range(4000)])
        assert abs(ends.mean()) < 4 * math.sqrt(T / 4000)
        assert ends.var() == pytest.approx(T, rel=0.1)
        incs = np.concatenate([sample_path(s, M, T).increments for s in range(200)])
        assert incs.var() == pytest.approx(T / M, rel=0.05)

    def test_synthetic(self):
        p = synthetic_path(4, 1.0, "sin", 2.0)
        assert np.allclose(p.values, 2 * np.sin(np.linspace(0, 1, 5)))
        with pytest.raises(ValueError, match="unknown synthetic"):
            synthetic_path(4, 1.0, "cos")

    def test_restrict_requires_divisor(self):
        with pytest.raises(ValueError, match="does not divide"):
            sample_path(0, 12, 1.0).restrict(5)


class TestQ:
    def test_values_and_clamp(self):
        p = BrownianPath(1.0, [0.0, 0.5, 2.5, -3.0])
        q = q_of(p, 0.5, N=2.0)
        assert np.allclose(q.values, np.exp(0.5 * np.array([0.0, 0.5, 2.0, -2.0])))
        assert np.array_equal(q.interior, [True, True, False, False])
        assert np.allclose(q.dq_diag, [0.5, 0.5 * math.exp(0.25), 0.0, 0.0])
        assert np.allclose(q_of(p, 0.5).values, np.exp(0.5 * p.values))

    def test_malliavin_derivative_of_q(self):
        p = sample_path(1, 10, 1.0)
        q = q_of(p, 0.7)
        assert d_q(q, 0.5, 0.3) == 0.0
        assert d_q(q, 0.3, 0.5) == pytest.approx(0.7 * q.values[5])

    def test_negative_sigma(self):
        with pytest.raises(ValueError):
            q_of(sample_path(0, 4, 1.0), -1.0)

    @pytest.mark.parametrize("M", [64, 256, 1024])
    def test_stratonovich_chain_rule(self, M):
        # Q(T) - 1 = int sigma Q o dW, midpoint sums converge pathwise
        sigma = 0.8
        errs = []
        for seed in range(20):
            p = sample_path(seed, M, 1.0)
            q = q_of(p, sigma)
            s = stratonovich_midpoint(IntegrandPath(q.values), p, 1.0, sigma)
            errs.append(abs(q.values[-1] - 1.0 - s))
        assert np.mean(errs) < 0.5 / M**0.5

    def test_omega_N_probability(self):
        N, T = 1.0, 1.0
        hits = np.mean([omega_N_indicator(sample_path(s, 1024, T), N) for s in range(3000)])
        p = prob_omega_N(N, T)
        # grid maxima undershoot the continuous supremum, so the MC frequency sits slightly above p
        assert p <= hits + 3 * math.sqrt(p * (1 - p) / 3000)
        assert hits - p < 0.05

    def test_prob_limits(self):
        assert prob_omega_N(0.0, 1.0) == 0.0
        assert prob_omega_N(10.0, 1.0) == pytest.approx(1.0, abs=1e-12)
        assert prob_omega_N(1.0, 1.0) < prob_omega_N(2.0, 1.0)

    def test_csv(self):
        q = q_of(sample_path(3, 4, 1.0), 0.5)
        text = path_to_csv(q)
        assert text.splitlines()[0] == "t,W,Q"
        assert text.splitlines()[1] == "0.0,0.0,1.0"
        assert "np.float64" not in text
        assert path_to_csv(q_of(sample_path(3, 4, 1.0), 0.5)) == text
