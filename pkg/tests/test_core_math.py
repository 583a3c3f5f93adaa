"""Core numeric kernels against independent oracles.

Frozen constants below were computed beforehand with mpmath at 40 digits
(erf series / erfinv); the Riemann-sum oracle for the Wasserstein integral
is implemented inline.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as stn

from randcal.core import (
    EmpiricalPit,
    MonotoneMap,
    ece,
    pav_isotonic,
    std_normal_cdf,
    std_normal_inv_cdf,
    std_normal_pdf,
    w1_to_uniform,
)
from randcal.errors import DomainError

# mpmath, 40 digits: ncdf(1.959964), erfinv-based quantiles, 1/sqrt(2*pi)
PHI_1959964 = 0.9750000009035575957
Q_975 = 1.9599639845400542355
PDF_0 = 0.39894228040143267794
QUANTS = {
    0.001: -3.0902323061678135415,
    0.01: -2.3263478740408411009,
    0.1: -1.281551565544600467,
    0.37: -0.33185334643681657823,
    0.5: 0.0,
    0.75: 0.6744897501960817432,
    0.975: 1.9599639845400542355,
    0.999: 3.0902323061678135415,
}


class TestStdNormalCdf:
    def test_symmetry_point(self):
        assert std_normal_cdf(0.0) == pytest.approx(0.5, abs=1e-15)

    def test_against_high_precision_oracle(self):
        assert std_normal_cdf(1.959964) == pytest.approx(0.975, abs=1e-6)
        assert abs(std_normal_cdf(1.959964) - PHI_1959964) < 1e-12

    @given(stn.floats(-8.0, 8.0, allow_nan=False))
    def test_symmetry_sum(self, z):
        assert std_normal_cdf(z) + std_normal_cdf(-z) == pytest.approx(1.0, abs=1e-12)

    # the clamp to [1e-15, 1-1e-15] flattens the extreme tails, so
    # strict monotonicity is asserted where the clamp is inactive
    @given(stn.floats(-6.0, 6.0), stn.floats(1e-6, 1.0))
    def test_strictly_increasing(self, z, dz):
        assert std_normal_cdf(z) < std_normal_cdf(z + dz)

    def test_clamped_tails(self):
        assert std_normal_cdf(-40.0) == 1e-15
        assert std_normal_cdf(40.0) == 1.0 - 1e-15

    def test_non_finite_rejected(self):
        for bad in (math.nan, math.inf, -math.inf):
            with pytest.raises(DomainError):
                std_normal_cdf(bad)


class TestStdNormalPdf:
    def test_peak_value(self):
        assert std_normal_pdf(0.0) == pytest.approx(PDF_0, abs=1e-15)

    def test_tail_decay(self):
        assert std_normal_pdf(6.0) < 1e-8
        assert std_normal_pdf(-6.0) < 1e-8

    def test_finite_difference_of_cdf(self):
        h = 1e-5
        fd = (std_normal_cdf(0.7 + h) - std_normal_cdf(0.7 - h)) / (2 * h)
        assert std_normal_pdf(0.7) == pytest.approx(fd, abs=1e-8)

    def test_gradient_consistency_100_points(self):
        rng = np.random.default_rng(42)
        h = 1e-5
        for z in rng.uniform(-3, 3, size=100):
            fd = (std_normal_cdf(z + h) - std_normal_cdf(z - h)) / (2 * h)
            assert abs(std_normal_pdf(z) - fd) / max(abs(fd), 1e-300) < 1e-6

    def test_non_finite_rejected(self):
        with pytest.raises(DomainError):
            std_normal_pdf(math.nan)


class TestStdNormalInvCdf:
    def test_median(self):
        assert std_normal_inv_cdf(0.5) == 0.0

    def test_against_root_finding_oracle(self):
        assert std_normal_inv_cdf(0.975) == pytest.approx(Q_975, abs=1e-5)
        for p, q in QUANTS.items():
            assert std_normal_inv_cdf(p) == pytest.approx(q, abs=1e-11)

    @pytest.mark.parametrize("p", [0.01, 0.37, 0.99])
    def test_round_trip(self, p):
        assert std_normal_cdf(std_normal_inv_cdf(p)) == pytest.approx(p, abs=1e-9)

    @given(stn.floats(1e-12, 1.0 - 1e-12))
    @settings(max_examples=200)
    def test_round_trip_property(self, p):
        assert std_normal_cdf(std_normal_inv_cdf(p)) == pytest.approx(p, abs=1e-9)

    @pytest.mark.parametrize("p", [0.0, 1.0, -0.2, 1.7, math.nan])
    def test_domain(self, p):
        with pytest.raises(DomainError):
            std_normal_inv_cdf(p)


def riemann_w1_oracle(values, grid=1_000_000):
    """Independent oracle: Riemann sum of |F_n(r) - r| on a fine grid."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    r = (np.arange(grid) + 0.5) / grid
    f = np.searchsorted(v, r, side="right") / v.size
    return float(np.mean(np.abs(f - r)))


class TestW1ToUniform:
    def test_all_half(self):
        for n in (1, 7, 100):
            assert w1_to_uniform(EmpiricalPit(np.full(n, 0.5))) == pytest.approx(0.25, abs=1e-15)

    def test_stratified_grid(self):
        n = 100
        vals = (np.arange(n) + 0.5) / n
        w = w1_to_uniform(EmpiricalPit(vals))
        assert w == pytest.approx(1.0 / (4 * n), abs=1e-12)
        assert w == pytest.approx(riemann_w1_oracle(vals), abs=2e-6)

    def test_all_zero(self):
        assert w1_to_uniform(EmpiricalPit(np.zeros(5))) == pytest.approx(0.5, abs=1e-15)

    def test_matches_riemann_oracle_random(self):
        rng = np.random.default_rng(3)
        for n in (1, 2, 13, 400):
            vals = rng.uniform(size=n)
            assert w1_to_uniform(EmpiricalPit(vals)) == pytest.approx(
                riemann_w1_oracle(vals), abs=5e-6
            )

    @given(stn.lists(stn.floats(0.0, 1.0), min_size=1, max_size=300))
    @settings(max_examples=150)
    def test_range_bounds(self, vals):
        w = w1_to_uniform(EmpiricalPit(np.asarray(vals)))
        assert 0.0 <= w <= 0.5

    def test_empty_rejected(self):
        with pytest.raises(DomainError):
            EmpiricalPit(np.asarray([]))

    def test_out_of_range_rejected(self):
        with pytest.raises(DomainError):
            EmpiricalPit(np.asarray([0.2, 1.2]))


class TestEce:
    def test_all_half(self):
        assert ece(EmpiricalPit(np.full(9, 0.5))) == pytest.approx(0.25, abs=1e-15)

    def test_uniform_grid(self):
        vals = (np.arange(100) + 0.5) / 100
        assert ece(EmpiricalPit(vals)) == pytest.approx(0.0025, abs=1e-12)

    def test_identity_with_w1_random_sample(self):
        rng = np.random.default_rng(11)
        s = EmpiricalPit(rng.uniform(size=1000))
        assert abs(ece(s) - w1_to_uniform(s)) < 1e-9

    @given(stn.lists(stn.floats(0.0, 1.0), min_size=1, max_size=500))
    @settings(max_examples=200)
    def test_identity_property(self, vals):
        s = EmpiricalPit(np.asarray(vals))
        assert abs(ece(s) - w1_to_uniform(s)) < 1e-9


class TestPavIsotonic:
    def test_hand_executed_example(self):
        m = pav_isotonic([(0.1, 0.3), (0.2, 0.2), (0.3, 0.5)])
        np.testing.assert_allclose(m.outputs, [0.25, 0.25, 0.5])

    def test_already_monotone_unchanged(self):
        pts = [(0.0, 0.1), (0.3, 0.2), (0.7, 0.8)]
        m = pav_isotonic(pts)
        np.testing.assert_allclose(m.outputs, [0.1, 0.2, 0.8])

    def test_constant_targets(self):
        m = pav_isotonic([(0.1, 0.4), (0.5, 0.4), (0.9, 0.4)])
        np.testing.assert_allclose(m.outputs, 0.4)

    def test_ties_pooled(self):
        m = pav_isotonic([(0.2, 0.0), (0.2, 1.0), (0.8, 0.9)])
        np.testing.assert_allclose(m.inputs, [0.2, 0.8])
        np.testing.assert_allclose(m.outputs, [0.5, 0.9])

    def test_idempotent(self):
        rng = np.random.default_rng(5)
        pos = np.sort(rng.uniform(size=40))
        tgt = rng.uniform(size=40)
        m1 = pav_isotonic(list(zip(pos, tgt)))
        m2 = pav_isotonic(list(zip(m1.inputs, m1.outputs)))
        np.testing.assert_allclose(m2.outputs, m1.outputs, atol=1e-12)

    def test_optimal_vs_grid_search_5_points(self):
        # Brute-force oracle: non-decreasing assignments on a 21-level grid.
        rng = np.random.default_rng(7)
        for _ in range(5):
            tgt = rng.uniform(size=5)
            pos = np.arange(5) / 4.0
            m = pav_isotonic(list(zip(pos, tgt)))
            pav_sse = float(np.sum((m.outputs - tgt) ** 2))
            levels = np.linspace(tgt.min(), tgt.max(), 21)
            best = np.inf

            def rec(k, lo, current):
                nonlocal best
                if k == 5:
                    best = min(best, current)
                    return
                for j in range(lo, 21):
                    rec(k + 1, j, current + (levels[j] - tgt[k]) ** 2)

            rec(0, 0, 0.0)
            # grid granularity costs the oracle a little; PAV must not lose
            assert pav_sse <= best + 1e-6

    def test_empty_rejected(self):
        with pytest.raises(DomainError):
            pav_isotonic([])

    def test_unsorted_positions_rejected(self):
        with pytest.raises(DomainError):
            pav_isotonic([(0.5, 0.1), (0.2, 0.3)])


class TestMonotoneMap:
    def test_clamps_outside_knots(self):
        m = MonotoneMap(np.asarray([0.2, 0.8]), np.asarray([0.1, 0.9]))
        assert m(0.0) == pytest.approx(0.1)
        assert m(1.0) == pytest.approx(0.9)

    def test_interpolates_between_knots(self):
        m = MonotoneMap(np.asarray([0.0, 1.0]), np.asarray([0.0, 1.0]))
        assert m(0.37) == pytest.approx(0.37)

    def test_inverse_round_trip(self):
        m = MonotoneMap(np.asarray([0.0, 0.4, 1.0]), np.asarray([0.0, 0.5, 1.0]))
        for t in (0.1, 0.25, 0.5, 0.75, 0.99):
            assert m(m.inverse(t)) == pytest.approx(t, abs=1e-12)

    def test_inverse_tie_midpoint(self):
        m = MonotoneMap(np.asarray([0.2, 0.6, 1.0]), np.asarray([0.5, 0.5, 1.0]))
        assert m.inverse(0.5) == pytest.approx(0.4)

    def test_non_monotone_rejected(self):
        with pytest.raises(DomainError):
            MonotoneMap(np.asarray([0.0, 1.0]), np.asarray([0.5, 0.4]))
        with pytest.raises(DomainError):
            MonotoneMap(np.asarray([0.5, 0.5]), np.asarray([0.1, 0.2]))
