"""Network init/forward/backward/Adam against finite-difference oracles."""

import dataclasses
import math

import numpy as np
import pytest

from randcal import nn
from randcal.errors import ConfigError, DomainError, ShapeError, TrainingError

SOFTPLUS0_PLUS_FLOOR = 0.69414718055994530942  # ln 2 + 1e-3 (mpmath)


class TestInit:
    def test_deterministic(self):
        a = nn.mlp_init([3, 16, 16, 2], seed=7)
        b = nn.mlp_init([3, 16, 16, 2], seed=7)
        for wa, wb in zip(a.weights, b.weights):
            np.testing.assert_array_equal(wa, wb)

    def test_seed_changes_weights(self):
        a = nn.mlp_init([3, 16, 16, 2], seed=1)
        b = nn.mlp_init([3, 16, 16, 2], seed=2)
        assert any(np.any(wa != wb) for wa, wb in zip(a.weights, b.weights))

    def test_parameter_count_with_extra_column(self):
        # hand shape arithmetic: input 3+r=4 -> 16, (16+r)=17 -> 16, (16+r)=17 -> 2
        p = nn.mlp_init([3, 16, 16, 2], seed=0)
        expected = (4 * 16 + 16) + ((16 + 1) * 16 + 16) + (17 * 2 + 2)
        assert p.n_params == expected

    def test_parameter_count_plain(self):
        p = nn.mlp_init([3, 16, 2], seed=0, concat_extra=False)
        assert p.n_params == (3 * 16 + 16) + (16 * 2 + 2)

    def test_biases_zero(self):
        p = nn.mlp_init([3, 8, 2], seed=0)
        for b in p.biases:
            np.testing.assert_array_equal(b, 0.0)

    def test_bad_sizes(self):
        with pytest.raises(ConfigError):
            nn.mlp_init([3, 2], seed=0)  # no hidden layer
        with pytest.raises(ConfigError):
            nn.mlp_init([3, 0, 2], seed=0)


class TestForward:
    def test_zero_weight_network(self):
        p = nn.mlp_init([3, 8, 2], seed=0)
        p = dataclasses.replace(p, weights=tuple(np.zeros_like(w) for w in p.weights))
        _, mu, sigma = nn.mlp_forward(p, np.zeros(3), 0.5)
        assert mu == 0.0
        assert sigma == pytest.approx(SOFTPLUS0_PLUS_FLOOR, abs=1e-12)

    def test_r_reaches_output(self):
        p = nn.mlp_init([3, 8, 8, 2], seed=3)
        x = np.asarray([0.1, -0.2, 0.3])
        _, mu1, sg1 = nn.mlp_forward(p, x, 0.2)
        _, mu2, sg2 = nn.mlp_forward(p, x, 0.8)
        assert (mu1, sg1) != (mu2, sg2)

    def test_sigma_floor(self):
        rng = np.random.default_rng(0)
        p = nn.mlp_init([4, 16, 2], seed=1)
        X = 50.0 * rng.standard_normal((10_000, 4))
        _, _, sigma = nn.mlp_forward_batch(p, X, rng.uniform(size=10_000))
        assert np.all(sigma >= 1e-3)

    def test_deterministic(self):
        p = nn.mlp_init([2, 8, 2], seed=5)
        x = np.asarray([0.3, 0.7])
        assert nn.mlp_forward(p, x, 0.4)[1:] == nn.mlp_forward(p, x, 0.4)[1:]

    def test_dimension_mismatch(self):
        p = nn.mlp_init([3, 8, 2], seed=0)
        with pytest.raises(ShapeError):
            nn.mlp_forward(p, np.zeros(4), 0.5)

    def test_non_finite_input(self):
        p = nn.mlp_init([2, 8, 2], seed=0)
        with pytest.raises(DomainError):
            nn.mlp_forward(p, np.asarray([np.nan, 0.0]), 0.5)
        with pytest.raises(DomainError):
            nn.mlp_forward(p, np.zeros(2), 1.5)


def _perturbed(params, layer, i, j, h, bias=False):
    if bias:
        arrs = [b.copy() for b in params.biases]
        arrs[layer][j] += h
        return dataclasses.replace(params, biases=tuple(arrs))
    arrs = [w.copy() for w in params.weights]
    arrs[layer][i, j] += h
    return dataclasses.replace(params, weights=tuple(arrs))


class TestBackward:
    def test_zero_cotangent(self):
        p = nn.mlp_init([3, 8, 2], seed=0)
        trace, _, _ = nn.mlp_forward_batch(p, np.zeros((4, 3)), np.full(4, 0.5))
        dws, dbs = nn.mlp_backward(trace, np.zeros(4), np.zeros(4))
        for g in dws + dbs:
            np.testing.assert_array_equal(g, 0.0)

    def test_every_parameter_matches_finite_differences(self):
        rng = np.random.default_rng(17)
        p = nn.mlp_init([3, 6, 5, 2], seed=4)
        X = rng.standard_normal((4, 3))
        r = rng.uniform(size=4)
        dmu = rng.standard_normal(4)
        dsg = rng.standard_normal(4)

        def scalar(params):
            _, mu, sg = nn.mlp_forward_batch(params, X, r)
            return float(np.sum(dmu * mu + dsg * sg))

        trace, _, _ = nn.mlp_forward_batch(p, X, r)
        dws, dbs = nn.mlp_backward(trace, dmu, dsg)
        h = 1e-5
        for layer in range(len(p.weights)):
            w = p.weights[layer]
            for i in range(w.shape[0]):
                for j in range(w.shape[1]):
                    fd = (scalar(_perturbed(p, layer, i, j, h)) - scalar(_perturbed(p, layer, i, j, -h))) / (2 * h)
                    denom = max(abs(fd), 1e-6)
                    assert abs(dws[layer][i, j] - fd) / denom < 1e-4
            for j in range(p.biases[layer].size):
                fd = (scalar(_perturbed(p, layer, 0, j, h, bias=True)) - scalar(_perturbed(p, layer, 0, j, -h, bias=True))) / (2 * h)
                denom = max(abs(fd), 1e-6)
                assert abs(dbs[layer][j] - fd) / denom < 1e-4

    def test_linearity_in_cotangent(self):
        rng = np.random.default_rng(2)
        p = nn.mlp_init([2, 5, 2], seed=1)
        X = rng.standard_normal((3, 2))
        r = rng.uniform(size=3)
        trace, _, _ = nn.mlp_forward_batch(p, X, r)
        ones = np.ones(3)
        g1 = nn.mlp_backward(trace, ones, np.zeros(3))
        g2 = nn.mlp_backward(trace, 2.0 * ones, np.zeros(3))
        for a, b in zip(g1[0] + g1[1], g2[0] + g2[1]):
            np.testing.assert_allclose(2.0 * a, b, rtol=1e-12)

    def test_stale_trace_rejected(self):
        p1 = nn.mlp_init([2, 5, 2], seed=1)
        p2 = nn.mlp_init([2, 5, 4, 2], seed=1)
        trace, _, _ = nn.mlp_forward_batch(p1, np.zeros((2, 2)), np.full(2, 0.5))
        bad = dataclasses.replace(trace, params=p2)
        with pytest.raises(Exception):
            nn.mlp_backward(bad, np.zeros(2), np.zeros(2))


class TestAdam:
    def test_zero_gradient_keeps_params(self):
        p = nn.mlp_init([2, 4, 2], seed=0)
        st = nn.adam_init(p, 1e-3)
        g = nn.zero_grads(p)
        p2, st2 = nn.adam_step(p, g, st)
        assert st2.step == 1
        for a, b in zip(p.weights, p2.weights):
            np.testing.assert_array_equal(a, b)

    def test_scalar_quadratic_converges(self):
        # scalar Adam oracle on f(w) = w^2, run through the same update rule
        p = nn.mlp_init([1, 1, 2], seed=0, concat_extra=False)
        w = np.asarray([[1.0]])
        p = dataclasses.replace(
            p, weights=(w, np.zeros((1, 2))), biases=(np.zeros(1), np.zeros(2))
        )
        st = nn.adam_init(p, 0.1)
        for _ in range(500):
            g = ([2.0 * p.weights[0], np.zeros((1, 2))], [np.zeros(1), np.zeros(2)])
            p, st = nn.adam_step(p, g, st)
        assert abs(p.weights[0][0, 0]) < 1e-2

    def test_deterministic(self):
        p = nn.mlp_init([2, 4, 2], seed=0)
        g = ([np.full_like(w, 0.3) for w in p.weights], [np.full_like(b, -0.2) for b in p.biases])
        a1, s1 = nn.adam_step(p, g, nn.adam_init(p, 1e-2))
        a2, s2 = nn.adam_step(p, g, nn.adam_init(p, 1e-2))
        for x, y in zip(a1.weights, a2.weights):
            np.testing.assert_array_equal(x, y)
        assert s1.step == s2.step == 1

    def test_non_finite_gradient_rejected(self):
        p = nn.mlp_init([2, 4, 2], seed=0)
        g = nn.zero_grads(p)
        g[0][0][0, 0] = math.nan
        with pytest.raises(TrainingError):
            nn.adam_step(p, g, nn.adam_init(p, 1e-3))
