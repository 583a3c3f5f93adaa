"""Forecaster variants: CDF/quantile contracts, PIT sampling, persistence."""

import numpy as np
import pytest

from randcal.core import MonotoneMap, std_normal_inv_cdf, w1_to_uniform
from randcal.data import Dataset, Standardizer
from randcal.errors import ConfigError, DomainError
from randcal import nn
from randcal.forecaster import (
    GaussianForecast,
    OracleForecaster,
    PassThroughForecaster,
    RecalibratedForecaster,
    TrainedForecaster,
    forecaster_from_doc,
    forecaster_to_doc,
    load_forecaster,
    pit_sample,
    save_forecaster,
)

from conftest import make_oracle_pair

Q_975 = 1.9599639845400542355
Q_90 = 1.281551565544600467


class TestGaussianForecast:
    def test_cdf_at_median(self):
        assert GaussianForecast(3.0, 2.0).cdf_at(3.0) == pytest.approx(0.5, abs=1e-15)

    def test_cdf_oracle_value(self):
        # z = 3.919928 / 2 = 1.959964 -> 0.975
        f = GaussianForecast(0.0, 2.0)
        assert f.cdf_at(3.919928) == pytest.approx(0.975, abs=1e-6)

    def test_cdf_monotone_in_y(self):
        f = GaussianForecast(1.0, 0.5)
        ys = np.linspace(-5, 5, 101)
        vals = [f.cdf_at(y) for y in ys]
        assert all(a <= b for a, b in zip(vals, vals[1:]))

    def test_quantile_examples(self):
        assert GaussianForecast(1.0, 2.0).quantile(0.5) == pytest.approx(1.0)
        assert GaussianForecast(1.0, 2.0).quantile(0.975) == pytest.approx(1 + 2 * Q_975, abs=1e-5)

    def test_quantile_round_trip(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            f = GaussianForecast(rng.normal(), abs(rng.normal()) + 0.1)
            p = rng.uniform(0.01, 0.99)
            assert f.cdf_at(f.quantile(p)) == pytest.approx(p, abs=1e-9)

    def test_credible_interval(self):
        lo, hi = GaussianForecast(0.0, 1.0).credible_interval(0.8)
        assert lo == pytest.approx(-Q_90, abs=1e-5)
        assert hi == pytest.approx(Q_90, abs=1e-5)
        f = GaussianForecast(2.0, 3.0)
        lo, hi = f.credible_interval(0.6)
        assert f.cdf_at(hi) - f.cdf_at(lo) == pytest.approx(0.6, abs=1e-9)

    def test_interval_collapses(self):
        lo, hi = GaussianForecast(5.0, 1.0).credible_interval(1e-6)
        assert abs(lo - 5.0) < 1e-4 and abs(hi - 5.0) < 1e-4 and lo < hi

    def test_invalid(self):
        with pytest.raises(DomainError):
            GaussianForecast(0.0, 0.0)
        with pytest.raises(DomainError):
            GaussianForecast(np.inf, 1.0)
        with pytest.raises(DomainError):
            GaussianForecast(0.0, 1.0).cdf_at(np.nan)
        with pytest.raises(DomainError):
            GaussianForecast(0.0, 1.0).quantile(1.0)
        with pytest.raises(DomainError):
            GaussianForecast(0.0, 1.0).credible_interval(0.0)


class TestPassThrough:
    def test_cdf_matches_construction(self):
        # corrected sign: CDF(y) = Phi(y/c + Q(r)) so that the c -> inf
        # limit is Phi(Q(r)) = r (the always-calibrated construction)
        from randcal.core import std_normal_cdf

        f = PassThroughForecaster(c=10.0)
        for r in (0.1, 0.5, 0.9):
            fc = f.predict(np.zeros(1), r)
            for y in (-3.0, 0.0, 2.0):
                assert fc.cdf_at(y) == pytest.approx(
                    std_normal_cdf(y / 10.0 + std_normal_inv_cdf(r)), abs=1e-12
                )

    def test_limit_pit_tracks_r(self):
        rng = np.random.default_rng(0)
        ds = Dataset(rng.standard_normal((200, 2)), rng.uniform(-1000, 1000, 200), ("a", "b"))
        ps = pit_sample(PassThroughForecaster(c=1e9), ds, np.random.default_rng(1))
        assert np.max(np.abs(ps.pits - ps.rs)) < 1e-5

    def test_enormous_sigma(self):
        f = PassThroughForecaster(c=1e9)
        _, sigma = f.predict_batch(np.zeros((5, 1)), np.full(5, 0.3))
        assert np.all(sigma == 1e9)

    def test_monotone_in_r(self):
        f = PassThroughForecaster(c=100.0)
        vals = [f.predict(np.zeros(1), r).cdf_at(1.0) for r in np.linspace(0.01, 0.99, 21)]
        assert all(a < b for a, b in zip(vals, vals[1:]))

    def test_r_domain(self):
        with pytest.raises(DomainError):
            PassThroughForecaster().predict(np.zeros(1), 1.2)


class TestOracle:
    def test_passthrough_of_truth(self):
        _, oracle = make_oracle_pair(10, seed=0)
        fc = oracle.predict(np.asarray([3.0, 0.0, 0.0]), r=0.77)
        assert fc.mu == pytest.approx(6.0)
        assert fc.sigma == pytest.approx(1.0)

    def test_ignores_r(self):
        _, oracle = make_oracle_pair(10, seed=0)
        x = np.asarray([1.0, 2.0, 3.0])
        assert oracle.predict(x, 0.1) == oracle.predict(x, 0.9)

    def test_pit_uniformity_on_own_data(self):
        ds, oracle = make_oracle_pair(10_000, seed=5)
        ps = pit_sample(oracle, ds, np.random.default_rng(2))
        assert w1_to_uniform(ps.empirical()) < 0.01

    def test_pit_uniformity_w1_bound(self):
        for n in (1000, 4000):
            ds, oracle = make_oracle_pair(n, seed=n)
            ps = pit_sample(oracle, ds, np.random.default_rng(3))
            assert w1_to_uniform(ps.empirical()) < 3.0 / np.sqrt(n)


class TestPitSample:
    def test_deterministic_given_seed(self):
        ds, oracle = make_oracle_pair(100, seed=1)
        a = pit_sample(oracle, ds, np.random.default_rng(7))
        b = pit_sample(oracle, ds, np.random.default_rng(7))
        np.testing.assert_array_equal(a.pits, b.pits)
        np.testing.assert_array_equal(a.rs, b.rs)

    def test_fresh_r_each_call(self):
        ds, oracle = make_oracle_pair(100, seed=1)
        rng = np.random.default_rng(7)
        a = pit_sample(oracle, ds, rng)
        b = pit_sample(oracle, ds, rng)
        assert np.any(a.rs != b.rs)

    def test_empty_dataset(self):
        _, oracle = make_oracle_pair(10, seed=0)
        with pytest.raises(DomainError):
            ds = Dataset(np.zeros((0, 2)), np.zeros(0), ("a", "b"))


class TestRecalibrated:
    def make(self):
        remap = MonotoneMap(np.asarray([0.0, 0.3, 1.0]), np.asarray([0.0, 0.6, 1.0]))
        inner = OracleForecaster(
            mean_fn=lambda A: np.zeros(A.shape[0]),
            std_fn=lambda A: np.ones(A.shape[0]),
        )
        return RecalibratedForecaster(inner=inner, remap=remap)

    def test_cdf_composition(self):
        f = self.make()
        fc = f.predict(np.zeros(1), 0.5)
        inner = GaussianForecast(0.0, 1.0)
        for y in (-2.0, -0.3, 0.0, 1.5):
            expected = np.interp(inner.cdf_at(y), [0.0, 0.3, 1.0], [0.0, 0.6, 1.0])
            assert fc.cdf_at(y) == pytest.approx(float(expected), abs=1e-12)

    def test_cdf_monotone_in_y(self):
        fc = self.make().predict(np.zeros(1), 0.5)
        ys = np.linspace(-4, 4, 201)
        vals = [fc.cdf_at(y) for y in ys]
        assert all(a <= b for a, b in zip(vals, vals[1:]))

    def test_quantile_inverts_composition(self):
        fc = self.make().predict(np.zeros(1), 0.5)
        for p in (0.05, 0.3, 0.61, 0.9):
            assert fc.cdf_at(fc.quantile(p)) == pytest.approx(p, abs=1e-9)

    def test_pit_batch_uses_remap(self):
        f = self.make()
        X = np.zeros((3, 1))
        y = np.asarray([0.0, 1.0, -1.0])
        pits = f.pit_batch(X, y, np.full(3, 0.5))
        inner_pits = f.inner.pit_batch(X, y, np.full(3, 0.5))
        np.testing.assert_allclose(pits, np.interp(inner_pits, [0, 0.3, 1], [0, 0.6, 1]), atol=1e-12)


class TestPersistence:
    def test_trained_round_trip(self, tmp_path):
        params = nn.mlp_init([3, 8, 5, 2], seed=11)
        std = Standardizer(mean=np.asarray([0.1, -0.2, 0.3]), scale=np.asarray([1.0, 2.0, 0.5]))
        f = TrainedForecaster(params=params, standardizer=std)
        path = tmp_path / "ckpt.json"
        save_forecaster(f, path, train_config={"alpha": 0.5})
        g = load_forecaster(path)
        X = np.random.default_rng(0).standard_normal((7, 3))
        r = np.random.default_rng(1).uniform(size=7)
        mu1, sg1 = f.predict_batch(X, r)
        mu2, sg2 = g.predict_batch(X, r)
        np.testing.assert_array_equal(mu1, mu2)  # exact float round-trip
        np.testing.assert_array_equal(sg1, sg2)

    def test_recalibrated_round_trip(self, tmp_path):
        remap = MonotoneMap(np.asarray([0.1, 0.9]), np.asarray([0.2, 0.8]))
        f = RecalibratedForecaster(inner=PassThroughForecaster(c=50.0), remap=remap)
        path = tmp_path / "r.json"
        save_forecaster(f, path)
        g = load_forecaster(path)
        assert isinstance(g, RecalibratedForecaster)
        assert g.inner.c == 50.0
        np.testing.assert_array_equal(g.remap.inputs, remap.inputs)

    def test_oracle_not_serializable(self):
        _, oracle = make_oracle_pair(5, seed=0)
        with pytest.raises(ConfigError):
            forecaster_to_doc(oracle)

    def test_bad_doc_rejected(self):
        from randcal.errors import ParseError

        with pytest.raises(ParseError):
            forecaster_from_doc({"format": "something-else"})
        with pytest.raises(ParseError):
            forecaster_from_doc({"format": "randcal-forecaster", "version": 99})
