import numpy as np
import pytest

from randcal.data import Dataset
from randcal.forecaster import OracleForecaster


def make_oracle_pair(n, seed, d=3, noise=1.0):
    """A Gaussian-conditional dataset plus the matching oracle forecaster.

    y = 2*x0 + noise * eps with eps ~ N(0, 1), so the oracle's Gaussian
    forecast IS the true conditional distribution.
    """
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    y = 2.0 * X[:, 0] + noise * rng.standard_normal(n)
    ds = Dataset(X, y, tuple(f"x{j}" for j in range(d)))
    oracle = OracleForecaster(
        mean_fn=lambda A: 2.0 * A[:, 0],
        std_fn=lambda A: np.full(A.shape[0], noise),
    )
    return ds, oracle


@pytest.fixture
def oracle_pair():
    return make_oracle_pair(2000, seed=99)
