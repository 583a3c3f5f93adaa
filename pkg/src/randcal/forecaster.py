"""Randomized forecasters: map (x, r) with r in [0, 1] to a predictive CDF.

A forecaster is randomized through its second argument only: drawing
r ~ Uniform[0, 1] per prediction turns the deterministic map into a random
CDF-valued prediction. Variants:

* :class:`TrainedForecaster` -- network-backed, with input standardization.
* :class:`OracleForecaster` -- true conditional mean/stdev functions of a
  generator; ignores r.
* :class:`PassThroughForecaster` -- N(-c * Q(r), c^2) where Q is the normal
  quantile, so the CDF at any y is Phi(y/c + Q(r)) -> r as c grows: always
  calibrated, uselessly unsharp. Realized with finite c (default 1e9).
* :class:`RecalibratedForecaster` -- any forecaster composed with a
  monotone recalibration map on CDF values.

CDF evaluations are clamped to [1e-15, 1 - 1e-15] for downstream log
safety. All variants are immutable; prediction is pure.
"""

import json
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels, nn
from .core import PROB_TINY, EmpiricalPit, MonotoneMap, std_normal_inv_cdf
from .data import Standardizer
from .errors import ConfigError, DomainError, ParseError

_SQRT_2PI = math.sqrt(2.0 * math.pi)


def _clamp_prob(p):
    return np.clip(p, PROB_TINY, 1.0 - PROB_TINY)


@dataclass(frozen=True)
class GaussianForecast:
    """One predicted CDF: N(mu, sigma^2) in label units."""

    mu: float
    sigma: float

    def __post_init__(self):
        if not (math.isfinite(self.mu) and math.isfinite(self.sigma)):
            raise DomainError("forecast parameters must be finite")
        if self.sigma <= 0:
            raise DomainError(f"sigma must be positive, got {self.sigma}")

    def cdf_at(self, y):
        y = float(y)
        if not math.isfinite(y):
            raise DomainError("y must be finite")
        z = (y - self.mu) / self.sigma
        return float(_clamp_prob(0.5 * math.erfc(-z / math.sqrt(2.0))))

    def quantile(self, p):
        return self.mu + self.sigma * std_normal_inv_cdf(p)

    def credible_interval(self, level):
        level = float(level)
        if not (0.0 < level < 1.0):
            raise DomainError(f"level must lie in (0, 1), got {level}")
        return (self.quantile((1.0 - level) / 2.0), self.quantile((1.0 + level) / 2.0))

    def log_density(self, y):
        z = (float(y) - self.mu) / self.sigma
        return -0.5 * z * z - math.log(self.sigma * _SQRT_2PI)


@dataclass(frozen=True)
class RecalibratedForecast:
    """A base forecast composed with a monotone map on CDF values."""

    inner: GaussianForecast
    remap: MonotoneMap

    @property
    def mu(self):
        return self.inner.mu

    @property
    def sigma(self):
        # Reported scale of the underlying prediction; the composed CDF has
        # no closed-form standard deviation.
        return self.inner.sigma

    def cdf_at(self, y):
        return float(_clamp_prob(self.remap(self.inner.cdf_at(y))))

    def quantile(self, p):
        p = float(p)
        if not (0.0 < p < 1.0):
            raise DomainError(f"p must lie strictly in (0, 1), got {p}")
        t = self.remap.inverse(p)
        return self.inner.quantile(min(max(t, PROB_TINY), 1.0 - PROB_TINY))

    def credible_interval(self, level):
        level = float(level)
        if not (0.0 < level < 1.0):
            raise DomainError(f"level must lie in (0, 1), got {level}")
        return (self.quantile((1.0 - level) / 2.0), self.quantile((1.0 + level) / 2.0))

    def log_density(self, y):
        q = self.inner.cdf_at(y)
        slope = _map_slope(self.remap, np.asarray([q]))[0]
        dens = max(slope, PROB_TINY) * math.exp(self.inner.log_density(y))
        return math.log(max(dens, PROB_TINY))


def _map_slope(remap, q):
    """Derivative of the piecewise-linear map at q (0 outside the knots)."""
    xi, yo = remap.inputs, remap.outputs
    if xi.size < 2:
        return np.zeros_like(q)
    seg_slopes = np.diff(yo) / np.diff(xi)
    idx = np.clip(np.searchsorted(xi, q, side="right") - 1, 0, seg_slopes.size - 1)
    out = seg_slopes[idx]
    return np.where((q < xi[0]) | (q > xi[-1]), 0.0, out)


@dataclass(frozen=True)
class PitSample:
    """PIT values h[x_i, r_i](y_i) aligned with the dataset, plus the r_i."""

    pits: np.ndarray
    rs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.pits, dtype=np.float64)
        r = np.asarray(self.rs, dtype=np.float64)
        if p.ndim != 1 or p.size == 0 or p.shape != r.shape:
            raise DomainError("pits and rs must be non-empty aligned vectors")
        object.__setattr__(self, "pits", p)
        object.__setattr__(self, "rs", r)

    @property
    def n(self):
        return self.pits.size

    def empirical(self):
        return EmpiricalPit(self.pits)

    def subset(self, indices):
        idx = np.asarray(indices, dtype=np.intp)
        return PitSample(self.pits[idx], self.rs[idx])


def _check_r(r):
    r = np.asarray(r, dtype=np.float64)
    if np.any(~np.isfinite(r)) or np.any(r < 0.0) or np.any(r > 1.0):
        raise DomainError("r must lie in [0, 1]")
    return r


class Forecaster:
    """Interface: predict one CDF, or batched (mu, sigma) arrays."""

    def predict(self, x, r):
        raise NotImplementedError

    def predict_batch(self, X, r):
        """Vectorized (mu, sigma) for Gaussian-output forecasters."""
        raise NotImplementedError

    def pit_batch(self, X, y, r):
        """CDF values at the observed labels, vectorized and clamped."""
        mu, sigma = self.predict_batch(X, r)
        z = (np.asarray(y, dtype=np.float64) - mu) / sigma
        return _clamp_prob(_kernels.norm_cdf(z))


@dataclass(frozen=True)
class TrainedForecaster(Forecaster):
    params: nn.MlpParams
    standardizer: Standardizer

    def predict(self, x, r):
        mu, sigma = self.predict_batch(np.atleast_2d(np.asarray(x, dtype=np.float64)), r)
        return GaussianForecast(float(mu[0]), float(sigma[0]))

    def predict_batch(self, X, r):
        r = _check_r(r)
        Xs = self.standardizer.transform(np.atleast_2d(X))
        _, mu, sigma = nn.mlp_forward_batch(self.params, Xs, r)
        return mu, sigma


@dataclass(frozen=True)
class OracleForecaster(Forecaster):
    """True conditional mean / stdev of a generator; ignores r."""

    mean_fn: object
    std_fn: object

    def predict(self, x, r):
        _check_r(r)
        X = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return GaussianForecast(float(self.mean_fn(X)[0]), float(self.std_fn(X)[0]))

    def predict_batch(self, X, r):
        _check_r(r)
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        mu = np.asarray(self.mean_fn(X), dtype=np.float64)
        sigma = np.asarray(self.std_fn(X), dtype=np.float64)
        if mu.shape != (X.shape[0],) or sigma.shape != (X.shape[0],):
            raise DomainError("oracle mean/std functions must return one value per row")
        return mu, sigma


# r values this close to {0, 1} are clipped before the normal quantile so
# the pass-through construction stays finite.
_R_EDGE = 1e-12


@dataclass(frozen=True)
class PassThroughForecaster(Forecaster):
    """h[x, r] = N(-c * Q(r), c^2): CDF at y is Phi(y/c + Q(r)) ~= r.

    The construction is exactly calibrated in the c -> infinity limit; with
    the default c = 1e9 the CDF deviates from r by at most ~|y|/c * 0.4,
    i.e. below 1e-6 for |y| <= 1e3. Its predicted scale is c: calibration
    without sharpness.
    """

    c: float = 1e9

    def __post_init__(self):
        if not (self.c > 0):
            raise DomainError("c must be positive")

    def predict(self, x, r):
        mu, sigma = self.predict_batch(np.zeros((1, 1)), r)
        return GaussianForecast(float(mu[0]), float(sigma[0]))

    def predict_batch(self, X, r):
        r = _check_r(r)
        n = np.atleast_2d(X).shape[0]
        rr = np.clip(np.broadcast_to(r, (n,)), _R_EDGE, 1.0 - _R_EDGE)
        q = np.asarray([std_normal_inv_cdf(v) for v in np.atleast_1d(rr)])
        return -self.c * q, np.full(n, self.c)


@dataclass(frozen=True)
class RecalibratedForecaster(Forecaster):
    inner: Forecaster
    remap: MonotoneMap

    def predict(self, x, r):
        return RecalibratedForecast(self.inner.predict(x, r), self.remap)

    def predict_batch(self, X, r):
        # Location/scale of the underlying prediction (the remap acts on
        # CDF values, not on these).
        return self.inner.predict_batch(X, r)

    def pit_batch(self, X, y, r):
        return _clamp_prob(self.remap(self.inner.pit_batch(X, y, r)))


def pit_sample(forecaster, dataset, rng):
    """Draw one fresh r_i ~ U[0,1] per sample and evaluate the PITs."""
    n = len(dataset)
    if n == 0:
        raise DomainError("dataset is empty")
    rs = rng.uniform(0.0, 1.0, size=n)
    pits = forecaster.pit_batch(dataset.X, dataset.y, rs)
    return PitSample(pits, rs)


# ---------------------------------------------------------------------------
# Save / load (JSON checkpoint, exact float round-trip via repr)
# ---------------------------------------------------------------------------

CHECKPOINT_FORMAT = "randcal-forecaster"
CHECKPOINT_VERSION = 1


def forecaster_to_doc(forecaster, train_config=None):
    if isinstance(forecaster, TrainedForecaster):
        p = forecaster.params
        return {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "kind": "trained",
            "layer_sizes": list(p.layer_sizes),
            "concat_extra": p.concat_extra,
            "sigma_floor": p.sigma_floor,
            "weights": [w.ravel().tolist() for w in p.weights],
            "biases": [b.tolist() for b in p.biases],
            "standardizer": {
                "mean": forecaster.standardizer.mean.tolist(),
                "scale": forecaster.standardizer.scale.tolist(),
            },
            "train_config": train_config,
        }
    if isinstance(forecaster, PassThroughForecaster):
        return {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "kind": "passthrough",
            "c": forecaster.c,
        }
    if isinstance(forecaster, RecalibratedForecaster):
        return {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "kind": "recalibrated",
            "inner": forecaster_to_doc(forecaster.inner),
            "map_inputs": forecaster.remap.inputs.tolist(),
            "map_outputs": forecaster.remap.outputs.tolist(),
        }
    raise ConfigError(f"forecaster of type {type(forecaster).__name__} cannot be serialized")


def forecaster_from_doc(doc):
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
        raise ParseError("not a forecaster checkpoint document")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ParseError(f"unsupported checkpoint version {doc.get('version')!r}")
    kind = doc.get("kind")
    if kind == "trained":
        sizes = [int(s) for s in doc["layer_sizes"]]
        extra = 1 if doc["concat_extra"] else 0
        weights = []
        fan_in = sizes[0] + extra
        for out, flat in zip(sizes[1:], doc["weights"]):
            weights.append(np.asarray(flat, dtype=np.float64).reshape(fan_in, out))
            fan_in = out + extra
        params = nn.MlpParams(
            layer_sizes=tuple(sizes),
            weights=tuple(weights),
            biases=tuple(np.asarray(b, dtype=np.float64) for b in doc["biases"]),
            concat_extra=bool(doc["concat_extra"]),
            sigma_floor=float(doc["sigma_floor"]),
        )
        st = doc["standardizer"]
        std = Standardizer(
            mean=np.asarray(st["mean"], dtype=np.float64),
            scale=np.asarray(st["scale"], dtype=np.float64),
        )
        return TrainedForecaster(params=params, standardizer=std)
    if kind == "passthrough":
        return PassThroughForecaster(c=float(doc["c"]))
    if kind == "recalibrated":
        inner = forecaster_from_doc(doc["inner"])
        remap = MonotoneMap(
            np.asarray(doc["map_inputs"], dtype=np.float64),
            np.asarray(doc["map_outputs"], dtype=np.float64),
        )
        return RecalibratedForecaster(inner=inner, remap=remap)
    raise ParseError(f"unknown forecaster kind {kind!r}")


def save_forecaster(forecaster, path, train_config=None):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(forecaster_to_doc(forecaster, train_config=train_config), fh)


def load_forecaster(path):
    with open(path, "r", encoding="utf-8") as fh:
        return forecaster_from_doc(json.load(fh))
