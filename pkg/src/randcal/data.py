"""Synthetic generators, CSV ingestion, standardization, deterministic splits.

Three generators cover the experimental regimes the rest of the package is
benchmarked on:

* ``gen_toy`` -- 1-d smooth curve with a localized oscillatory region that a
  low-capacity deterministic fit systematically misses.
* ``gen_heteroscedastic`` -- d-dim inputs with two feature-threshold groups
  that differ in mean offset, noise scale, and noise *shape* (one group's
  noise is a skewed two-component mixture). A Gaussian-head fit therefore
  carries a structural per-group calibration error no amount of training
  removes, while group-blind pooled fits are miscalibrated even on average.
* ``gen_credit`` -- features mapped through a fixed smooth squashing map to
  a score in [0, 1] plus small Gaussian noise, clipped; the qualification
  threshold y0 is a configured quantile of the generated labels.

CSV format: header row, comma separator, '.' decimal, UTF-8. Labels are
never standardized (scale heads and likelihoods are in label units).
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError, ParseError


@dataclass(frozen=True)
class Dataset:
    """Feature matrix, labels, and column names. Immutable."""

    X: np.ndarray
    y: np.ndarray
    feature_names: tuple

    def __post_init__(self):
        X = np.ascontiguousarray(self.X, dtype=np.float64)
        y = np.ascontiguousarray(self.y, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] == 0:
            raise DomainError("dataset features must be a non-empty (n, d) matrix")
        if y.shape != (X.shape[0],):
            raise DomainError("labels must be a vector aligned with the feature rows")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise DomainError("dataset contains NaN or Inf")
        names = tuple(str(c) for c in self.feature_names)
        if len(names) != X.shape[1]:
            raise DomainError(
                f"{len(names)} feature names for {X.shape[1]} columns"
            )
        X.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "feature_names", names)

    def __len__(self):
        return self.X.shape[0]

    @property
    def d(self):
        return self.X.shape[1]

    def subset(self, indices):
        idx = np.asarray(indices, dtype=np.intp)
        return Dataset(self.X[idx], self.y[idx], self.feature_names)


@dataclass(frozen=True)
class Standardizer:
    """Per-feature affine transform fitted on the training split only."""

    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X):
        X = np.asarray(X, dtype=np.float64)
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        scale = np.where(scale > 0, scale, 1.0)  # constant columns pass through
        return cls(mean=mean, scale=scale)

    @classmethod
    def identity(cls, d):
        return cls(mean=np.zeros(d), scale=np.ones(d))

    def transform(self, X):
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.scale


# ---------------------------------------------------------------------------
# Generators
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ToySpec:
    n: int
    seed: int
    noise: float = 0.05
    region_center: float = 0.7
    region_fraction: float = 0.15
    bump_height: float = 1.5

    def __post_init__(self):
        if self.n <= 0:
            raise ConfigError("n must be positive")
        if self.noise < 0:
            raise ConfigError("noise must be >= 0")


def toy_mean(x, spec):
    """The toy generator's noiseless target curve."""
    z = (x - spec.region_center) / (spec.region_fraction / 2.0)
    envelope = np.exp(-0.5 * z**4)
    return 2.0 * x + spec.bump_height * envelope * np.sin(3.0 * np.pi * z)


def gen_toy(spec):
    rng = np.random.default_rng(spec.seed)
    x = rng.uniform(0.0, 1.0, size=spec.n)
    y = toy_mean(x, spec) + spec.noise * rng.standard_normal(spec.n)
    return Dataset(x[:, None], y, ("x0",))


@dataclass(frozen=True)
class HeteroscedasticSpec:
    n: int
    seed: int
    d: int = 8
    sigmas: tuple = (0.5, 2.0)
    mean_shifts: tuple = (-0.8, 0.8)
    # Per-group noise shape: 0 is Gaussian; otherwise a skewed mixture whose
    # tail points right for positive values, left for negative. Opposite
    # signs give the two groups opposing distortions, which no single
    # monotone recalibration map can fix for both at once.
    skews: tuple = (-0.85, 1.0)

    def __post_init__(self):
        if self.n <= 0 or self.d < 1:
            raise ConfigError("n and d must be positive")
        if len(self.sigmas) != 2 or len(self.mean_shifts) != 2 or len(self.skews) != 2:
            raise ConfigError("exactly two groups are supported")
        if min(self.sigmas) < 0:
            raise ConfigError("noise scales must be >= 0")


def hetero_group(X):
    """Group indicator used by the heteroscedastic generator: x0 > 0."""
    return (X[:, 0] > 0.0).astype(np.intp)


def _skewed_unit_noise(rng, n, skew):
    """Zero-mean unit-variance draw from a two-component Gaussian mixture.

    With weight 3/4 on a component at -a and 1/4 at +3a; skew in [0, 1]
    interpolates a between 0 (plain Gaussian) and 0.55.
    """
    a = 0.55 * float(skew)
    resid = 1.0 - 3.0 * a * a  # leftover variance for the component widths
    if resid <= 0:
        raise ConfigError("skew too large for a unit-variance mixture")
    s = math.sqrt(resid)
    comp = rng.uniform(size=n) < 0.75
    centers = np.where(comp, -a, 3.0 * a)
    return centers + s * rng.standard_normal(n)


def gen_heteroscedastic(spec):
    rng = np.random.default_rng(spec.seed)
    X = rng.standard_normal((spec.n, spec.d))
    g = hetero_group(X)
    w = rng.standard_normal(spec.d) / np.sqrt(spec.d)
    base = X @ w + 0.4 * np.sin(1.5 * X[:, min(1, spec.d - 1)])
    eps = np.empty(spec.n)
    for gi in (0, 1):
        idx = np.flatnonzero(g == gi)
        sk = spec.skews[gi]
        if sk == 0:
            eps[idx] = rng.standard_normal(idx.size)
        else:
            eps[idx] = math.copysign(1.0, sk) * _skewed_unit_noise(rng, idx.size, abs(sk))
    shifts = np.asarray(spec.mean_shifts)[g]
    scales = np.asarray(spec.sigmas)[g]
    y = base + shifts + scales * eps
    names = tuple(f"x{j}" for j in range(spec.d))
    return Dataset(X, y, names)


@dataclass(frozen=True)
class CreditSpec:
    n: int
    seed: int
    d: int = 8
    noise: float = 0.06
    y0_quantile: float = 0.3

    def __post_init__(self):
        if self.n <= 0 or self.d < 2:
            raise ConfigError("n must be positive and d >= 2")
        if not (0.0 < self.y0_quantile < 1.0):
            raise ConfigError("y0_quantile must lie in (0, 1)")


def credit_score(X):
    """Fixed smooth map from features to a latent score in (0, 1)."""
    d = X.shape[1]
    w = 0.9 ** np.arange(d)
    w = w / np.linalg.norm(w)
    u = 1.6 * (X @ w) + 0.8 * np.sin(1.9 * X[:, 0]) + 0.5 * np.tanh(X[:, 1] * X[:, min(2, d - 1)])
    return 1.0 / (1.0 + np.exp(-u))


def gen_credit(spec):
    """Returns (dataset, y0) with y0 at the configured label quantile."""
    rng = np.random.default_rng(spec.seed)
    X = rng.standard_normal((spec.n, spec.d))
    score = credit_score(X)
    y = np.clip(score + spec.noise * rng.standard_normal(spec.n), 0.0, 1.0)
    y0 = float(np.quantile(y, spec.y0_quantile))
    names = tuple(f"x{j}" for j in range(spec.d))
    return Dataset(X, y, names), y0


# ---------------------------------------------------------------------------
# CSV in/out, splits
# ---------------------------------------------------------------------------


def save_csv(dataset, path, target="y"):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(dataset.feature_names) + [target])
        for i in range(len(dataset)):
            # repr of a Python float round-trips exactly
            writer.writerow([repr(float(v)) for v in dataset.X[i]] + [repr(float(dataset.y[i]))])


def load_csv(path, target="y"):
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        if target not in header:
            raise ConfigError(f"{path}: no column named {target!r} in header {header}")
        t_col = header.index(target)
        rows = []
        for r_idx, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ParseError(f"{path}: row {r_idx} has {len(row)} cells, expected {len(header)}")
            vals = []
            for c_idx, cell in enumerate(row):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise ParseError(
                        f"{path}: non-numeric cell at row {r_idx}, column {header[c_idx]!r}: {cell!r}"
                    ) from None
            rows.append(vals)
    if not rows:
        raise ParseError(f"{path}: no data rows")
    arr = np.asarray(rows, dtype=np.float64)
    mask = np.ones(len(header), dtype=bool)
    mask[t_col] = False
    names = tuple(h for j, h in enumerate(header) if mask[j])
    return Dataset(arr[:, mask], arr[:, t_col], names)


def split(dataset, fractions, seed):
    """Deterministic shuffle-split into len(fractions) disjoint parts."""
    fr = [float(f) for f in fractions]
    if any(f <= 0 for f in fr):
        raise ConfigError("split fractions must be positive")
    if abs(sum(fr) - 1.0) > 1e-9:
        raise ConfigError(f"split fractions must sum to 1, got {sum(fr)}")
    n = len(dataset)
    perm = np.random.default_rng(seed).permutation(n)
    bounds = [int(round(c * n)) for c in np.cumsum(fr)]
    bounds[-1] = n
    parts = []
    start = 0
    for b in bounds:
        parts.append(dataset.subset(perm[start:b]))
        start = b
    return tuple(parts)
