"""Evaluation stack: calibration errors, group search, sharpness, recalibration.

Average calibration error is the exact Wasserstein-1 distance between the
PIT sample and the uniform CDF. Group error restricts the PITs to a
subgroup of the inputs. The worst-group ("adversarial") curve reports, for
each group-size fraction delta, the largest group error over a documented
candidate family, as a function of delta.

The candidate family contains only groups that are functions of the inputs
(feature-order windows, a predicted-center-order window family, the
interpretable above/below-median groups and their pairwise intersections,
and the full set). Groups selected on realized PIT or label values are
deliberately excluded: a subset chosen by outcome ranks is not a subgroup
of the input space, and scoring such sets would report large errors even
for a perfectly calibrated forecaster. With input-measurable candidates
the curve is a heuristic LOWER bound on the true worst-group error.

Recalibration fits a monotone map from predicted CDF values to their
empirical ranks on a validation split and composes it with the forecaster.
"""

from dataclasses import dataclass

import numpy as np

from .core import EmpiricalPit, pav_isotonic, w1_to_uniform
from .errors import ConfigError, DomainError
from .forecaster import RecalibratedForecaster, pit_sample

MIN_GROUP_SIZE_DEFAULT = 150


@dataclass(frozen=True)
class GroupSpec:
    """A subgroup of dataset rows with a human-readable derivation."""

    name: str
    kind: str  # 'threshold' | 'intersection' | 'window' | 'all' | 'explicit'
    members: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.members, dtype=np.intp)
        if m.size == 0:
            raise DomainError(f"group {self.name!r} has no members")
        object.__setattr__(self, "members", m)

    @property
    def size(self):
        return int(self.members.size)

    def fraction(self, n):
        return self.size / n


def average_calibration_error(pits):
    """W1 distance of the PIT sample from uniform (equals the ECE)."""
    if isinstance(pits, EmpiricalPit):
        return w1_to_uniform(pits)
    values = pits.pits if hasattr(pits, "pits") else np.asarray(pits, dtype=np.float64)
    return w1_to_uniform(EmpiricalPit(values))


def group_calibration_error(pits, group):
    """W1-to-uniform of the PIT values restricted to the group's members."""
    values = pits.pits if hasattr(pits, "pits") else np.asarray(pits, dtype=np.float64)
    members = group.members if isinstance(group, GroupSpec) else np.asarray(group, dtype=np.intp)
    if members.size == 0:
        raise DomainError("group is empty")
    if members.min() < 0 or members.max() >= values.size:
        raise DomainError("group members outside the sample index range")
    return w1_to_uniform(EmpiricalPit(values[members]))


def default_min_group_size(n):
    """150 by default; scaled down to max(30, ceil(0.05 n)) for small data."""
    if n >= 3000:
        return MIN_GROUP_SIZE_DEFAULT
    return max(30, int(np.ceil(0.05 * n)))


def interpretable_groups(dataset, min_size=None):
    """Above/below-median groups per feature plus all pairwise intersections.

    Medians are computed on this dataset (the evaluation split); ties go to
    the below-or-equal side. Groups smaller than ``min_size`` are dropped.
    """
    n = len(dataset)
    if min_size is None:
        min_size = default_min_group_size(n)
    singles = []
    for j, name in enumerate(dataset.feature_names):
        med = float(np.median(dataset.X[:, j]))
        above = np.flatnonzero(dataset.X[:, j] > med)
        below = np.flatnonzero(dataset.X[:, j] <= med)
        for side, idx in (("above", above), ("below", below)):
            if idx.size > 0:
                singles.append(GroupSpec(name=f"{name} {side} median", kind="threshold", members=idx))
    groups = [g for g in singles if g.size >= min_size]
    for i in range(len(singles)):
        for j in range(i + 1, len(singles)):
            inter = np.intersect1d(singles[i].members, singles[j].members, assume_unique=True)
            if inter.size >= min_size:
                groups.append(
                    GroupSpec(
                        name=f"{singles[i].name} & {singles[j].name}",
                        kind="intersection",
                        members=inter,
                    )
                )
    return groups


def _window_starts(n, m, stride_rule="default"):
    """Start offsets for contiguous windows of size m in an n-element order.

    Uses stride ceil(m/4); degrades to stride 1 whenever the number of
    possible windows is small enough to enumerate exhaustively (<= 512),
    which makes the heuristic exact on small instances. The final window
    is always included.
    """
    total = n - m + 1
    if total <= 0:
        return [0] if m == n else []
    if stride_rule == "exhaustive" or total <= 512:
        stride = 1
    else:
        stride = max(1, int(np.ceil(m / 4)))
    starts = list(range(0, total, stride))
    if starts[-1] != total - 1:
        starts.append(total - 1)
    return starts


def worst_window(values_in_order, m, stride_rule="default"):
    """Worst W1-to-uniform over contiguous windows of size m in a given order.

    ``values_in_order`` are PIT values arranged along some input-derived
    ordering. Returns (start, error) of the worst window, or None if m
    exceeds the sample size.
    """
    v = np.asarray(values_in_order, dtype=np.float64)
    n = v.size
    if m > n or m < 1:
        return None
    best = (-1.0, 0)
    for s in _window_starts(n, m, stride_rule):
        err = w1_to_uniform(EmpiricalPit(v[s:s + m]))
        if err > best[0]:
            best = (err, s)
    return best[1], best[0]


@dataclass(frozen=True)
class CurvePoint:
    delta: float
    epsilon_hat: float
    witness: GroupSpec

    def to_dict(self, n):
        return {
            "delta": self.delta,
            "epsilon_hat": self.epsilon_hat,
            "witness": {
                "name": self.witness.name,
                "kind": self.witness.kind,
                "size": self.witness.size,
                "fraction": self.witness.fraction(n),
            },
        }


def _candidate_orders(forecaster, dataset):
    """Input-derived sort orders: one per feature plus the predicted center.

    The predicted-center order uses a fixed seed value (r = 0.5) so the
    ordering is a deterministic function of the inputs.
    """
    orders = []
    for j, name in enumerate(dataset.feature_names):
        orders.append((f"{name}-order", np.argsort(dataset.X[:, j], kind="stable")))
    try:
        mu, _ = forecaster.predict_batch(dataset.X, np.full(len(dataset), 0.5))
        orders.append(("center-order", np.argsort(mu, kind="stable")))
    except NotImplementedError:
        pass
    return orders


def adversarial_curve(forecaster, dataset, deltas, rng, min_size=None, pits=None):
    """Worst-group calibration error as a function of the group fraction.

    For each delta, reports the maximum group W1 error over all candidate
    groups of size >= ceil(delta * n). The candidate family is shared
    across deltas (windows generated at every requested size, plus the
    interpretable groups and the full set), so the curve is non-increasing
    in delta by construction. At delta = 1 only the full set qualifies and
    the value equals the average calibration error exactly.
    """
    n = len(dataset)
    deltas = sorted(float(d) for d in deltas)
    if any(d <= 0.0 or d > 1.0 for d in deltas):
        raise DomainError("group fractions must lie in (0, 1]")
    if pits is None:
        pits = pit_sample(forecaster, dataset, rng)
    values = pits.pits

    candidates = []
    orders = _candidate_orders(forecaster, dataset)
    sizes = sorted({min(n, int(np.ceil(d * n))) for d in deltas})
    for m in sizes:
        if m == n:
            continue
        for order_name, order in orders:
            ordered = values[order]
            for s in _window_starts(n, m, "default"):
                candidates.append(
                    GroupSpec(
                        name=f"{order_name}[{s}:{s + m}]",
                        kind="window",
                        members=order[s:s + m],
                    )
                )
    for g in interpretable_groups(dataset, min_size=min_size):
        candidates.append(g)
    candidates.append(GroupSpec(name="all", kind="all", members=np.arange(n)))

    errors = np.asarray([group_calibration_error(values, g) for g in candidates])
    cand_sizes = np.asarray([g.size for g in candidates])

    curve = []
    for d in deltas:
        m = min(n, int(np.ceil(d * n)))
        ok = np.flatnonzero(cand_sizes >= m)
        k = ok[np.argmax(errors[ok])]
        curve.append(CurvePoint(delta=d, epsilon_hat=float(errors[k]), witness=candidates[k]))
    return curve


@dataclass(frozen=True)
class SharpnessStats:
    mean_nll: float
    mean_sigma: float

    def to_dict(self):
        return {"mean_nll": self.mean_nll, "mean_sigma": self.mean_sigma}


def sharpness(forecaster, dataset, rng):
    """Mean negative log density at the labels and mean predicted scale."""
    n = len(dataset)
    if n == 0:
        raise DomainError("dataset is empty")
    rs = rng.uniform(0.0, 1.0, size=n)
    if isinstance(forecaster, RecalibratedForecaster):
        nll = -np.asarray(
            [
                forecaster.predict(dataset.X[i], rs[i]).log_density(dataset.y[i])
                for i in range(n)
            ]
        )
        _, sigma = forecaster.predict_batch(dataset.X, rs)
        return SharpnessStats(float(np.mean(nll)), float(np.mean(sigma)))
    mu, sigma = forecaster.predict_batch(dataset.X, rs)
    z = (dataset.y - mu) / sigma
    nll = 0.5 * z * z + np.log(sigma) + 0.5 * np.log(2.0 * np.pi)
    return SharpnessStats(float(np.mean(nll)), float(np.mean(sigma)))


def recalibrate(forecaster, val_dataset, rng):
    """Fit an isotonic CDF-value remap on validation PITs and compose it.

    PITs are mapped to their empirical ranks i/(n+1); pool-adjacent-
    violators keeps the map monotone under ties. Average calibration on
    the fitting split improves (or stays equal) by construction.
    """
    n = len(val_dataset)
    if n < 10:
        raise ConfigError(f"recalibration needs at least 10 validation points, got {n}")
    ps = pit_sample(forecaster, val_dataset, rng)
    order = np.sort(ps.pits)
    ranks = np.arange(1, n + 1) / (n + 1.0)
    remap = pav_isotonic(list(zip(order, ranks)))
    return RecalibratedForecaster(inner=forecaster, remap=remap)


def pit_violation_fraction(forecaster, dataset, epsilon, rng):
    """Fraction of samples with |CDF(y_i) - r_i| >= epsilon, fresh r_i."""
    if not (0.0 <= epsilon <= 1.0):
        raise DomainError(f"epsilon must lie in [0, 1], got {epsilon}")
    if len(dataset) == 0:
        raise DomainError("dataset is empty")
    rs = rng.uniform(0.0, 1.0, size=len(dataset))
    pits = forecaster.pit_batch(dataset.X, dataset.y, rs)
    return float(np.mean(np.abs(pits - rs) >= epsilon))


def mean_pit_residual(forecaster, dataset, grid_size=64):
    """Mean over samples of the r-grid average of |CDF(y_i) - r|.

    For forecasters monotone in r this equals the mean per-input W1
    calibration error, estimated on a deterministic interior r grid.
    """
    n = len(dataset)
    if n == 0:
        raise DomainError("dataset is empty")
    grid = (np.arange(grid_size) + 1.0) / (grid_size + 1.0)
    total = 0.0
    for r in grid:
        pits = forecaster.pit_batch(dataset.X, dataset.y, np.full(n, r))
        total += float(np.mean(np.abs(pits - r)))
    return total / grid_size


def monotonicity_fraction(forecaster, dataset, grid_size, rng, max_samples=256):
    """Fraction of r-grid pairs ordered consistently, best direction per x.

    For each sampled (x, y) the CDF value at y is evaluated on an
    ascending interior r grid; the score is the larger of the
    non-decreasing and non-increasing ordered-pair fractions (ties count
    for both, so a forecaster that ignores r scores 1.0). Returns the mean
    over samples. Diagnostic only: nothing enforces monotonicity in r.
    """
    if grid_size < 3:
        raise ConfigError(f"grid_size must be >= 3, got {grid_size}")
    n = len(dataset)
    if n == 0:
        raise DomainError("dataset is empty")
    take = min(n, max_samples)
    idx = rng.choice(n, size=take, replace=False) if take < n else np.arange(n)
    grid = (np.arange(grid_size) + 1.0) / (grid_size + 1.0)
    X_rep = np.repeat(dataset.X[idx], grid_size, axis=0)
    y_rep = np.repeat(dataset.y[idx], grid_size)
    r_rep = np.tile(grid, take)
    pits = forecaster.pit_batch(X_rep, y_rep, r_rep).reshape(take, grid_size)
    a = pits[:, :, None]
    b = pits[:, None, :]
    upper = np.triu(np.ones((grid_size, grid_size), dtype=bool), k=1)
    inc = np.sum((a <= b) & upper, axis=(1, 2))
    dec = np.sum((a >= b) & upper, axis=(1, 2))
    pairs = upper.sum()
    return float(np.mean(np.maximum(inc, dec) / pairs))


@dataclass
class CalibrationReport:
    """Bundle of everything `evaluate` measures on one dataset."""

    n: int
    average_w1: float
    curve: list
    worst_interpretable: tuple  # (GroupSpec, error) or None
    sharpness: SharpnessStats
    certificate: object
    monotone_fraction: float
    min_group_size: int

    def to_dict(self):
        wi = None
        if self.worst_interpretable is not None:
            g, e = self.worst_interpretable
            wi = {
                "name": g.name,
                "kind": g.kind,
                "size": g.size,
                "fraction": g.fraction(self.n),
                "error": e,
            }
        return {
            "n": self.n,
            "average_w1": self.average_w1,
            "adversarial_curve": [p.to_dict(self.n) for p in self.curve],
            "worst_interpretable": wi,
            "sharpness": self.sharpness.to_dict(),
            "certificate": self.certificate.to_dict(),
            "monotone_fraction": self.monotone_fraction,
            "min_group_size": self.min_group_size,
        }


EVAL_DELTAS_DEFAULT = (0.1, 0.2, 0.4, 0.6, 0.8, 1.0)


def evaluate(
    forecaster,
    dataset,
    rng,
    deltas=EVAL_DELTAS_DEFAULT,
    epsilon=0.1,
    gamma=0.05,
    min_size=None,
    monotonicity_grid=9,
):
    """Full calibration report on one dataset.

    The curve and the average error share one PIT draw (so the delta = 1
    endpoint equals the average exactly); sharpness, the certificate and
    the monotonicity diagnostic use independent draws from ``rng``.
    """
    from .training import certify_forecaster  # local import to avoid a cycle

    n = len(dataset)
    if min_size is None:
        min_size = default_min_group_size(n)
    pits = pit_sample(forecaster, dataset, rng)
    curve = adversarial_curve(forecaster, dataset, deltas, rng, min_size=min_size, pits=pits)
    avg = average_calibration_error(pits)
    groups = interpretable_groups(dataset, min_size=min_size)
    worst = None
    if groups:
        errs = [group_calibration_error(pits, g) for g in groups]
        k = int(np.argmax(errs))
        worst = (groups[k], float(errs[k]))
    sharp = sharpness(forecaster, dataset, rng)
    cert = certify_forecaster(forecaster, dataset, epsilon, gamma, rng)
    mono = monotonicity_fraction(forecaster, dataset, monotonicity_grid, rng)
    return CalibrationReport(
        n=n,
        average_w1=avg,
        curve=curve,
        worst_interpretable=worst,
        sharpness=sharp,
        certificate=cert,
        monotone_fraction=mono,
        min_group_size=min_size,
    )
