"""Scalar numeric kernels shared by every other module.

Contents: standard-normal CDF/PDF/quantile, the exact Wasserstein-1
distance between an empirical sample on [0, 1] and the uniform CDF (two
independent closed forms -- see :func:`w1_to_uniform` and :func:`ece`),
and pool-adjacent-violators isotonic regression.

All functions here are pure and operate on immutable inputs, so they are
safe to call concurrently.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

# Probabilities are clamped away from {0, 1} so downstream logs and
# quantile lookups never produce infinities.
PROB_TINY = 1e-15

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _require_finite(name, value):
    if not math.isfinite(value):
        raise DomainError(f"{name} must be finite, got {value!r}")


def std_normal_cdf(z):
    """Standard normal CDF via erfc, clamped to [1e-15, 1 - 1e-15].

    erfc(-z/sqrt(2))/2 keeps full relative accuracy in the lower tail;
    the C library's erfc is accurate to ~1 ulp.
    """
    z = float(z)
    _require_finite("z", z)
    p = 0.5 * math.erfc(-z / _SQRT2)
    return min(max(p, PROB_TINY), 1.0 - PROB_TINY)


def std_normal_pdf(z):
    """Standard normal density exp(-z^2/2)/sqrt(2 pi)."""
    z = float(z)
    _require_finite("z", z)
    return _INV_SQRT_2PI * math.exp(-0.5 * z * z)


# Acklam's rational approximation to the normal quantile (absolute error
# ~1.15e-9), followed by one Halley refinement step which brings it to
# machine precision.
_ACKLAM_A = (
    -3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
    1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00,
)
_ACKLAM_B = (
    -5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
    6.680131188771972e01, -1.328068155288572e01,
)
_ACKLAM_C = (
    -7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
    -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00,
)
_ACKLAM_D = (
    7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
    3.754408661907416e00,
)
_ACKLAM_LOW = 0.02425


def std_normal_inv_cdf(p):
    """Inverse of the standard normal CDF on (0, 1)."""
    p = float(p)
    if not (0.0 < p < 1.0) or not math.isfinite(p):
        raise DomainError(f"p must lie strictly in (0, 1), got {p!r}")
    a, b, c, d = _ACKLAM_A, _ACKLAM_B, _ACKLAM_C, _ACKLAM_D
    if p < _ACKLAM_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / (
            (((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0
        )
    elif p <= 1.0 - _ACKLAM_LOW:
        q = p - 0.5
        r = q * q
        x = (
            (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5])
            * q
            / (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0)
        )
    else:
        q = math.sqrt(-2.0 * math.log1p(-p))
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / (
            (((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0
        )
    # Halley step on f(x) = Phi(x) - p.
    err = 0.5 * math.erfc(-x / _SQRT2) - p
    u = err * math.sqrt(2.0 * math.pi) * math.exp(0.5 * x * x)
    return x - u / (1.0 + 0.5 * x * u)


@dataclass(frozen=True)
class EmpiricalPit:
    """A sorted sample of probability integral transform values in [0, 1]."""

    values: np.ndarray
    n: int = field(init=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1 or v.size == 0:
            raise DomainError("PIT sample must be a non-empty 1-d array")
        if not np.all(np.isfinite(v)):
            raise DomainError("PIT values must be finite")
        if v.min() < 0.0 or v.max() > 1.0:
            raise DomainError("PIT values must lie in [0, 1]")
        v = np.sort(v)
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "n", int(v.size))


def _segment_areas(lo, hi, level):
    """Integral of |level - t| over [lo, hi] per segment, vectorized."""
    width = hi - lo
    crossing = (level > lo) & (level < hi)
    plain = np.abs(level - 0.5 * (lo + hi)) * width
    split = 0.5 * ((level - lo) ** 2 + (hi - level) ** 2)
    return np.where(crossing, split, plain)


def w1_to_uniform(pits):
    """Wasserstein-1 distance between the sample and the uniform CDF.

    Computed in the CDF ("vertical") form: the empirical CDF F_n is
    constant at level i/n between consecutive sorted values, so
    int_0^1 |F_n(r) - r| dr decomposes into exact per-segment integrals.
    No binning or Monte Carlo. The result lies in [0, 0.5].
    """
    if not isinstance(pits, EmpiricalPit):
        pits = EmpiricalPit(np.asarray(pits, dtype=np.float64))
    v = pits.values
    n = pits.n
    bounds = np.concatenate(([0.0], v, [1.0]))
    levels = np.arange(n + 1, dtype=np.float64) / n
    return float(np.sum(_segment_areas(bounds[:-1], bounds[1:], levels)))


def ece(pits):
    """Expected calibration error: threshold-integral of |Pr[PIT <= c] - c|.

    Evaluated through the quantile ("horizontal") representation: on the
    level band ((i-1)/n, i/n) the sample quantile function equals the i-th
    order statistic, so the integral is a sum of exact segment areas. This
    is an independent route from :func:`w1_to_uniform`; the two agree to
    ~1e-9 because the area between a monotone curve and the diagonal is the
    same whether measured vertically or horizontally.
    """
    if not isinstance(pits, EmpiricalPit):
        pits = EmpiricalPit(np.asarray(pits, dtype=np.float64))
    v = pits.values
    n = pits.n
    grid = np.arange(n + 1, dtype=np.float64) / n
    return float(np.sum(_segment_areas(grid[:-1], grid[1:], v)))


@dataclass(frozen=True)
class MonotoneMap:
    """Non-decreasing map on [0, 1] given by knots, e.g. a recalibration map.

    Knot inputs are strictly ascending, outputs non-decreasing. Evaluation
    interpolates linearly between knots and clamps outside the knot range,
    which keeps composed CDFs continuous. ``inverse`` inverts by bisection,
    returning the midpoint of a flat (tied) region.
    """

    inputs: np.ndarray
    outputs: np.ndarray

    def __post_init__(self):
        xi = np.asarray(self.inputs, dtype=np.float64)
        yo = np.asarray(self.outputs, dtype=np.float64)
        if xi.ndim != 1 or xi.size == 0 or xi.shape != yo.shape:
            raise DomainError("knot arrays must be non-empty and equally sized")
        if xi.size > 1 and np.any(np.diff(xi) <= 0):
            raise DomainError("knot inputs must be strictly ascending")
        if np.any(np.diff(yo) < 0):
            raise DomainError("knot outputs must be non-decreasing")
        xi.flags.writeable = False
        yo.flags.writeable = False
        object.__setattr__(self, "inputs", xi)
        object.__setattr__(self, "outputs", yo)

    def __call__(self, q):
        # np.interp clamps to the first/last output outside the knot range.
        res = np.interp(q, self.inputs, self.outputs)
        if np.ndim(q) == 0:
            return float(res)
        return res

    def inverse(self, target):
        """Preimage of ``target``; midpoint of the preimage when it is flat."""
        target = float(target)
        yo = self.outputs
        xi = self.inputs
        lo = int(np.searchsorted(yo, target, side="left"))
        hi = int(np.searchsorted(yo, target, side="right"))
        if lo < hi:  # target equals a run of knot outputs: midpoint of the run
            return float(0.5 * (xi[lo] + xi[hi - 1]))
        if target < yo[0]:
            return float(xi[0])
        if target > yo[-1]:
            return float(xi[-1])
        # target strictly between knots lo-1 and lo: invert the linear piece
        x0, x1 = xi[lo - 1], xi[lo]
        y0, y1 = yo[lo - 1], yo[lo]
        return float(x0 + (target - y0) * (x1 - x0) / (y1 - y0))


def pav_isotonic(points):
    """Least-squares monotone (non-decreasing) fit by pool-adjacent-violators.

    ``points`` is a sequence of (position, target) pairs with positions
    sorted ascending; ties at equal positions are pooled (averaged) before
    fitting. Returns a :class:`MonotoneMap` whose knots carry the fitted
    block values.
    """
    pts = list(points)
    if len(pts) == 0:
        raise DomainError("isotonic regression needs at least one point")
    pos = np.asarray([p[0] for p in pts], dtype=np.float64)
    tgt = np.asarray([p[1] for p in pts], dtype=np.float64)
    if np.any(np.diff(pos) < 0):
        raise DomainError("positions must be sorted ascending")

    # Pool exact ties in position.
    ux, inv = np.unique(pos, return_inverse=True)
    ty = np.zeros(ux.size)
    tw = np.zeros(ux.size)
    np.add.at(ty, inv, tgt)
    np.add.at(tw, inv, 1.0)
    ty /= tw

    # Stack-based weighted PAV; each stack entry is a block of consecutive
    # positions sharing one fitted value.
    starts = []
    vals = []
    wts = []
    for idx in range(ux.size):
        starts.append(idx)
        vals.append(ty[idx])
        wts.append(tw[idx])
        while len(vals) > 1 and vals[-2] > vals[-1]:
            w_new = wts[-2] + wts[-1]
            vals[-2] = (wts[-2] * vals[-2] + wts[-1] * vals[-1]) / w_new
            wts[-2] = w_new
            vals.pop()
            wts.pop()
            starts.pop()
    starts.append(ux.size)
    fitted = np.empty(ux.size)
    for k in range(len(vals)):
        fitted[starts[k]:starts[k + 1]] = vals[k]
    return MonotoneMap(ux, fitted)
