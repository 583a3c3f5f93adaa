"""Training losses with exact gradients, the training loop, and certificates.

Two per-sample losses over the network's forecast for (x_i, y_i, r_i):

* PIT loss: |F_i(y_i) - r_i| where F_i is the predicted CDF. Driving this
  to zero makes the CDF value at the observed label track the seed, which
  is the verifiable surrogate for per-input calibration.
* Gaussian NLL: -log N(y_i; mu_i, sigma_i^2), the sharpness term.

The blended objective is (1 - alpha) * pit + alpha * nll; alpha = 1 is
plain likelihood training, alpha = 0 pure calibration. A fresh r_i is
drawn for every sample at every step (never reused across epochs).

``certify_forecaster`` turns a held-out evaluation into a one-sided
Hoeffding certificate: with confidence 1 - gamma the population rate of
residuals |F(y) - r| >= epsilon is at most the empirical rate plus
sqrt(-ln(gamma) / (2n)). ``residual_to_w1_bound`` converts such an
(epsilon, delta) residual guarantee into a tail bound on the per-input
Wasserstein-1 calibration error.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels, nn
from .core import PROB_TINY
from .data import Standardizer
from .errors import ConfigError, DomainError
from .forecaster import TrainedForecaster

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class TrainConfig:
    alpha: float
    hidden: tuple = (64, 64)
    epochs: int = 150
    batch_size: int = 128
    learning_rate: float = 1e-3
    seed: int = 0
    patience: int = 25
    sigma_floor: float = nn.SIGMA_FLOOR_DEFAULT

    def __post_init__(self):
        if not (0.0 <= self.alpha <= 1.0):
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.epochs < 1 or self.batch_size < 1 or self.patience < 1:
            raise ConfigError("epochs, batch_size and patience must be positive")
        if self.learning_rate <= 0 or self.sigma_floor <= 0:
            raise ConfigError("learning_rate and sigma_floor must be positive")
        if len(self.hidden) < 1 or any(int(h) < 1 for h in self.hidden):
            raise ConfigError("hidden sizes must be positive")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    def to_dict(self):
        return {
            "alpha": self.alpha,
            "hidden": list(self.hidden),
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "seed": self.seed,
            "patience": self.patience,
            "sigma_floor": self.sigma_floor,
        }


def _check_batch(X, y, r):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    if X.shape[0] == 0:
        raise DomainError("batch is empty")
    if y.shape != (X.shape[0],) or r.shape != (X.shape[0],):
        raise DomainError("labels and r must be aligned with the batch rows")
    return X, y, r


def _loss_core(params, X, y, r, w_pit, w_nll):
    """Shared forward pass; returns (pit_value, nll_value, grads_of_blend)."""
    X, y, r = _check_batch(X, y, r)
    n = X.shape[0]
    trace, mu, sigma = nn.mlp_forward_batch(params, X, r)
    z = (y - mu) / sigma
    pit_raw = _kernels.norm_cdf(z)
    active = (pit_raw > PROB_TINY) & (pit_raw < 1.0 - PROB_TINY)
    pit = np.clip(pit_raw, PROB_TINY, 1.0 - PROB_TINY)
    resid = pit - r
    pit_value = float(np.mean(np.abs(resid)))
    nll_value = float(np.mean(np.log(sigma) + 0.5 * z * z) + _HALF_LOG_2PI)

    # PIT loss gradient: sign(resid)/n through Phi; zero where the CDF was
    # clamped and at resid == 0 (the subgradient choice at the kink).
    dpit = np.sign(resid) * active / n
    pdf = _kernels.norm_pdf(z)
    dmu_pit = dpit * pdf * (-1.0 / sigma)
    dsg_pit = dpit * pdf * (-z / sigma)
    # NLL gradient.
    dmu_nll = (mu - y) / (sigma * sigma) / n
    dsg_nll = (1.0 / sigma - (y - mu) ** 2 / sigma**3) / n

    dmu = w_pit * dmu_pit + w_nll * dmu_nll
    dsg = w_pit * dsg_pit + w_nll * dsg_nll
    grads = nn.mlp_backward(trace, dmu, dsg)
    return pit_value, nll_value, grads


def loss_pit(params, X, y, r):
    """Mean |CDF(y_i) - r_i| and its exact parameter gradient."""
    pit_value, _, grads = _loss_core(params, X, y, r, 1.0, 0.0)
    return pit_value, grads


def loss_nll(params, X, y, r):
    """Mean Gaussian negative log-likelihood and its exact gradient."""
    _, nll_value, grads = _loss_core(params, X, y, r, 0.0, 1.0)
    return nll_value, grads


def loss_combined(alpha, params, X, y, r):
    """(1 - alpha) * pit loss + alpha * NLL, gradients blended linearly."""
    if not (0.0 <= alpha <= 1.0):
        raise ConfigError(f"alpha must lie in [0, 1], got {alpha}")
    pit_value, nll_value, grads = _loss_core(params, X, y, r, 1.0 - alpha, alpha)
    return (1.0 - alpha) * pit_value + alpha * nll_value, grads


def loss_values(params, X, y, r):
    """(pit, nll) values only, no gradients (evaluation passes)."""
    X, y, r = _check_batch(X, y, r)
    _, mu, sigma = nn.mlp_forward_batch(params, X, r)
    z = (y - mu) / sigma
    pit = np.clip(_kernels.norm_cdf(z), PROB_TINY, 1.0 - PROB_TINY)
    pit_value = float(np.mean(np.abs(pit - r)))
    nll_value = float(np.mean(np.log(sigma) + 0.5 * z * z) + _HALF_LOG_2PI)
    return pit_value, nll_value


@dataclass
class EpochStats:
    epoch: int
    train_pit: float
    train_nll: float
    train_combined: float
    val_pit: float
    val_nll: float
    val_combined: float


@dataclass
class TrainResult:
    forecaster: TrainedForecaster
    history: list
    best_epoch: int
    aborted: bool = False
    abort_reason: str = ""
    epoch_r_values: list = field(default_factory=list)


# Fixed role indices for deriving independent RNG streams from one seed.
ROLE_TRAIN = 1
ROLE_VAL = 2
ROLE_INIT = 3


def _rng_for(seed, role):
    return np.random.default_rng(np.random.SeedSequence([int(seed), role]))


def train(train_ds, val_ds, config, record_r=False):
    """Train a forecaster; deterministic given config.seed.

    Early-stops when validation combined loss fails to improve for
    ``patience`` consecutive epochs, and returns the parameters from the
    best validation epoch. On a non-finite loss it aborts, keeping the
    last good parameters, with the reason recorded on the result.
    """
    if len(train_ds) == 0 or len(val_ds) == 0:
        raise DomainError("train and validation datasets must be non-empty")
    std = Standardizer.fit(train_ds.X)
    Xtr = std.transform(train_ds.X)
    ytr = train_ds.y
    Xval = std.transform(val_ds.X)
    yval = val_ds.y
    n = Xtr.shape[0]

    params = nn.mlp_init(
        [train_ds.d, *config.hidden, 2],
        seed=np.random.SeedSequence([config.seed, ROLE_INIT]),
        sigma_floor=config.sigma_floor,
    )
    state = nn.adam_init(params, config.learning_rate)
    rng = _rng_for(config.seed, ROLE_TRAIN)
    val_rng = _rng_for(config.seed, ROLE_VAL)

    history = []
    r_log = []
    best = (math.inf, 0, params)
    stall = 0
    aborted = False
    reason = ""
    alpha = config.alpha
    for epoch in range(1, config.epochs + 1):
        perm = rng.permutation(n)
        epoch_rs = [] if record_r else None
        sums = np.zeros(3)
        batches = 0
        for start in range(0, n, config.batch_size):
            idx = perm[start:start + config.batch_size]
            r = rng.uniform(0.0, 1.0, size=idx.size)
            if record_r:
                epoch_rs.append(r)
            pit_v, nll_v, grads = _loss_core(params, Xtr[idx], ytr[idx], r, 1.0 - alpha, alpha)
            comb = (1.0 - alpha) * pit_v + alpha * nll_v
            if not math.isfinite(comb):
                aborted = True
                reason = f"non-finite training loss at epoch {epoch}"
                break
            params, state = nn.adam_step(params, grads, state)
            sums += (pit_v, nll_v, comb)
            batches += 1
        if aborted:
            break
        r_val = val_rng.uniform(0.0, 1.0, size=Xval.shape[0])
        vp, vn = loss_values(params, Xval, yval, r_val)
        vc = (1.0 - alpha) * vp + alpha * vn
        history.append(
            EpochStats(
                epoch=epoch,
                train_pit=sums[0] / batches,
                train_nll=sums[1] / batches,
                train_combined=sums[2] / batches,
                val_pit=vp,
                val_nll=vn,
                val_combined=vc,
            )
        )
        if record_r:
            r_log.append(np.concatenate(epoch_rs))
        if vc < best[0]:
            best = (vc, epoch, params)
            stall = 0
        else:
            stall += 1
            if stall >= config.patience:
                break

    forecaster = TrainedForecaster(params=best[2], standardizer=std)
    return TrainResult(
        forecaster=forecaster,
        history=history,
        best_epoch=best[1],
        aborted=aborted,
        abort_reason=reason,
        epoch_r_values=r_log,
    )


# Wire-format column names for the history CSV.
HISTORY_COLUMNS = (
    "epoch",
    "train_paic",
    "train_nll",
    "train_combined",
    "val_paic",
    "val_nll",
    "val_combined",
)


def history_rows(history):
    for h in history:
        yield (
            h.epoch,
            h.train_pit,
            h.train_nll,
            h.train_combined,
            h.val_pit,
            h.val_nll,
            h.val_combined,
        )


@dataclass(frozen=True)
class ResidualCertificate:
    """(epsilon, delta) residual-calibration certificate at confidence 1-gamma.

    ``bound`` = empirical_violation + sqrt(-ln(gamma) / (2n)) upper-bounds
    the population rate of |CDF(y) - r| >= epsilon with probability at
    least 1 - gamma over the evaluation draw.
    """

    epsilon: float
    empirical_violation: float
    gamma: float
    n: int
    bound: float

    def to_dict(self):
        return {
            "epsilon": self.epsilon,
            "empirical_violation": self.empirical_violation,
            "gamma": self.gamma,
            "n": self.n,
            "bound": self.bound,
        }


def hoeffding_slack(gamma, n):
    return math.sqrt(-math.log(gamma) / (2.0 * n))


def certify_forecaster(forecaster, dataset, epsilon, gamma, rng):
    """Evaluate residuals on held-out data and attach the Hoeffding slack.

    The dataset must not have been used for training; the certificate is
    only valid for fresh i.i.d. draws.
    """
    if not (0.0 <= epsilon <= 1.0):
        raise DomainError(f"epsilon must lie in [0, 1], got {epsilon}")
    if not (0.0 < gamma < 1.0):
        raise DomainError(f"gamma must lie in (0, 1), got {gamma}")
    if len(dataset) == 0:
        raise DomainError("dataset is empty")
    rs = rng.uniform(0.0, 1.0, size=len(dataset))
    pits = forecaster.pit_batch(dataset.X, dataset.y, rs)
    viol = float(np.mean(np.abs(pits - rs) >= epsilon))
    n = len(dataset)
    return ResidualCertificate(
        epsilon=float(epsilon),
        empirical_violation=viol,
        gamma=float(gamma),
        n=n,
        bound=viol + hoeffding_slack(gamma, n),
    )


@dataclass(frozen=True)
class W1BoundConversion:
    """Residual guarantee converted into a per-input W1 error tail bound.

    From an (epsilon, delta) residual guarantee, the per-input calibration
    error (W1 distance of the seed-conditional CDF values from uniform)
    exceeds epsilon_prime on at most a delta_prime fraction of inputs,
    with delta_prime = delta * (1 - epsilon) / (epsilon_prime - epsilon),
    capped at 1.
    """

    epsilon: float
    delta: float
    epsilon_prime: float
    delta_prime: float


def residual_to_w1_bound(epsilon, delta, epsilon_prime):
    if not (0.0 <= epsilon < epsilon_prime <= 1.0):
        raise DomainError(
            f"need 0 <= epsilon < epsilon_prime <= 1, got ({epsilon}, {epsilon_prime})"
        )
    if not (0.0 <= delta <= 1.0):
        raise DomainError(f"delta must lie in [0, 1], got {delta}")
    dp = delta * (1.0 - epsilon) / (epsilon_prime - epsilon)
    return W1BoundConversion(
        epsilon=float(epsilon),
        delta=float(delta),
        epsilon_prime=float(epsilon_prime),
        delta_prime=min(1.0, dp),
    )
