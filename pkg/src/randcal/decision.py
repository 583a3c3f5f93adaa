"""Decision rules under forecast uncertainty and the credit-approval game.

Expected losses under a forecast are computed in closed form for step
losses (the CDF at the threshold) and by 64-node Gauss-Hermite quadrature
for smooth monotone curves; Hermite nodes are exact for polynomials under
a Gaussian forecast, which step-function quadrature is not. The decision
rule picks the action minimizing expected loss, ties broken by action
order.

For the bank's utility table (+1 approving a qualified applicant, -3
approving an unqualified one, 0 for refusals) the rule reduces to:
approve iff the forecast CDF at the threshold y0 is at most 1/4, since
E[utility | approve] = 1 - 4 * CDF(y0).

``markov_check`` measures how often the realized loss exceeds k times the
minimized expected loss, against the 2/k bound (average calibration) and
the 1/k bound (per-input calibration), for non-negative monotone losses.

``run_credit_game`` plays a fixed forecaster against a customer stream in
two phases: everyone applies (random), then applicants self-select using
a learned utility predictor psi(x, y) >= 0 (rational), with psi refitted
from scratch on the realized-utility history every ``refit_every`` rounds.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels, nn
from .core import PROB_TINY
from .errors import ConfigError, DomainError, LossSpecError
from .forecaster import GaussianForecast

_HERMITE_NODES, _HERMITE_WEIGHTS = np.polynomial.hermite.hermgauss(64)
_HERMITE_WEIGHTS = _HERMITE_WEIGHTS / math.sqrt(math.pi)


def _norm_cdf_clamped(z):
    return np.clip(_kernels.norm_cdf(np.asarray(z, dtype=np.float64)), PROB_TINY, 1.0 - PROB_TINY)


@dataclass(frozen=True)
class StepLoss:
    """l(y) = below for y < threshold, above otherwise."""

    threshold: float
    below: float
    above: float

    @property
    def direction(self):
        return "non-increasing" if self.below >= self.above else "non-decreasing"

    def __call__(self, y):
        y = np.asarray(y, dtype=np.float64)
        return np.where(y < self.threshold, self.below, self.above)


@dataclass(frozen=True)
class CurveLoss:
    """A monotone loss curve given by a vectorized callable of y."""

    fn: object
    direction: str  # 'non-increasing' | 'non-decreasing'

    def __post_init__(self):
        if self.direction not in ("non-increasing", "non-decreasing"):
            raise LossSpecError(f"unknown monotone direction {self.direction!r}")

    def __call__(self, y):
        return np.asarray(self.fn(np.asarray(y, dtype=np.float64)), dtype=np.float64)


@dataclass(frozen=True)
class MonotonicLossSpec:
    """Finite action set with one declared-monotone loss curve per action."""

    actions: tuple
    curves: dict
    nonnegative: bool = False
    probe_range: tuple = (-10.0, 10.0)

    def __post_init__(self):
        if len(self.actions) == 0:
            raise LossSpecError("action set is empty")
        for a in self.actions:
            if a not in self.curves:
                raise LossSpecError(f"no loss curve for action {a!r}")
        self.validate()

    def validate(self, probe_points=257):
        """Check declared directions and non-negativity on a probe grid."""
        grid = np.linspace(self.probe_range[0], self.probe_range[1], probe_points)
        for a in self.actions:
            curve = self.curves[a]
            vals = curve(grid)
            if not np.all(np.isfinite(vals)):
                raise LossSpecError(f"loss for action {a!r} is non-finite on the probe grid")
            diffs = np.diff(vals)
            if curve.direction == "non-decreasing" and np.any(diffs < 0):
                raise LossSpecError(f"loss for action {a!r} is not non-decreasing")
            if curve.direction == "non-increasing" and np.any(diffs > 0):
                raise LossSpecError(f"loss for action {a!r} is not non-increasing")
            if self.nonnegative and np.any(vals < 0):
                raise LossSpecError(f"loss for action {a!r} is negative despite the flag")


def expected_loss(forecast, spec, action):
    """E[l(Y, action)] under the forecast distribution.

    Step losses use the exact CDF value at the threshold; curves use
    Gauss-Hermite quadrature for Gaussian forecasts and a quantile-grid
    fallback otherwise.
    """
    if action not in spec.curves:
        raise DomainError(f"action {action!r} not in the loss specification")
    curve = spec.curves[action]
    if isinstance(curve, StepLoss):
        p = forecast.cdf_at(curve.threshold)
        return curve.below * p + curve.above * (1.0 - p)
    if isinstance(forecast, GaussianForecast):
        y = forecast.mu + math.sqrt(2.0) * forecast.sigma * _HERMITE_NODES
        return float(np.dot(_HERMITE_WEIGHTS, curve(y)))
    # Generic fallback: midpoint quantile grid.
    ps = (np.arange(512) + 0.5) / 512.0
    ys = np.asarray([forecast.quantile(p) for p in ps])
    return float(np.mean(curve(ys)))


def best_action(forecast, spec):
    """(argmin action, minimized expected loss); ties go to action order."""
    best = None
    for a in spec.actions:
        v = expected_loss(forecast, spec, a)
        if best is None or v < best[1]:
            best = (a, v)
    return best


# ---------------------------------------------------------------------------
# Bank rule
# ---------------------------------------------------------------------------

BANK_UTILITY_DEFAULT = {
    ("yes", "qualified"): 1.0,
    ("yes", "unqualified"): -3.0,
    ("no", "qualified"): 0.0,
    ("no", "unqualified"): 0.0,
}

CUSTOMER_UTILITY_DEFAULT = {
    ("yes", "qualified"): 0.2,
    ("yes", "unqualified"): 1.0,
    ("no", "qualified"): -0.5,
    ("no", "unqualified"): -0.5,
}


def bank_loss_spec(y0, utility=None):
    """The bank's decision problem as a loss spec (loss = -utility)."""
    u = dict(BANK_UTILITY_DEFAULT if utility is None else utility)
    return MonotonicLossSpec(
        actions=("yes", "no"),
        curves={
            "yes": StepLoss(threshold=y0, below=-u[("yes", "unqualified")], above=-u[("yes", "qualified")]),
            "no": StepLoss(threshold=y0, below=-u[("no", "unqualified")], above=-u[("no", "qualified")]),
        },
        nonnegative=False,
    )


def bank_decide(forecast, y0):
    """'yes' iff the forecast CDF at y0 is at most 1/4 (boundary inclusive).

    Coincides with the expected-loss argmin under the default utility
    table: E[u(yes)] = 1 - 4 * CDF(y0) >= 0 = E[u(no)] iff CDF(y0) <= 1/4.
    """
    return "yes" if forecast.cdf_at(y0) <= 0.25 else "no"


# ---------------------------------------------------------------------------
# Markov-style loss bound checks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MarkovRow:
    k: float
    empirical: float
    bound_avg: float  # 2/k, valid under average calibration
    bound_paic: float  # 1/k, valid under per-input calibration


def _batch_best_actions(mu, sigma, spec):
    """Vectorized best_action over Gaussian forecasts (mu_i, sigma_i)."""
    n = mu.size
    exp_losses = np.empty((n, len(spec.actions)))
    for j, a in enumerate(spec.actions):
        curve = spec.curves[a]
        if isinstance(curve, StepLoss):
            p = _norm_cdf_clamped((curve.threshold - mu) / sigma)
            exp_losses[:, j] = curve.below * p + curve.above * (1.0 - p)
        else:
            y = mu[:, None] + math.sqrt(2.0) * sigma[:, None] * _HERMITE_NODES[None, :]
            exp_losses[:, j] = curve(y) @ _HERMITE_WEIGHTS
    choice = np.argmin(exp_losses, axis=1)  # first minimum: action-order ties
    l_h = exp_losses[np.arange(n), choice]
    return choice, l_h


def markov_check(forecaster, dataset, spec, k_list, rng):
    """Empirical Pr[l >= k * l_H] per k, with the 2/k and 1/k reference bounds.

    Requires a non-negative loss spec. Uses one fresh r per sample for the
    forecast, takes the expected-loss-minimizing action, and compares the
    realized loss l(y_i, action_i) with k times the minimized expectation.
    """
    if not spec.nonnegative:
        raise LossSpecError("Markov bounds need the non-negative loss flag")
    ks = [float(k) for k in k_list]
    if any(k <= 0 for k in ks):
        raise DomainError("k values must be positive")
    n = len(dataset)
    if n == 0:
        raise DomainError("dataset is empty")
    rs = rng.uniform(0.0, 1.0, size=n)
    mu, sigma = forecaster.predict_batch(dataset.X, rs)
    choice, l_h = _batch_best_actions(mu, sigma, spec)
    realized = np.empty(n)
    for j, a in enumerate(spec.actions):
        mask = choice == j
        if np.any(mask):
            realized[mask] = spec.curves[a](dataset.y[mask])
    if np.any(realized < 0):
        raise LossSpecError("observed a negative loss under a non-negative spec")
    rows = []
    for k in ks:
        emp = float(np.mean(realized >= k * l_h))
        rows.append(MarkovRow(k=k, empirical=emp, bound_avg=2.0 / k, bound_paic=1.0 / k))
    return rows


# ---------------------------------------------------------------------------
# Customer model and the credit game
# ---------------------------------------------------------------------------


@dataclass
class PsiModel:
    """Regression net predicting a customer's utility from (x, y).

    Before the first fit it predicts 0 everywhere, so every customer
    applies (the application rule is psi >= 0, boundary inclusive).
    """

    hidden: tuple = (32, 32)
    params: object = None

    def predict(self, X, y):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        y = np.asarray(y, dtype=np.float64)
        if self.params is None:
            return np.zeros(X.shape[0])
        Z = np.column_stack([X, y])
        _, mu, _ = nn.mlp_forward_batch(self.params, Z, None)
        return mu


def train_customer_model(history_X, history_y, history_u, seed, hidden=(32, 32),
                         passes=15, batch_size=256, learning_rate=1e-3):
    """Fit psi on realized utilities by squared-error gradient descent.

    With an empty history returns the cold-start model (psi = 0).
    Deterministic given the seed.
    """
    model = PsiModel(hidden=tuple(hidden))
    hx = np.atleast_2d(np.asarray(history_X, dtype=np.float64)) if len(history_X) else np.zeros((0, 1))
    if hx.shape[0] == 0:
        return model
    hy = np.asarray(history_y, dtype=np.float64)
    hu = np.asarray(history_u, dtype=np.float64)
    Z = np.column_stack([hx, hy])
    n, d = Z.shape
    params = nn.mlp_init([d, *hidden, 2], seed=np.random.SeedSequence([int(seed), 11]),
                         concat_extra=False)
    state = nn.adam_init(params, learning_rate)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 12]))
    for _ in range(passes):
        perm = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = perm[start:start + batch_size]
            trace, mu, _ = nn.mlp_forward_batch(params, Z[idx], None)
            dmu = 2.0 * (mu - hu[idx]) / idx.size
            grads = nn.mlp_backward(trace, dmu, np.zeros(idx.size))
            params, state = nn.adam_step(params, grads, state)
    model.params = params
    return model


@dataclass(frozen=True)
class BankGameConfig:
    y0: float
    seed: int = 0
    bank_utility: dict = field(default_factory=lambda: dict(BANK_UTILITY_DEFAULT))
    customer_utility: dict = field(default_factory=lambda: dict(CUSTOMER_UTILITY_DEFAULT))
    refit_every: int = 200
    psi_hidden: tuple = (32, 32)
    psi_passes: int = 15
    psi_batch: int = 256
    psi_learning_rate: float = 1e-3

    def __post_init__(self):
        if self.refit_every < 1:
            raise ConfigError("refit_every must be positive")


@dataclass
class PhaseSummary:
    n_rounds: int
    apply_rate: float
    approval_rate: float  # approvals / rounds
    mean_bank_utility: float
    mean_customer_utility: float
    exploit_fraction: float  # y < y0 and chose to apply, over all rounds
    unqualified_approval_fraction: float  # among approvals
    total_bank_utility: float
    total_customer_utility: float

    def to_dict(self):
        return {
            "n_rounds": self.n_rounds,
            "apply_rate": self.apply_rate,
            "approval_rate": self.approval_rate,
            "mean_bank_utility": self.mean_bank_utility,
            "mean_customer_utility": self.mean_customer_utility,
            "exploit_fraction": self.exploit_fraction,
            "unqualified_approval_fraction": self.unqualified_approval_fraction,
            "total_bank_utility": self.total_bank_utility,
            "total_customer_utility": self.total_customer_utility,
        }


@dataclass
class GameTrace:
    """Per-round record of one game phase, column-oriented."""

    phase: str
    applied: np.ndarray
    decision: np.ndarray  # 1 approve, 0 refuse, -1 not applicable
    bank_utility: np.ndarray
    customer_utility: np.ndarray
    exploit: np.ndarray
    psi_values: np.ndarray


@dataclass
class GameResult:
    y0: float
    random_phase: PhaseSummary
    rational_phase: PhaseSummary
    traces: list
    exploit_trajectory: list  # per-block exploit fraction in the rational phase

    def summary_dict(self):
        return {
            "y0": self.y0,
            "random": self.random_phase.to_dict(),
            "rational": self.rational_phase.to_dict(),
            "exploit_trajectory": self.exploit_trajectory,
        }


def _utilities(config, qualified, approved):
    bu = config.bank_utility
    cu = config.customer_utility
    bank_yes = np.where(qualified, bu[("yes", "qualified")], bu[("yes", "unqualified")])
    bank_no = np.where(qualified, bu[("no", "qualified")], bu[("no", "unqualified")])
    cust_yes = np.where(qualified, cu[("yes", "qualified")], cu[("yes", "unqualified")])
    cust_no = np.where(qualified, cu[("no", "qualified")], cu[("no", "unqualified")])
    bank = np.where(approved, bank_yes, bank_no)
    cust = np.where(approved, cust_yes, cust_no)
    return bank, cust


def _summarize(applied, approved, qualified, bank_u, cust_u):
    n = applied.size
    approvals = int(np.sum(approved))
    unq_frac = float(np.sum(approved & ~qualified) / approvals) if approvals else 0.0
    return PhaseSummary(
        n_rounds=n,
        apply_rate=float(np.mean(applied)),
        approval_rate=approvals / n,
        mean_bank_utility=float(np.sum(bank_u)) / n,
        mean_customer_utility=float(np.sum(cust_u)) / n,
        exploit_fraction=float(np.mean(applied & ~qualified)),
        unqualified_approval_fraction=unq_frac,
        total_bank_utility=float(np.sum(bank_u)),
        total_customer_utility=float(np.sum(cust_u)),
    )


def run_credit_game(forecaster, config, stream_X, stream_y):
    """Play the approval game over a customer stream, both phases.

    Phase 'random': every customer applies; the bank draws a fresh seed,
    forms a forecast, and applies the threshold rule. Phase 'rational':
    the same stream replayed, but a customer applies only when the learned
    utility predictor psi(x, y) is >= 0; psi is refitted on the realized
    history every ``refit_every`` rounds. The forecaster stays fixed
    throughout. A round is exploitative when an unqualified customer
    (y < y0) chooses to apply, whether or not the bank approves.
    """
    X = np.atleast_2d(np.asarray(stream_X, dtype=np.float64))
    y = np.asarray(stream_y, dtype=np.float64)
    n = X.shape[0]
    if n == 0:
        raise DomainError("customer stream is empty")
    y0 = config.y0
    qualified = y >= y0
    rng = np.random.default_rng(np.random.SeedSequence([int(config.seed), 21]))

    # Phase A: random customers.
    rs = rng.uniform(0.0, 1.0, size=n)
    mu, sigma = forecaster.predict_batch(X, rs)
    p0 = _norm_cdf_clamped((y0 - mu) / sigma)
    approved_a = p0 <= 0.25
    applied_a = np.ones(n, dtype=bool)
    bank_a, cust_a = _utilities(config, qualified, approved_a)
    trace_a = GameTrace(
        phase="random",
        applied=applied_a,
        decision=approved_a.astype(int),
        bank_utility=bank_a,
        customer_utility=cust_a,
        exploit=applied_a & ~qualified,
        psi_values=np.zeros(n),
    )

    # Phase B: rational customers.
    psi = PsiModel(hidden=config.psi_hidden)
    applied_b = np.zeros(n, dtype=bool)
    approved_b = np.zeros(n, dtype=bool)
    psi_vals_all = np.zeros(n)
    hist_X, hist_y, hist_u = [], [], []
    exploit_traj = []
    refit_count = 0
    for start in range(0, n, config.refit_every):
        end = min(n, start + config.refit_every)
        blk = slice(start, end)
        psi_vals = psi.predict(X[blk], y[blk])
        psi_vals_all[blk] = psi_vals
        apply_blk = psi_vals >= 0.0
        applied_b[blk] = apply_blk
        rs_blk = rng.uniform(0.0, 1.0, size=end - start)
        approve_blk = np.zeros(end - start, dtype=bool)
        if np.any(apply_blk):
            mu_b, sigma_b = forecaster.predict_batch(X[blk][apply_blk], rs_blk[apply_blk])
            p0_b = _norm_cdf_clamped((y0 - mu_b) / sigma_b)
            approve_blk[apply_blk] = p0_b <= 0.25
        approved_b[blk] = approve_blk
        qual_blk = qualified[blk]
        _, cust_blk = _utilities(config, qual_blk, approve_blk)
        # Only customers who played observe a utility; their rows feed psi.
        for i in np.flatnonzero(apply_blk):
            hist_X.append(X[start + i])
            hist_y.append(y[start + i])
            hist_u.append(cust_blk[i])
        exploit_traj.append(float(np.mean(apply_blk & ~qual_blk)))
        if end < n:
            refit_count += 1
            psi = train_customer_model(
                np.asarray(hist_X) if hist_X else np.zeros((0, X.shape[1])),
                np.asarray(hist_y),
                np.asarray(hist_u),
                seed=np.random.SeedSequence([int(config.seed), 22, refit_count]).generate_state(1)[0],
                hidden=config.psi_hidden,
                passes=config.psi_passes,
                batch_size=config.psi_batch,
                learning_rate=config.psi_learning_rate,
            )
    bank_b = np.zeros(n)
    cust_b = np.zeros(n)
    bank_app, cust_app = _utilities(config, qualified, approved_b)
    bank_b[applied_b] = bank_app[applied_b]
    cust_b[applied_b] = cust_app[applied_b]
    decision_b = np.where(applied_b, approved_b.astype(int), -1)
    trace_b = GameTrace(
        phase="rational",
        applied=applied_b,
        decision=decision_b,
        bank_utility=bank_b,
        customer_utility=cust_b,
        exploit=applied_b & ~qualified,
        psi_values=psi_vals_all,
    )

    return GameResult(
        y0=y0,
        random_phase=_summarize(applied_a, approved_a, qualified, bank_a, cust_a),
        rational_phase=_summarize(applied_b, approved_b & applied_b, qualified, bank_b, cust_b),
        traces=[trace_a, trace_b],
        exploit_trajectory=exploit_traj,
    )
