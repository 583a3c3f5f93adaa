"""Minimal feed-forward network with exact reverse-mode gradients and Adam.

The network maps (x, r) to a location/scale pair (mu, sigma). r is a scalar
in [0, 1] appended to the raw input and re-appended to every hidden
activation, so each layer (output layer included) sees it directly; with
layer_sizes [3, 16, 16, 2] the parameter count is
(4*16+16) + (17*16+16) + (17*2+2) = 404. Hidden activation is tanh; the
scale head is softplus(s) + sigma_floor so sigma stays strictly positive.

Plain-regression nets (no r column, raw linear outputs) are supported via
``concat_extra=False``; the customer-utility model in the decision module
uses that.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .errors import ConfigError, ContractError, DomainError, ShapeError, TrainingError

SIGMA_FLOOR_DEFAULT = 1e-3


@dataclass(frozen=True)
class MlpParams:
    """Weights/biasses of the network, immutable once built.

    layer_sizes is [d_in, h_1, ..., h_L, d_out]; weight shapes account for
    the appended r column when concat_extra is True.
    """

    layer_sizes: tuple
    weights: tuple
    biases: tuple
    concat_extra: bool = True
    sigma_floor: float = SIGMA_FLOOR_DEFAULT

    @property
    def n_params(self):
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    @property
    def d_in(self):
        return self.layer_sizes[0]


def mlp_init(layer_sizes, seed, concat_extra=True, sigma_floor=SIGMA_FLOOR_DEFAULT):
    """Deterministically initialize a network.

    Weights are drawn from N(0, 1/fan_in) (fan-in scaling keeps tanh
    pre-activations O(1) at any width); biases start at zero.
    """
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 3:
        raise ConfigError("layer_sizes needs input, at least one hidden, and output entries")
    if any(s < 1 for s in sizes):
        raise ConfigError(f"layer sizes must be >= 1, got {sizes}")
    rng = np.random.default_rng(seed)
    extra = 1 if concat_extra else 0
    weights = []
    biases = []
    fan_in = sizes[0] + extra
    for out in sizes[1:]:
        w = rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_in, out))
        weights.append(np.ascontiguousarray(w))
        biases.append(np.zeros(out))
        fan_in = out + extra
    return MlpParams(
        layer_sizes=tuple(sizes),
        weights=tuple(weights),
        biases=tuple(biases),
        concat_extra=concat_extra,
        sigma_floor=float(sigma_floor),
    )


def softplus(s):
    s = np.asarray(s, dtype=np.float64)
    return np.where(s > 0, s + np.log1p(np.exp(-np.abs(s))), np.log1p(np.exp(s)))


def sigmoid(s):
    s = np.asarray(s, dtype=np.float64)
    out = np.empty_like(s)
    pos = s >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-s[pos]))
    ez = np.exp(s[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass(frozen=True)
class ForwardTrace:
    """Everything the backward pass needs from one forward pass."""

    params: MlpParams
    acts: list
    out: np.ndarray  # raw linear outputs (n, d_out)
    n: int


def _check_batch(params, x, r):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != params.d_in:
        raise ShapeError(
            f"input has {x.shape[-1] if x.ndim else 0} features, network expects {params.d_in}"
        )
    if not np.all(np.isfinite(x)):
        raise DomainError("network input contains non-finite values")
    if params.concat_extra:
        r = np.asarray(r, dtype=np.float64)
        if r.ndim == 0:
            r = np.full(x.shape[0], float(r))
        if r.shape != (x.shape[0],):
            raise ShapeError(f"r has shape {r.shape}, expected ({x.shape[0]},)")
        if not np.all(np.isfinite(r)) or r.min() < 0.0 or r.max() > 1.0:
            raise DomainError("r values must lie in [0, 1]")
    else:
        r = None
    return x, r


def mlp_forward_batch(params, x, r):
    """Batched forward pass; returns (trace, mu (n,), sigma (n,))."""
    x, r = _check_batch(params, x, r)
    acts, out = _kernels.forward_batch(list(params.weights), list(params.biases), x, r)
    trace = ForwardTrace(params=params, acts=acts, out=out, n=x.shape[0])
    mu = out[:, 0].copy()
    sigma = softplus(out[:, 1]) + params.sigma_floor
    return trace, mu, sigma


def mlp_forward(params, x, r):
    """Single-sample forward pass; returns (trace, mu, sigma) as scalars."""
    trace, mu, sigma = mlp_forward_batch(params, np.atleast_2d(x), r)
    return trace, float(mu[0]), float(sigma[0])


def mlp_backward(trace, dmu, dsigma):
    """Exact gradient of sum_i(dmu_i*mu_i + dsigma_i*sigma_i) w.r.t. params.

    Returns (dweights, dbiases) lists shaped like the parameters. The trace
    must come from a forward pass with the same params object.
    """
    params = trace.params
    if not isinstance(params, MlpParams):
        raise ContractError("trace does not carry network parameters")
    if len(trace.acts) != len(params.weights):
        raise ContractError("stale trace: layer count does not match parameters")
    dmu = np.asarray(dmu, dtype=np.float64)
    dsigma = np.asarray(dsigma, dtype=np.float64)
    if dmu.ndim == 0:
        dmu = np.full(trace.n, float(dmu))
    if dsigma.ndim == 0:
        dsigma = np.full(trace.n, float(dsigma))
    if dmu.shape != (trace.n,) or dsigma.shape != (trace.n,):
        raise ShapeError("dmu/dsigma must have one entry per batch element")
    # d sigma / d s = sigmoid(s) for sigma = softplus(s) + floor.
    ds = dsigma * sigmoid(trace.out[:, 1])
    dout = np.column_stack([dmu, ds])
    return _kernels.backward_batch(list(params.weights), trace.acts, dout, params.concat_extra)


def zero_grads(params):
    return (
        [np.zeros_like(w) for w in params.weights],
        [np.zeros_like(b) for b in params.biases],
    )


def grads_axpy(alpha, g, out):
    """out += alpha * g, in place, for (dweights, dbiases) pairs."""
    for dst, src in zip(out[0], g[0]):
        dst += alpha * src
    for dst, src in zip(out[1], g[1]):
        dst += alpha * src
    return out


@dataclass(frozen=True)
class AdamState:
    """First/second moment accumulators plus hyper-parameters."""

    m_w: tuple
    v_w: tuple
    m_b: tuple
    v_b: tuple
    step: int
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(params, learning_rate, beta1=0.9, beta2=0.999, eps=1e-8):
    return AdamState(
        m_w=tuple(np.zeros_like(w) for w in params.weights),
        v_w=tuple(np.zeros_like(w) for w in params.weights),
        m_b=tuple(np.zeros_like(b) for b in params.biases),
        v_b=tuple(np.zeros_like(b) for b in params.biases),
        step=0,
        learning_rate=float(learning_rate),
        beta1=float(beta1),
        beta2=float(beta2),
        eps=float(eps),
    )


def adam_step(params, grads, state):
    """One bias-corrected Adam update; returns new (params, state)."""
    dws, dbs = grads
    for g in list(dws) + list(dbs):
        if not np.all(np.isfinite(g)):
            raise TrainingError("non-finite gradient passed to the optimizer")
    t = state.step + 1
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t

    def upd(p, g, m, v):
        m_new = state.beta1 * m + (1.0 - state.beta1) * g
        v_new = state.beta2 * v + (1.0 - state.beta2) * g * g
        p_new = p - state.learning_rate * (m_new / c1) / (np.sqrt(v_new / c2) + state.eps)
        return p_new, m_new, v_new

    new_w, m_w, v_w = [], [], []
    for p, g, m, v in zip(params.weights, dws, state.m_w, state.v_w):
        pn, mn, vn = upd(p, g, m, v)
        new_w.append(pn)
        m_w.append(mn)
        v_w.append(vn)
    new_b, m_b, v_b = [], [], []
    for p, g, m, v in zip(params.biases, dbs, state.m_b, state.v_b):
        pn, mn, vn = upd(p, g, m, v)
        new_b.append(pn)
        m_b.append(mn)
        v_b.append(vn)
    new_params = replace(params, weights=tuple(new_w), biases=tuple(new_b))
    new_state = replace(
        state, m_w=tuple(m_w), v_w=tuple(v_w), m_b=tuple(m_b), v_b=tuple(v_b), step=t
    )
    return new_params, new_state
