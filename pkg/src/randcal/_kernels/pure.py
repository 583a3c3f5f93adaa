"""Pure NumPy implementation of the hot kernels.

This is the fallback backend used when the compiled extension is not
available (or when ``RANDCAL_KERNELS=pure`` is set). Both backends expose
the same four functions and must agree to floating-point tolerance; the
parity test in the test suite enforces this.

Network layout handled here: each layer computes ``a @ W + b`` followed by
tanh on hidden layers. When an ``extra`` column is supplied (the per-sample
random seed), it is appended to the raw input and re-appended to every
hidden activation, so every layer including the output layer sees it.
"""

import numpy as np
from scipy.special import ndtr

BACKEND_NAME = "pure"


def norm_cdf(z):
    """Standard normal CDF, elementwise on a float64 array."""
    return ndtr(np.asarray(z, dtype=np.float64))


def norm_pdf(z):
    """Standard normal density, elementwise on a float64 array."""
    z = np.asarray(z, dtype=np.float64)
    return np.exp(-0.5 * z * z) / np.sqrt(2.0 * np.pi)


def _append_col(a, extra):
    out = np.empty((a.shape[0], a.shape[1] + 1), dtype=np.float64)
    out[:, :-1] = a
    out[:, -1] = extra
    return out


def forward_batch(weights, biases, x, extra):
    """Run the network on a batch.

    Parameters
    ----------
    weights, biases : lists of float64 arrays, one per layer. ``weights[i]``
        has shape (fan_in, fan_out) where fan_in already accounts for the
        appended extra column when ``extra`` is not None.
    x : (n, d) float64 array of inputs.
    extra : (n,) float64 array appended to the input and every hidden
        activation, or None.

    Returns
    -------
    acts : list of layer inputs a_0 .. a_{L-1} (each includes the extra
        column when present). Needed by :func:`backward_batch`.
    out : (n, k) output of the final linear layer (no activation).
    """
    a = np.ascontiguousarray(x, dtype=np.float64)
    if extra is not None:
        a = _append_col(a, extra)
    acts = [a]
    n_layers = len(weights)
    for i in range(n_layers - 1):
        h = np.tanh(a @ weights[i] + biases[i])
        a = _append_col(h, extra) if extra is not None else h
        acts.append(a)
    out = a @ weights[-1] + biases[-1]
    return acts, out


def backward_batch(weights, acts, dout, has_extra):
    """Reverse-mode gradients of ``sum(dout * out)`` w.r.t. weights/biases.

    ``acts`` must come from :func:`forward_batch` with the same weights.
    Returns (dweights, dbiases) with the same shapes as the parameters.
    """
    n_layers = len(weights)
    dws = [None] * n_layers
    dbs = [None] * n_layers
    dz = np.asarray(dout, dtype=np.float64)
    for i in range(n_layers - 1, -1, -1):
        a = acts[i]
        dws[i] = a.T @ dz
        dbs[i] = dz.sum(axis=0)
        if i == 0:
            break
        da = dz @ weights[i].T
        if has_extra:
            da = da[:, :-1]
            h = a[:, :-1]
        else:
            h = a
        dz = da * (1.0 - h * h)
    return dws, dbs
