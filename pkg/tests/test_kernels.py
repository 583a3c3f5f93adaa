"""Backend parity: the compiled kernels must match the NumPy fallback."""

import numpy as np
import pytest

from randcal import _kernels, nn

HAS_FAST = "fast" in _kernels.available_backends()

needs_fast = pytest.mark.skipif(not HAS_FAST, reason="compiled extension not built")


@pytest.fixture
def net_and_batch():
    rng = np.random.default_rng(123)
    params = nn.mlp_init([6, 24, 16, 2], seed=9)
    X = rng.standard_normal((77, 6))
    r = rng.uniform(size=77)
    dout = rng.standard_normal((77, 2))
    return params, X, r, dout


@needs_fast
def test_forward_parity(net_and_batch):
    params, X, r, _ = net_and_batch
    pure = _kernels.get_backend("pure")
    fast = _kernels.get_backend("fast")
    acts1, out1 = pure.forward_batch(list(params.weights), list(params.biases), X, r)
    acts2, out2 = fast.forward_batch(list(params.weights), list(params.biases), X, r)
    np.testing.assert_allclose(out1, out2, rtol=0, atol=1e-12)
    for a1, a2 in zip(acts1, acts2):
        np.testing.assert_allclose(a1, a2, rtol=0, atol=1e-12)


@needs_fast
def test_backward_parity(net_and_batch):
    params, X, r, dout = net_and_batch
    pure = _kernels.get_backend("pure")
    fast = _kernels.get_backend("fast")
    acts1, _ = pure.forward_batch(list(params.weights), list(params.biases), X, r)
    acts2, _ = fast.forward_batch(list(params.weights), list(params.biases), X, r)
    dw1, db1 = pure.backward_batch(list(params.weights), acts1, dout, True)
    dw2, db2 = fast.backward_batch(list(params.weights), acts2, dout, True)
    for g1, g2 in zip(dw1 + db1, dw2 + db2):
        np.testing.assert_allclose(g1, g2, rtol=1e-12, atol=1e-12)


@needs_fast
def test_parity_without_extra_column():
    rng = np.random.default_rng(5)
    params = nn.mlp_init([4, 8, 2], seed=2, concat_extra=False)
    X = rng.standard_normal((31, 4))
    dout = rng.standard_normal((31, 2))
    pure = _kernels.get_backend("pure")
    fast = _kernels.get_backend("fast")
    acts1, out1 = pure.forward_batch(list(params.weights), list(params.biases), X, None)
    acts2, out2 = fast.forward_batch(list(params.weights), list(params.biases), X, None)
    np.testing.assert_allclose(out1, out2, atol=1e-12)
    g1 = pure.backward_batch(list(params.weights), acts1, dout, False)
    g2 = fast.backward_batch(list(params.weights), acts2, dout, False)
    for a, b in zip(g1[0] + g1[1], g2[0] + g2[1]):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


@needs_fast
def test_norm_funcs_parity():
    rng = np.random.default_rng(8)
    z = rng.uniform(-9, 9, size=4096)
    pure = _kernels.get_backend("pure")
    fast = _kernels.get_backend("fast")
    np.testing.assert_allclose(pure.norm_cdf(z), fast.norm_cdf(z), rtol=0, atol=1e-14)
    np.testing.assert_allclose(pure.norm_pdf(z), fast.norm_pdf(z), rtol=1e-13, atol=0)


def test_backend_name_reported():
    assert _kernels.backend_name() in ("pure", "fast")


def test_get_backend_unknown():
    with pytest.raises(ValueError):
        _kernels.get_backend("gpu")
