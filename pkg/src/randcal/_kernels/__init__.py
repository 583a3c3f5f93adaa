"""Kernel backend selection.

The hot inner loops (batched network forward/backward and the normal
CDF/PDF applied to whole batches) exist twice: a compiled Cython extension
(``_fast``) and a pure NumPy fallback (``pure``). The compiled version is
preferred when importable; set ``RANDCAL_KERNELS=pure`` or
``RANDCAL_KERNELS=fast`` to force a choice. Forcing ``fast`` when the
extension is missing raises immediately rather than silently degrading.

``benchmarks/bench_kernels.py`` compares the two.
"""

import os

from . import pure as _pure

_requested = os.environ.get("RANDCAL_KERNELS", "").strip().lower()

if _requested == "pure":
    _impl = _pure
elif _requested == "fast":
    from . import _fast as _impl  # type: ignore[no-redef]
else:
    try:
        from . import _fast as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _pure

norm_cdf = _impl.norm_cdf
norm_pdf = _impl.norm_pdf
forward_batch = _impl.forward_batch
backward_batch = _impl.backward_batch


def backend_name():
    """Name of the active backend: 'fast' (compiled) or 'pure' (NumPy)."""
    return _impl.BACKEND_NAME


def available_backends():
    names = ["pure"]
    try:
        from . import _fast  # noqa: F401

        names.append("fast")
    except ImportError:
        pass
    return names


def get_backend(name):
    """Return the backend module by name (for parity tests and benchmarks)."""
    if name == "pure":
        return _pure
    if name == "fast":
        from . import _fast

        return _fast
    raise ValueError(f"unknown kernel backend: {name!r}")
