"""Kernel backend selection: compiled Cython extension with NumPy fallback.

The compiled module is used automatically when it imported cleanly and the
operands are contiguous 1-D float64 arrays; anything else routes to the
NumPy implementation. Both produce bit-identical results.

Set ``GUIDEDWAVE_KERNELS`` to ``python`` or ``compiled`` to force a backend
(``compiled`` raises if the extension is unavailable); default is ``auto``.
"""

import os

from . import _kernels_py as _py

_MODE = os.environ.get("GUIDEDWAVE_KERNELS", "auto")
if _MODE not in ("auto", "python", "compiled"):
    raise RuntimeError(f"GUIDEDWAVE_KERNELS must be auto|python|compiled, got {_MODE!r}")

_ext = None
if _MODE != "python":
    try:
        from . import _kernels as _ext
    except ImportError:
        if _MODE == "compiled":
            raise RuntimeError("GUIDEDWAVE_KERNELS=compiled but the extension is not built")
        _ext = None

HAVE_COMPILED = _ext is not None
BACKEND = "compiled" if HAVE_COMPILED else "python"


# Dispatch relies on the extension's typed memoryviews rejecting anything
# that is not a contiguous 1-D float64 array; the common case pays no
# pre-check cost and everything else falls through to NumPy.

if HAVE_COMPILED:

    def lincomb(a, x, b, y):
        try:
            return _ext.lincomb(a, x, b, y)
        except (TypeError, ValueError):
            return _py.lincomb(a, x, b, y)

    def ddpm_update(x_t, x0_hat, noise, c0, c1, std):
        try:
            return _ext.ddpm_update(x_t, x0_hat, noise, c0, c1, std)
        except (TypeError, ValueError):
            return _py.ddpm_update(x_t, x0_hat, noise, c0, c1, std)

    def scaled_diff(x_t, x0_hat, alpha, sigma):
        try:
            return _ext.scaled_diff(x_t, x0_hat, alpha, sigma)
        except (TypeError, ValueError):
            return _py.scaled_diff(x_t, x0_hat, alpha, sigma)

    def diag_posterior(x, mean, gain, alpha):
        try:
            return _ext.diag_posterior(x, mean, gain, alpha)
        except (TypeError, ValueError):
            return _py.diag_posterior(x, mean, gain, alpha)

else:
    lincomb = _py.lincomb
    ddpm_update = _py.ddpm_update
    scaled_diff = _py.scaled_diff
    diag_posterior = _py.diag_posterior
