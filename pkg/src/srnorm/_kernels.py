"""Kernel dispatch.

The numba path is used unless ``SRNORM_DISABLE_NUMBA`` is set to a truthy
value or numba cannot be imported. Both paths agree to rounding error, not
bitwise.
"""

import os

from . import _kernels_numpy

_DISABLED = os.environ.get("SRNORM_DISABLE_NUMBA", "").strip().lower() not in ("", "0", "false", "no")

if _DISABLED:
    _impl = _kernels_numpy
else:
    try:
        from . import _kernels_numba as _impl
    except ImportError:  # numba missing
        _impl = _kernels_numpy

USING_NUMBA = _impl is not _kernels_numpy

power_sweeps = _impl.power_sweeps
jacobi_svd = _impl.jacobi_svd
pair_ratios = _impl.pair_ratios
