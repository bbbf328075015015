"""Backend selection for the hot kernels.

The compiled extension ``_ckernels`` is used when it imports; otherwise the
NumPy fallback in ``_pykernels`` is used. Setting ``SRDE_PURE_PYTHON=1`` in
the environment forces the fallback.
"""

import os

from . import _pykernels

if os.environ.get("SRDE_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl
        BACKEND = "compiled"
    except ImportError:
        _impl = _pykernels
        BACKEND = "python"

drift_flow = _impl.drift_flow
noise_term = _impl.noise_term
tamed_bracket = _impl.tamed_bracket
ladder_scan = _impl.ladder_scan
sde_advance = _impl.sde_advance

DRIFT_POWER = _pykernels.DRIFT_POWER
DRIFT_ZERO = _pykernels.DRIFT_ZERO
DIFF_POLYNOMIAL = _pykernels.DIFF_POLYNOMIAL
DIFF_ADDITIVE = _pykernels.DIFF_ADDITIVE
EXIT_NONE = _pykernels.EXIT_NONE
EXIT_RADIUS = _pykernels.EXIT_RADIUS
EXIT_NONFINITE = _pykernels.EXIT_NONFINITE


def available_backends():
    """Return the kernel modules importable in this environment, by name."""
    found = {"python": _pykernels}
    try:
        from . import _ckernels
        found["compiled"] = _ckernels
    except ImportError:
        pass
    return found
