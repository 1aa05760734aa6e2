"""Kernel backend selection: compiled Cython extension if available, pure
NumPy otherwise. Set ``MCXEB_PURE_PYTHON=1`` to force the fallback."""

import os

if os.environ.get("MCXEB_PURE_PYTHON"):
    from . import pure as _backend

    BACKEND = "pure"
else:
    try:
        from . import _statevec as _backend  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        from . import pure as _backend

        BACKEND = "pure"

apply_1q = _backend.apply_1q
apply_2q = _backend.apply_2q
apply_layer = _backend.apply_layer
prob_zero = _backend.prob_zero
project = _backend.project
bapply_2q = _backend.bapply_2q
bapply_layer = _backend.bapply_layer
bprob_zero = _backend.bprob_zero
bproject = _backend.bproject
bnorm_squared = _backend.bnorm_squared

__all__ = [
    "BACKEND",
    "apply_1q",
    "apply_2q",
    "apply_layer",
    "prob_zero",
    "project",
    "bapply_2q",
    "bapply_layer",
    "bprob_zero",
    "bproject",
    "bnorm_squared",
]
