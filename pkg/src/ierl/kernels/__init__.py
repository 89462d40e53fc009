"""Numeric kernel backends.

The compiled extension (`ierl.kernels._fast`) is picked at import time when it
built successfully; otherwise the pure-Python reference (`ierl.kernels._ref`)
takes over. Set IERL_PURE_PYTHON=1 to force the reference backend. Both
backends follow the same operation order and return bit-identical results;
`benchmarks/bench_kernels.py` compares their speed.
"""

import os

import numpy as np

from ..errors import DivergedError

if os.environ.get("IERL_PURE_PYTHON", "").strip() not in ("", "0"):
    from . import _ref as _backend
else:
    try:
        from . import _fast as _backend  # type: ignore[no-redef]
    except ImportError:
        from . import _ref as _backend  # type: ignore[no-redef]

BACKEND = _backend.NAME


def _c64(v):
    return np.ascontiguousarray(v, dtype=np.float64)


def lift(v, max_power: int) -> np.ndarray:
    """Concatenation of element-wise powers v^0 .. v^max_power (0^0 = 1)."""
    return _backend.lift(_c64(v), int(max_power))


def lift_mean(mat, max_power: int) -> np.ndarray:
    """Element-wise mean of the lifts of each row of `mat`."""
    return _backend.lift_mean(_c64(np.atleast_2d(mat)), int(max_power))


def prox_solve(d, target, alpha0, lr: float, l1: float, tol: float, max_iters: int):
    """Run the proximal-gradient loop; returns (alpha, objective, steps).

    Raises DivergedError when the objective leaves the finite range.
    """
    alpha, g, steps, diverged = _backend.prox_solve(
        _c64(d), _c64(target), _c64(alpha0),
        float(lr), float(l1), float(tol), int(max_iters),
    )
    if diverged >= 0:
        raise DivergedError(int(diverged))
    return alpha, float(g), int(steps)
