"""Context aggregation: moment lifting and the plain-average baseline.

The moment lift of a vector is the concatenation of its element-wise powers
v^0, v^1, ..., v^P (with 0^0 = 1, so the power-0 block is all ones). Moment
aggregation averages the lifts of a list of vectors; the baseline averages
the raw vectors. Inputs in the training path are later unit-normalized, so
powers shrink, but non-finite results anywhere are hard errors.
"""

from typing import Sequence

import numpy as np

from . import kernels
from .errors import AggregationError

DEFAULT_MAX_POWER = 3


def moment_lift(v, max_power: int = DEFAULT_MAX_POWER) -> np.ndarray:
    """concat(v^0, v^1, ..., v^max_power), element-wise powers."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise AggregationError("moment_lift expects a 1-d vector")
    if max_power < 0:
        raise AggregationError("max_power must be >= 0")
    if not np.isfinite(v).all():
        raise AggregationError("non-finite element in input vector")
    out = kernels.lift(v, max_power)
    if not np.isfinite(out).all():
        raise AggregationError("power block overflowed to a non-finite value")
    return out


def _stack(vectors: Sequence) -> np.ndarray:
    if len(vectors) == 0:
        raise AggregationError("empty aggregation set")
    rows = [np.asarray(v, dtype=np.float64) for v in vectors]
    dim = rows[0].shape
    for r in rows[1:]:
        if r.shape != dim:
            raise AggregationError(f"mixed dimensions in aggregation set: {r.shape[0]} vs {dim[0]}")
    mat = np.stack(rows)
    if not np.isfinite(mat).all():
        raise AggregationError("non-finite element in aggregation set")
    return mat


def agg_moments(vectors: Sequence, max_power: int = DEFAULT_MAX_POWER) -> np.ndarray:
    """Element-wise mean of the moment lifts of every vector in the list."""
    if max_power < 0:
        raise AggregationError("max_power must be >= 0")
    mat = _stack(vectors)
    out = kernels.lift_mean(mat, max_power)
    if not np.isfinite(out).all():
        raise AggregationError("power block overflowed to a non-finite value")
    return out


def agg_mean(vectors: Sequence) -> np.ndarray:
    """Element-wise mean of the raw vectors (the baseline aggregation)."""
    mat = _stack(vectors)
    return np.mean(mat, axis=0)
