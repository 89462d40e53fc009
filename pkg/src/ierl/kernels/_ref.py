"""Pure-Python reference backend for the hot numeric kernels.

Every loop mirrors the compiled backend operation for operation, in the same
order, so the two backends produce bit-identical results.
"""

import math

import numpy as np

NAME = "python"


def lift(v, max_power):
    """Concatenated element-wise powers v^0 .. v^max_power.

    Power blocks are built by repeated multiplication (block k = block k-1 * v),
    which fixes both the 0^0 = 1 convention and the exact rounding sequence.
    """
    d = v.shape[0]
    out = np.empty((max_power + 1) * d, dtype=np.float64)
    out[:d] = 1.0
    for k in range(1, max_power + 1):
        np.multiply(out[(k - 1) * d : k * d], v, out=out[k * d : (k + 1) * d])
    return out


def lift_mean(mat, max_power):
    """Element-wise mean of the lifts of each row of `mat` (shape n x d)."""
    n = mat.shape[0]
    width = (max_power + 1) * mat.shape[1]
    acc = np.zeros(width, dtype=np.float64)
    for r in range(n):
        acc += lift(mat[r], max_power)
    acc /= float(n)
    return acc


def prox_solve(d, target, alpha0, lr, l1, tol, max_iters):
    """Proximal gradient descent on ||target - alpha*d||^2 + l1*||alpha||_1.

    Returns (alpha, objective, steps, diverged_step); diverged_step is -1 on a
    clean run and the offending iteration number when the objective left the
    finite range.
    """
    n = d.shape[0]
    dv = d.tolist()
    tv = target.tolist()
    a = alpha0.tolist()
    thr = lr * l1

    def objective(vals):
        q = 0.0
        s = 0.0
        for k in range(n):
            r = tv[k] - vals[k] * dv[k]
            q += r * r
            s += abs(vals[k])
        return q + l1 * s

    g_prev = objective(a)
    if not math.isfinite(g_prev):
        return np.array(a, dtype=np.float64), g_prev, 0, 0

    steps = 0
    diverged = -1
    for step in range(1, max_iters + 1):
        for k in range(n):
            grad = -2.0 * dv[k] * (tv[k] - a[k] * dv[k])
            x = a[k] - lr * grad
            if x > thr:
                a[k] = x - thr
            elif x < -thr:
                a[k] = x + thr
            else:
                a[k] = 0.0
        g_new = objective(a)
        steps = step
        if not math.isfinite(g_new):
            diverged = step
            g_prev = g_new
            break
        dec = g_prev - g_new
        g_prev = g_new
        # |dec|: an increasing objective (rate above the safe bound) must keep
        # running so the non-finite check can flag the divergence
        if abs(dec) < tol:
            break
    return np.array(a, dtype=np.float64), g_prev, steps, diverged
