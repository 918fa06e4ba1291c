"""Finite-difference gradient oracle.

Central differences over flat parameter vectors; the analytic side of every
gradient test in the suite is compared against this and nothing else.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import NumericError
from .optim import Parameter


def finite_diff_grad(f: Callable[[np.ndarray], float], x: np.ndarray,
                     h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar f at x, one coordinate at a time."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(f(x))
        flat[i] = orig - h
        fm = float(f(x))
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericError("objective returned a non-finite value")
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def max_rel_error(analytic: np.ndarray, numeric: np.ndarray,
                  atol: float = 1e-7) -> float:
    """Worst-coordinate relative error with an absolute floor for tiny grads."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1.0)
    err = np.abs(analytic - numeric)
    rel = np.where(err <= atol, 0.0, err / denom)
    return float(rel.max()) if rel.size else 0.0


def check_parameter_grads(loss_fn: Callable[[], "object"],
                          params: Sequence[Parameter],
                          h: float = 1e-5, tol: float = 1e-4) -> float:
    """Compare backprop gradients of loss_fn() against finite differences.

    loss_fn must rebuild the graph from the current parameter values on each
    call.  Returns the worst relative error across all parameters and raises
    AssertionError beyond `tol`.
    """
    for p in params:
        p.zero_grad()
    loss = loss_fn()
    loss.backward()
    analytic = {p.name: (p.grad.copy() if p.grad is not None
                         else np.zeros_like(p.data)) for p in params}

    worst = 0.0
    for p in params:
        def objective(values: np.ndarray, p=p) -> float:
            saved = p.data.copy()
            p.data[...] = values
            out = float(loss_fn().data)
            p.data[...] = saved
            return out

        numeric = finite_diff_grad(objective, p.data, h=h)
        err = max_rel_error(analytic[p.name], numeric)
        if err > tol:
            raise AssertionError(
                f"gradient mismatch for {p.name}: rel err {err:.3e} > {tol:.0e}")
        worst = max(worst, err)
    return worst
