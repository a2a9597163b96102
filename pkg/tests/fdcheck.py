"""Independent finite-difference gradient oracle used by the tests.

Central differences in double precision. Kept deliberately separate from the
library's own backward pass so the two routes never share code.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

from ctxnmt.tensor import Tensor


def numerical_grad(f: Callable[[], Tensor], wrt: Tensor, h: float = 1e-6) -> np.ndarray:
    """d f / d wrt by central differences, perturbing one entry at a time."""
    grad = np.zeros_like(wrt.data)
    flat = wrt.data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(f().data)
        flat[i] = orig - h
        fm = float(f().data)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def max_rel_err(a: np.ndarray, b: np.ndarray, floor: float = 1e-6) -> float:
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


def check_grads(
    f: Callable[[], Tensor],
    params: dict[str, Tensor],
    tol: float = 1e-4,
    h: float = 1e-6,
) -> float:
    """Backprop f once, then compare every parameter gradient against central
    finite differences. Returns the worst relative error seen."""
    for p in params.values():
        p.grad = None
    loss = f()
    loss.backward()
    worst = 0.0
    for name, p in params.items():
        ad = p.grad if p.grad is not None else np.zeros_like(p.data)
        fd = numerical_grad(f, p, h=h)
        err = max_rel_err(ad, fd)
        assert err <= tol, f"gradient mismatch for {name}: rel err {err:.3e} > {tol}"
        worst = max(worst, err)
    return worst
