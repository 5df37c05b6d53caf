"""Central finite differences for checking analytic gradients."""
from __future__ import annotations

from typing import Callable, Mapping

import numpy as np


def relative_error(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)
    return np.abs(a - b) / denom


def numerical_gradients(
    loss: Callable[[], float],
    arrays: Mapping[str, np.ndarray],
    eps: float = 1e-3,
    order: int = 4,
) -> dict[str, np.ndarray]:
    """Perturb every entry of every array in place and difference ``loss()``.

    ``order=2`` is the plain two-point central difference; ``order=4`` uses
    the five-point central stencil, whose O(eps**4) truncation error keeps
    near-zero gradient entries checkable at eps=1e-3. Arrays are restored
    afterwards. Use float64 arrays; float32 rounding swamps a 1e-3 step.
    """
    if order not in (2, 4):
        raise ValueError("order must be 2 or 4")
    grads = {}
    for name, arr in arrays.items():
        g = np.zeros(arr.shape, dtype=np.float64)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = loss()
            flat[i] = orig - eps
            down = loss()
            if order == 2:
                gflat[i] = (up - down) / (2 * eps)
            else:
                flat[i] = orig + 2 * eps
                up2 = loss()
                flat[i] = orig - 2 * eps
                down2 = loss()
                gflat[i] = (8 * (up - down) - (up2 - down2)) / (12 * eps)
            flat[i] = orig
        grads[name] = g
    return grads


def max_relative_error(analytic: Mapping[str, np.ndarray], numeric: Mapping[str, np.ndarray]) -> float:
    worst = 0.0
    for name, num in numeric.items():
        worst = max(worst, float(relative_error(analytic[name], num).max(initial=0.0)))
    return worst
