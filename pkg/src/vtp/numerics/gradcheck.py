"""Finite-difference gradient checking against the reverse-mode tape."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


def grad_check(fn, tensors: list[Tensor], h: float = 1e-3, max_coords: int = 24,
               rng: np.random.Generator | None = None) -> float:
    """Compare reverse-mode gradients of ``fn(tensors)`` to central differences.

    ``fn`` must return a scalar Tensor.  For each input tensor up to
    ``max_coords`` coordinates are probed (all of them when the tensor is
    small).  Returns the maximum relative error, where the error of a tensor
    is ``max|g_ad - g_fd| / (max|g_ad| + max|g_fd| + tiny)``.
    """
    if not 1e-6 <= h <= 1e-1:
        raise ValueError(f"grad_check: step {h} out of range")
    rng = rng or np.random.default_rng(0)
    for t in tensors:
        t.grad = None
        t.requires_grad = True
    out = fn(tensors)
    if out.size != 1:
        raise ValueError("grad_check: fn must return a scalar")
    out.backward()
    worst = 0.0
    for t in tensors:
        g_ad = t.grad if t.grad is not None else np.zeros_like(t.data)
        n = t.data.size
        if n <= max_coords:
            coords = np.arange(n)
        else:
            coords = rng.choice(n, size=max_coords, replace=False)
        flat = t.data.reshape(-1)
        g_fd = np.zeros(len(coords), dtype=np.float64)
        for j, idx in enumerate(coords):
            orig = flat[idx]
            flat[idx] = orig + h
            fp = float(fn(tensors).data)
            flat[idx] = orig - h
            fm = float(fn(tensors).data)
            flat[idx] = orig
            g_fd[j] = (fp - fm) / (2.0 * h)
        g_ad_sel = g_ad.reshape(-1)[coords].astype(np.float64)
        scale = float(np.abs(g_ad_sel).max(initial=0.0) + np.abs(g_fd).max(initial=0.0)) + 1e-12
        err = float(np.abs(g_ad_sel - g_fd).max(initial=0.0)) / scale
        worst = max(worst, err)
    return worst
