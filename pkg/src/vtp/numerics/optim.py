"""Parameter containers, initialization and the Adam optimizer."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor, default_dtype


@dataclass
class AdamConfig:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("AdamConfig: lr must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("AdamConfig: betas must lie in [0, 1)")
        if self.eps <= 0:
            raise ValueError("AdamConfig: eps must be positive")


class ParamStore:
    """Named parameter tensors plus per-parameter Adam moments."""

    def __init__(self):
        self.params: dict[str, Tensor] = {}
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self.step: int = 0

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self.params:
            raise ValueError(f"duplicate parameter {name!r}")
        t = Tensor(np.asarray(value, dtype=default_dtype()), requires_grad=True)
        self.params[name] = t
        self._m[name] = np.zeros_like(t.data)
        self._v[name] = np.zeros_like(t.data)
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def names(self) -> list[str]:
        return list(self.params)

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = None

    def grads(self) -> dict[str, np.ndarray]:
        """Collect gradients accumulated by a backward pass."""
        out = {}
        for name, t in self.params.items():
            if t.grad is None:
                raise ValueError(f"parameter {name!r} has no gradient")
            out[name] = t.grad
        return out

    def set_trainable(self, trainable: bool) -> None:
        for t in self.params.values():
            t.requires_grad = trainable

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: t.data for name, t in self.params.items()}


def adam_step(store: ParamStore, grads: dict[str, np.ndarray], cfg: AdamConfig) -> None:
    """One bias-corrected Adam update over every parameter in the store."""
    for name in store.params:
        if name not in grads:
            raise ValueError(f"missing gradient for parameter {name!r}")
    store.step += 1
    t = store.step
    bc1 = 1.0 - cfg.beta1 ** t
    bc2 = 1.0 - cfg.beta2 ** t
    for name, p in store.params.items():
        g = np.asarray(grads[name], dtype=p.data.dtype)
        if g.shape != p.data.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter {name!r} {p.data.shape}")
        m = store._m[name]
        v = store._v[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * g * g
        mhat = m / bc1
        vhat = v / bc2
        p.data = p.data - cfg.lr * mhat / (np.sqrt(vhat) + cfg.eps)


def truncated_normal(rng: np.random.Generator, shape, std: float = 0.05) -> np.ndarray:
    """Normal(0, std) with draws beyond 2 std resampled."""
    out = rng.normal(0.0, std, size=shape)
    bad = np.abs(out) > 2.0 * std
    while bad.any():
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > 2.0 * std
    return out.astype(default_dtype())
