"""Adam with bias correction, plus learning-rate schedules."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .tensor import ShapeError, Tensor


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        for name, val in (("lr", self.lr), ("beta1", self.beta1), ("beta2", self.beta2), ("eps", self.eps)):
            if not val > 0:
                raise ValueError(f"{name} must be positive, got {val}")


def adam_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray | None],
    state: AdamState,
) -> tuple[dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update.

    Parameters whose gradient is missing (or ``None``) are left alone and
    their moments are not touched. Arrays in ``params`` are updated in place
    and also returned.
    """
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    out = dict(params)
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != p.shape:
            raise ShapeError(name, f"grad {g.shape} does not match param {p.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p, dtype=np.float64)
            state.v[name] = np.zeros_like(p, dtype=np.float64)
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * np.square(g, dtype=np.float64)
        update = state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        p -= update.astype(p.dtype)
        out[name] = p
    return out, state


class Adam:
    """Stateful wrapper over :func:`adam_step` for named ``Tensor`` params."""

    def __init__(self, params: Mapping[str, Tensor], lr=1e-4, betas=(0.9, 0.999), eps=1e-8):
        self.params = dict(params)
        self.state = AdamState(lr=lr, beta1=betas[0], beta2=betas[1], eps=eps)

    @property
    def lr(self) -> float:
        return self.state.lr

    @lr.setter
    def lr(self, value: float) -> None:
        self.state.lr = value

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self) -> None:
        arrays = {k: p.data for k, p in self.params.items()}
        grads = {k: p.grad for k, p in self.params.items()}
        adam_step(arrays, grads, self.state)


def parse_schedule(spec: str):
    """Turn a schedule string into ``epoch -> multiplier``.

    ``constant``; ``step:<epoch>:<factor>`` (one drop); and
    ``multistep:<m1,m2,...>:<gamma>`` (multiply by gamma at each milestone).
    """
    parts = spec.split(":")
    kind = parts[0]
    if kind == "constant" and len(parts) == 1:
        return lambda epoch: 1.0
    if kind == "step" and len(parts) == 3:
        at, factor = int(parts[1]), float(parts[2])
        return lambda epoch: factor if epoch >= at else 1.0
    if kind == "multistep" and len(parts) == 3:
        milestones = sorted(int(m) for m in parts[1].split(",") if m)
        gamma = float(parts[2])
        return lambda epoch: gamma ** sum(1 for m in milestones if epoch >= m)
    raise ValueError(f"bad schedule {spec!r}")
