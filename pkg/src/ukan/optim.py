"""Optimizers and the exponential learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError
from .tensor import Tensor


def _check(p: Tensor, g: np.ndarray):
    if p.values.shape != g.shape:
        raise ContractError(f"gradient shape {g.shape} != parameter shape {p.values.shape}")


def sgd_step(params: list[Tensor], grads: list[np.ndarray], lr: float) -> None:
    for p, g in zip(params, grads):
        _check(p, g)
        p.values -= lr * g


@dataclass
class AdamState:
    m: dict[int, np.ndarray] = field(default_factory=dict)
    v: dict[int, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(params: list[Tensor], grads: list[np.ndarray], state: AdamState,
              lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8, weight_decay: float = 0.0) -> None:
    """One Adam update with coupled-L2 decay (decay folded into the gradient
    before the moment updates)."""
    state.t += 1
    t = state.t
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for p, g in zip(params, grads):
        _check(p, g)
        if weight_decay:
            g = g + weight_decay * p.values
        key = p.node_id
        m = state.m.get(key)
        if m is None:
            m = state.m[key] = np.zeros_like(p.values)
            state.v[key] = np.zeros_like(p.values)
        v = state.v[key]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p.values -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


@dataclass(frozen=True)
class LrSchedule:
    lr0: float
    decay_rate: float = 1.0
    min_lr: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.decay_rate <= 1.0):
            raise ContractError(f"decay rate must be in (0, 1], got {self.decay_rate}")
        if self.min_lr < 0 or self.min_lr > self.lr0:
            raise ContractError(f"min_lr must be in [0, lr0], got {self.min_lr}")


def lr_at(schedule: LrSchedule, t: int) -> float:
    return max(schedule.min_lr, schedule.lr0 * schedule.decay_rate ** t)
