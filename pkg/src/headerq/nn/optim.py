from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class OptimizerState:
    """Velocity buffers for SGD with momentum: ``v <- mu*v - lr*g; w <- w + v``."""

    lr: float
    momentum: float = 0.9
    velocity: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")


def sgd_momentum_step(params: dict, grads: dict, state: OptimizerState):
    """Update ``params`` in place and return ``(params, state)``."""
    if params.keys() != grads.keys():
        raise ValueError("params and grads name different tensors")
    for name, w in params.items():
        g = grads[name]
        if g.shape != w.shape:
            raise ValueError(f"{name}: gradient shape {g.shape} != parameter {w.shape}")
        v = state.velocity.get(name)
        if v is None:
            v = state.velocity[name] = np.zeros_like(w)
        elif v.shape != w.shape:
            raise ValueError(f"{name}: velocity shape {v.shape} != parameter {w.shape}")
        v *= state.momentum
        v -= state.lr * g
        w += v
    return params, state
