"""
AdamW with decoupled weight decay and the step-decay learning-rate schedule.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict

import numpy as np


@dataclass
class ParamStore:
    """Named parameters with their AdamW moment buffers."""
    params: Dict[str, np.ndarray]
    exp_avg: Dict[str, np.ndarray] = field(default_factory=dict)
    exp_avg_sq: Dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    def __post_init__(self):
        for name, value in self.params.items():
            self.exp_avg.setdefault(name, np.zeros_like(value))
            self.exp_avg_sq.setdefault(name, np.zeros_like(value))


def adamw_step(store: ParamStore, grads: Dict[str, np.ndarray], lr: float,
               beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
               weight_decay: float = 0.01) -> ParamStore:
    """
    In-place AdamW update:
        p ← p·(1 - lr·wd) - lr·m̂/(√v̂ + eps)
    Parameters without a gradient entry are decayed only.
    """
    store.step += 1
    bias1 = 1.0 - beta1**store.step
    bias2 = 1.0 - beta2**store.step
    for name, p in store.params.items():
        g = grads.get(name)
        if g is not None and g.shape != p.shape:
            raise ValueError(f"Gradient for {name} has shape {g.shape}, parameter {p.shape}")
        p *= 1.0 - lr * weight_decay
        if g is None:
            continue
        m = store.exp_avg[name]
        v = store.exp_avg_sq[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / bias1) / (np.sqrt(v / bias2) + eps)
    logging.debug("adamw step %d, lr %.3e", store.step, lr)
    return store


def lr_schedule(epoch: int, base_lr: float, decay: float = 0.6, every: int = 30) -> float:
    """base_lr · decay^⌊epoch/every⌋."""
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    return base_lr * decay ** (epoch // every)
